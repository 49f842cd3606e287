import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pandemic_marl.errors import ConfigurationError, ContractViolation
from pandemic_marl.evaluation import (
    TABLE_COLUMNS,
    Trajectory,
    compute_metrics,
    metrics_document,
    run_episode,
    sweep,
    type_wise,
    write_json,
    write_table_csv,
    write_timeseries_csv,
)
from pandemic_marl.learner import TrainConfig
from pandemic_marl.policies import FixedPolicy, ThresholdPolicy

from conftest import small_scenario, typed_scenario


def hand_trajectory():
    """Two regions, three steps, every metric computable by hand."""
    T, n = 3, 2
    states = np.zeros((T, n, 4))
    states[:, 0, 2] = [1, 2, 3]
    states[:, 1, 2] = [0, 4, 2]
    states[:, :, 0] = 100
    demand = np.tile(np.array([[0.0, 10.0], [20.0, 0.0]]), (T, 1, 1))
    actions = np.ones((T, n, n))
    actions[1, 0, 1], actions[1, 1, 0] = 0.5, 0.0
    actions[2, 0, 1], actions[2, 1, 0] = 0.0, 1.0
    local = np.array([[-0.5, -0.5], [-1.0, -1.0], [-2.0, -1.0]])
    z = np.zeros((T, n))
    return Trajectory(states, demand, demand * actions, actions, local, local.sum(axis=1),
                      z, z, z, meta={"seed": 0})


def test_hand_built_trajectory_metrics():
    rep = compute_metrics(hand_trajectory())
    assert rep.mean_global_reward == -2.0
    assert rep.mean_hospitalized == 4.0 and rep.max_hospitalized == 6.0
    assert rep.mean_action == 55 / 90                  # (30 + 5 + 20) / 90
    assert rep.per_region[0]["mean_action"] == pytest.approx(2 / 3, abs=1e-15)
    assert rep.per_region[1]["mean_action"] == 0.5
    assert rep.per_region[1]["max_hospitalized"] == 4.0


def test_empty_trajectory_is_a_contract_violation():
    t = hand_trajectory()
    empty = Trajectory(*(getattr(t, k)[:0] for k in ("states", "demand", "allowed", "actions",
                                                   "local_rewards", "global_rewards",
                                                   "pandemic_cost", "mobility_cost",
                                                   "lockdown_penalty")))
    with pytest.raises(ContractViolation):
        compute_metrics(empty)


def test_open_infection_free_episode_has_zero_rewards():
    sc = small_scenario(k_h=0.0)
    rep = compute_metrics(run_episode(FixedPolicy(1.0), sc))
    assert rep.mean_global_reward == 0.0
    assert rep.mean_hospitalized == 0.0 and rep.max_hospitalized == 0.0
    assert rep.mean_action == 1.0


def test_fixed_half_gives_exactly_half(outbreak):
    rep = compute_metrics(run_episode(FixedPolicy(0.5), outbreak))
    assert rep.mean_action == 0.5


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0))
def test_constant_policy_mean_action_is_exact(p):
    sc = typed_scenario(horizon=12)
    rep = compute_metrics(run_episode(FixedPolicy(p), sc))
    assert rep.mean_action == p
    assert all(r["mean_action"] == p for r in rep.per_region)


def test_threshold_policy_blocks_at_least_once():
    sc = typed_scenario(horizon=40, infected=100.0)
    traj = run_episode(ThresholdPolicy(1.0, 168.0, sc), sc)
    assert np.any(traj.actions == 0.0)
    assert compute_metrics(traj).mean_action < 1.0


def test_rollouts_are_repeatable(tmp_path):
    sc = typed_scenario()
    a = run_episode(ThresholdPolicy(1.0, 168.0, sc), sc, seed=3)
    b = run_episode(ThresholdPolicy(1.0, 168.0, sc), sc, seed=3)
    a.save(tmp_path / "a.npz")
    b.save(tmp_path / "b.npz")
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_metrics_from_saved_trajectory_are_identical(tmp_path):
    sc = typed_scenario()
    traj = run_episode(FixedPolicy(0.3), sc)
    loaded = Trajectory.load(traj.save(tmp_path / "t.npz"))
    docs = []
    for t, name in ((traj, "x.json"), (loaded, "y.json")):
        docs.append(write_json(tmp_path / name,
                               metrics_document(compute_metrics(t), t)).read_bytes())
    assert docs[0] == docs[1]


def test_per_region_breakdowns_are_consistent():
    sc = typed_scenario(horizon=40, infected=100.0)
    rep = compute_metrics(run_episode(ThresholdPolicy(1.0, 168.0, sc), sc))
    weights = np.array([r["total_demand_in"] for r in rep.per_region])
    p = np.array([r["mean_action"] for r in rep.per_region])
    assert abs(weights @ p / weights.sum() - rep.mean_action) <= 1e-9
    h = sum(r["mean_hospitalized"] for r in rep.per_region)
    assert abs(h - rep.mean_hospitalized) <= 1e-9 * max(1.0, rep.mean_hospitalized)


def test_policy_count_must_match_regions():
    with pytest.raises(ConfigurationError):
        run_episode([FixedPolicy(1.0)] * 2, small_scenario())


# -- type-wise ------------------------------------------------------------------

def test_type_cells_map_to_the_right_regions():
    sc = typed_scenario()
    # a region's inbound share is set by the senders, so make senders uniform per column
    traj = run_episode(FixedPolicy(1.0), sc)
    for j, v in enumerate((0.1, 0.2, 0.3, 0.4), start=1):
        traj.actions[:, :, j] = v
    tw = type_wise(traj, sc)
    np.testing.assert_array_equal(tw.mean_action, [[0.1, 0.2], [0.3, 0.4]])
    assert tw.action_spread == pytest.approx(0.3)
    assert [v["type"] for v in tw.radar] == ["H+L+", "H+L-", "H-L+", "H-L-"]


def test_all_open_type_matrix_is_ones():
    sc = typed_scenario()
    tw = type_wise(run_episode(FixedPolicy(1.0), sc), sc)
    np.testing.assert_array_equal(tw.mean_action, np.ones((2, 2)))
    assert tw.action_spread == 0.0
    assert set(tw.temporal) == {"H+L+", "H+L-", "H-L+", "H-L-"}


# -- files ------------------------------------------------------------------------

def test_timeseries_and_table_files(tmp_path):
    sc = typed_scenario()
    traj = run_episode(FixedPolicy(0.5), sc)
    rep = compute_metrics(traj)
    path = write_timeseries_csv(tmp_path / "ts.csv", traj, rep, type_wise(traj, sc))
    lines = path.read_text().splitlines()
    assert len(lines) == traj.n_steps + 1
    rows = [{"model": "Fixed", "parameter": "p_fix=0.5", "status": "ok", **rep.summary()}]
    table = write_table_csv(tmp_path / "table.csv", rows).read_text().splitlines()
    assert table[0].split(",") == list(TABLE_COLUMNS)


def test_sweep_without_alphas_lists_baselines(tmp_path):
    rows = sweep([], TrainConfig(), typed_scenario(), tmp_path)
    assert [r["model"] for r in rows] == ["Fixed", "Threshold"]
    assert rows[0]["mean_action"] == 0.5


def test_smoke_sweep_and_checkpoint_reuse(tmp_path):
    sc = typed_scenario()
    cfg = TrainConfig(seeds=(0,), episodes=2, encoder_units=4, hidden=(8,), batch_size=8,
                      warmup_transitions=4, eval_every=1)
    rows = sweep([0.01, 0.4, 10.0], cfg, sc, tmp_path)
    assert [r["model"] for r in rows] == ["Fixed", "Threshold", "IRC", "IRC", "IRC"]
    assert all(r["status"] == "ok" for r in rows)
    assert (tmp_path / "irc_alpha_0.4.npz").is_file()
    again = sweep([0.4], cfg.replace(episodes=0), sc, tmp_path)   # loads, does not retrain
    assert again[2]["mean_global_reward"] == rows[3]["mean_global_reward"]
    json.dumps(rows, default=float)
