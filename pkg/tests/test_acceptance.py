"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` (or ``python3
tests/test_acceptance.py``).  Criteria 7-9 share one calibrated sweep: five
seeds at each of three mixing ratios, which takes roughly 20-30 minutes.
"""

import json
import sys
import time

import numpy as np
import pytest

from pandemic_marl import oracles
from pandemic_marl.cli import main
from pandemic_marl.evaluation import load_policy, run_episode, sweep, type_wise
from pandemic_marl.learner import load_train_config
from pandemic_marl.scenario import outbreak_scenario

ALPHAS = (0.01, 0.4, 10.0)


def report(capsys, number, passed, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if passed else 'FAIL'} - {detail}", flush=True)
    assert passed, detail


# -- 1-6: exact values and oracle suites ----------------------------------------

def test_criterion_1_fixed_policy_mean_action(tmp_path, capsys):
    start = time.perf_counter()
    code = main(["simulate", "--policy", "fixed", "--p-fix", "0.5", "--output-dir", str(tmp_path)])
    seconds = time.perf_counter() - start
    p = json.loads((tmp_path / "simulate_fixed_metrics.json").read_text())["metrics"]["mean_action"]
    report(capsys, 1, code == 0 and p == 0.5 and seconds < 5,
           f"p_bar={p!r} in {seconds:.2f} s")


def test_criterion_2_conservation(capsys):
    r = oracles.check_conservation(steps=1000, n=5)
    report(capsys, 2, r["passed"] and r["seconds"] < 10,
           f"max rel error {r['max_rel_error']:.2e}, {r['negative_states']} negative states, "
           f"{r['seconds']:.2f} s")


def test_criterion_3_transmission_oracle(capsys):
    r = oracles.check_transmission(instances=200, n=3, tol=1e-12)
    report(capsys, 3, r["passed"] and r["seconds"] < 10,
           f"max rel error {r['max_rel_error']:.2e}, {r['seconds']:.2f} s")


def test_criterion_4_ledger_equivalence(capsys):
    r = oracles.check_ledger(histories=100, length=200, tol=1e-12)
    report(capsys, 4, r["passed"], f"max rel error {r['max_rel_error']:.2e}")


def test_criterion_5_gradient_check(capsys):
    r = oracles.check_gradients(networks=20, tol=1e-4)
    worst = max(r["max_rel_error"].values())
    report(capsys, 5, r["passed"],
           f"worst per-coordinate rel error {worst:.2e} over {sorted(r['max_rel_error'])}")


def test_criterion_6_single_agent_reduction(capsys):
    from pandemic_marl.learner import IRCLearner, TrainConfig, reference_ddpg_update
    from pandemic_marl.nn import Adam

    config = TrainConfig(alpha=0.0, encoder_units=8, hidden=(16,), batch_size=16)
    ln = IRCLearner(1, 12, config, np.random.default_rng(7))
    actor, critic = ln.actor.copy(), ln.local_critics.net.copy()
    actor_t, critic_t = ln.actor_target.copy(), ln.local_target.net.copy()
    a_opt, c_opt = Adam(actor.n_params, config.actor_lr), Adam(critic.n_params, config.critic_lr)
    rng = np.random.default_rng(7)
    local = -rng.uniform(size=(16, 1))
    batch = {"obs": rng.normal(size=(16, 1, 12)), "actions": rng.uniform(size=(16, 1, 1)),
             "local_rewards": local, "global_rewards": local[:, 0],
             "next_obs": rng.normal(size=(16, 1, 12)), "done": np.zeros(16)}
    ln.update(batch)
    reference_ddpg_update(actor, critic, actor_t, critic_t, a_opt, c_opt, batch,
                          config.discount, config.tau, config.reward_scale)
    same = all(np.array_equal(a.params, b.params) for a, b in (
        (ln.actor, actor), (ln.local_critics.net, critic),
        (ln.actor_target, actor_t), (ln.local_target.net, critic_t)))
    report(capsys, 6, same, "actor, critic and both targets bitwise equal after one update")


# -- 7-9: calibrated sweep --------------------------------------------------------

@pytest.fixture(scope="module")
def calibrated(tmp_path_factory):
    scenario = outbreak_scenario()
    config = load_train_config()
    out = tmp_path_factory.mktemp("acceptance_sweep")
    start = time.perf_counter()
    rows = sweep(ALPHAS, config, scenario, out)
    seconds = time.perf_counter() - start
    types = {}
    for alpha in ALPHAS:
        policy, _ = load_policy(out / f"irc_alpha_{alpha:g}.npz")
        types[alpha] = type_wise(run_episode(policy, scenario), scenario)
    return {"rows": rows, "config": config, "types": types, "seconds": seconds}


def _irc(rows):
    return {r["alpha"]: r for r in rows if r["model"] == "IRC"}


@pytest.mark.slow
def test_criterion_7_baseline_ordering(calibrated, capsys):
    rows, config = calibrated["rows"], calibrated["config"]
    base = {r["model"]: r["mean_global_reward"] for r in rows if r["model"] != "IRC"}
    irc = _irc(rows)
    ok = (len(config.seeds) >= 5 and config.episodes <= 500
          and calibrated["seconds"] <= 2 * 3600
          and all(irc[a]["status"] == "ok" for a in ALPHAS)
          and all(irc[a]["mean_global_reward"] > max(base.values()) for a in ALPHAS))
    detail = ", ".join(f"alpha={a:g}: {irc[a]['mean_global_reward']:.4g}" for a in ALPHAS)
    report(capsys, 7, ok, f"IRC {detail}; Fixed {base['Fixed']:.4g}, "
                          f"Threshold {base['Threshold']:.4g}; "
                          f"{len(config.seeds)} seeds x {config.episodes} episodes, "
                          f"{calibrated['seconds'] / 60:.1f} min")


def pooled_std(irc, key):
    """Square root of the mean across alphas of the per-alpha seed variance."""
    variances = [np.var([s[key] for s in irc[a]["seed_metrics"]], ddof=1) for a in ALPHAS]
    return float(np.sqrt(np.mean(variances)))


@pytest.mark.slow
def test_criterion_8_collaboration_trend(calibrated, capsys):
    irc = _irc(calibrated["rows"])
    r = [irc[a]["mean_global_reward"] for a in ALPHAS]
    h = [irc[a]["mean_hospitalized"] for a in ALPHAS]
    band_r, band_h = pooled_std(irc, "mean_global_reward"), pooled_std(irc, "mean_hospitalized")
    ok = (all(r[k + 1] >= r[k] - band_r for k in range(2))
          and all(h[k + 1] <= h[k] + band_h for k in range(2)))
    report(capsys, 8, ok, f"R_g {[f'{v:.4g}' for v in r]} (band {band_r:.3g}); "
                          f"H {[f'{v:.4g}' for v in h]} (band {band_h:.3g})")


@pytest.mark.slow
def test_criterion_9_type_wise_pattern(calibrated, capsys):
    low, high = calibrated["types"][0.01], calibrated["types"][10.0]
    p_hl, p_lh = low.mean_action[0, 1], low.mean_action[1, 0]      # H+L- and H-L+
    ok = p_hl > p_lh and high.action_spread < low.action_spread
    report(capsys, 9, ok, f"alpha=0.01: p(H+L-)={p_hl:.3f} vs p(H-L+)={p_lh:.3f}; "
                          f"spread {low.action_spread:.3f} -> {high.action_spread:.3f} at alpha=10")


# -- 10: determinism --------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path, capsys):
    cfg = tmp_path / "train.yaml"
    cfg.write_text("train:\n  seeds: [0, 1]\n  episodes: 3\n  eval_every: 1\n")
    runs = [
        ["simulate", "--policy", "fixed"],
        ["simulate", "--policy", "threshold"],
        ["train", "--config", str(cfg), "--alpha", "0.4"],
        ["oracle-check"],
    ]
    files = {"simulate": None, "train": "train_metrics.json", "oracle-check": "oracle_check.json"}
    identical = []
    for args in runs:
        blobs = []
        for rep in range(2):
            out = tmp_path / f"{args[0]}_{len(identical)}_{rep}"
            assert main([*args, "--output-dir", str(out)]) == 0
            name = files[args[0]] or f"simulate_{args[2]}_metrics.json"
            blobs.append((out / name).read_bytes())
        identical.append(blobs[0] == blobs[1])
    report(capsys, 10, all(identical),
           f"{sum(identical)}/{len(runs)} repeated runs wrote byte-identical metric JSON")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
