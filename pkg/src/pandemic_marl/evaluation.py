"""Rollouts, metrics, type-wise analysis and the alpha sweep.

Reported figures:

* ``mean_global_reward``: time mean of the per-step global reward (raw,
  non-positive; no reporting offset is applied);
* ``mean_hospitalized`` / ``max_hospitalized``: mean and max over steps of
  the total hospitalized count across regions;
* ``mean_action``: total actual over total demanded inbound mobility.  It is
  evaluated in exact rational arithmetic from the demand and action arrays,
  so a constant action ``p`` reports exactly ``p``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from . import epidemic, nn
from .environment import Observation, PandemicEnv
from .errors import ConfigurationError, ContractViolation, PandemicMarlError
from .learner import Featurizer, TrainConfig, train
from .policies import FixedPolicy, ThresholdPolicy, joint_action
from .scenario import SCHEMA_VERSION, TYPE_LABELS, Scenario, scenario_from_dict

log = logging.getLogger(__name__)

H_ROWS = ("H+", "H-")
L_COLS = ("L+", "L-")


class TrainedPolicy:
    """Deterministic controller backed by a trained actor ensemble."""

    def __init__(self, actor: nn.RegionNet, featurizer: Featurizer, agents, fixed_action=1.0):
        self.actor = actor
        self.featurizer = featurizer
        self.agents = list(agents)
        self.fixed_action = float(fixed_action)
        self._cache: tuple[int, np.ndarray] | None = None

    def reset(self, scenario=None):
        self._cache = None

    def joint_action(self, observation: Observation) -> np.ndarray:
        key = id(observation)
        if self._cache is None or self._cache[0] != key:
            n = observation.n_regions
            joint = np.full((n, n), self.fixed_action)
            cols = self.actor(self.featurizer(observation)[None])[:, 0, :]
            joint[:, self.agents] = cols.T
            self._cache = (key, joint)
        return self._cache[1]

    def act(self, observation: Observation, region: int) -> np.ndarray:
        return self.joint_action(observation)[:, region].copy()

    def describe(self) -> dict:
        return {"policy": "trained", "agents": self.agents}


def load_policy(path) -> tuple[TrainedPolicy, dict]:
    """Trained controller and checkpoint metadata from a saved training run."""
    networks, meta = nn.load_checkpoint(path)
    try:
        actor = networks["actor"]
        policy = TrainedPolicy(actor, Featurizer.from_spec(meta["featurizer"]), meta["agents"],
                               meta["config"]["exempt_action"])
    except KeyError as exc:
        raise ConfigurationError(f"checkpoint lacks {exc}", str(path)) from None
    return policy, meta


# -- trajectories -----------------------------------------------------------

_ARRAYS = ("states", "demand", "allowed", "actions", "local_rewards", "global_rewards",
           "pandemic_cost", "mobility_cost", "lockdown_penalty")


@dataclass
class Trajectory:
    """Per-step record of one deterministic episode (``T`` steps, ``n`` regions)."""

    states: np.ndarray          # (T, n, 4) after each step
    demand: np.ndarray          # (T, n, n)
    allowed: np.ndarray         # (T, n, n)
    actions: np.ndarray         # (T, n, n), the joint action in force
    local_rewards: np.ndarray   # (T, n)
    global_rewards: np.ndarray  # (T,)
    pandemic_cost: np.ndarray   # (T, n)
    mobility_cost: np.ndarray   # (T, n)
    lockdown_penalty: np.ndarray  # (T, n)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.global_rewards.shape[0]

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(self.meta, sort_keys=True)),
                     **{k: getattr(self, k) for k in _ARRAYS})
        return path

    @classmethod
    def load(cls, path) -> "Trajectory":
        with np.load(path, allow_pickle=False) as data:
            return cls(**{k: data[k] for k in _ARRAYS}, meta=json.loads(str(data["meta"])))


def _reset(policies, scenario):
    for p in policies:
        if hasattr(p, "reset"):
            p.reset(scenario)


def run_episode(policies, scenario: Scenario, seed: int = 0) -> Trajectory:
    """Roll out ``policies`` (one per region, or one shared) without exploration."""
    env = PandemicEnv(scenario)
    single = not isinstance(policies, (list, tuple))
    pool = [policies] if single else list(policies)
    if not single and len(pool) != scenario.n_regions:
        raise ConfigurationError(f"expected {scenario.n_regions} policies, got {len(pool)}")
    _reset({id(p): p for p in pool}.values(), scenario)
    obs = env.reset(seed)
    parts = {k: [] for k in _ARRAYS}
    while not env.done:
        if single and hasattr(policies, "joint_action"):
            action = policies.joint_action(obs)
        else:
            action = joint_action(policies, obs)
        out = env.step(action)
        info = out.info
        period = len(info["steps"])
        parts["actions"].append(np.broadcast_to(info["action"], (period,) + info["action"].shape))
        for k in _ARRAYS:
            if k != "actions":
                parts[k].append(info[k])
        obs = out.observation
    traj = Trajectory(**{k: np.concatenate(v) for k, v in parts.items()})
    if single:
        desc = policies.describe() if hasattr(policies, "describe") else {"policy": "custom"}
    else:
        desc = {"policy": "per-region",
                "regions": [p.describe() if hasattr(p, "describe") else {"policy": "custom"}
                            for p in pool]}
    traj.meta = {"seed": int(seed), "policy": desc, "scenario": scenario.to_dict()}
    return traj


# -- metrics ----------------------------------------------------------------

def _exact_ratio(demand, action):
    """``sum(demand * action) / sum(demand)`` evaluated exactly, then rounded once."""
    d = np.asarray(demand, dtype=float).ravel()
    a = np.asarray(action, dtype=float).ravel()
    keep = d != 0
    d, a = d[keep], a[keep]
    if d.size == 0:
        return float("nan")
    # group identical (demand, action) pairs; trajectories repeat them heavily
    pairs, counts = np.unique(np.stack([d, a], axis=1), axis=0, return_counts=True)
    num = Fraction(0)
    den = Fraction(0)
    for (dv, av), c in zip(pairs.tolist(), counts.tolist()):
        fd = Fraction(dv) * c
        num += fd * Fraction(av)
        den += fd
    return float(num / den)


@dataclass
class MetricReport:
    mean_global_reward: float
    mean_hospitalized: float
    max_hospitalized: float
    mean_action: float
    per_region: list[dict]
    per_type: dict[str, dict]
    source_region: dict | None
    series: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def summary(self) -> dict:
        return {"mean_global_reward": self.mean_global_reward,
                "mean_hospitalized": self.mean_hospitalized,
                "max_hospitalized": self.max_hospitalized,
                "mean_action": self.mean_action}

    def to_dict(self) -> dict:
        return {**self.summary(), "per_region": self.per_region, "per_type": self.per_type,
                "source_region": self.source_region}


def compute_metrics(traj: Trajectory) -> MetricReport:
    if traj.n_steps == 0:
        raise ContractViolation("cannot compute metrics of an empty trajectory")
    sc = traj.meta.get("scenario", {})
    n = traj.states.shape[1]
    names = [r["name"] for r in sc.get("regions", [])] or [f"region{i}" for i in range(n)]
    types = [r.get("type", "") for r in sc.get("regions", [])] or [""] * n
    hosp = traj.states[:, :, epidemic.H]
    total_h = hosp.sum(axis=1)
    demand_in = traj.demand.sum(axis=1)
    allowed_in = traj.allowed.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_series = np.where(demand_in > 0, allowed_in / demand_in, np.nan)

    per_region = []
    for j in range(n):
        per_region.append({
            "region": names[j],
            "type": types[j],
            "mean_action": _exact_ratio(traj.demand[:, :, j], traj.actions[:, :, j]),
            "mean_hospitalized": float(hosp[:, j].mean()),
            "max_hospitalized": float(hosp[:, j].max()),
            "mean_local_reward": float(traj.local_rewards[:, j].mean()),
            "total_demand_in": float(demand_in[:, j].sum()),
        })
    per_type = {}
    for label in TYPE_LABELS:
        members = [r for r in per_region if r["type"] == label]
        if members:
            per_type[label] = {
                "regions": [r["region"] for r in members],
                "mean_action": float(np.mean([r["mean_action"] for r in members])),
                "mean_hospitalized": float(np.mean([r["mean_hospitalized"] for r in members])),
            }
    source = next((r for r in per_region if r["type"] == "source"), None)
    return MetricReport(
        mean_global_reward=float(traj.global_rewards.mean()),
        mean_hospitalized=float(total_h.mean()),
        max_hospitalized=float(total_h.max()),
        mean_action=_exact_ratio(traj.demand, traj.actions),
        per_region=per_region,
        per_type=per_type,
        source_region=source,
        series={"total_hospitalized": total_h, "hospitalized": hosp,
                "mean_action": p_series, "global_reward": traj.global_rewards},
    )


@dataclass
class TypeWiseReport:
    mean_action: np.ndarray          # 2x2, rows (H+, H-), cols (L+, L-)
    mean_hospitalized: np.ndarray    # 2x2
    radar: list[dict]                # one vertex per type
    temporal: dict[str, np.ndarray]  # type -> per-step inbound share

    @property
    def action_spread(self) -> float:
        """Max minus min of the four cell mean actions."""
        return float(np.nanmax(self.mean_action) - np.nanmin(self.mean_action))

    def to_dict(self) -> dict:
        return {"rows": list(H_ROWS), "cols": list(L_COLS),
                "mean_action": self.mean_action.tolist(),
                "mean_hospitalized": self.mean_hospitalized.tolist(),
                "action_spread": self.action_spread, "radar": self.radar}


def type_wise(traj: Trajectory, scenario: Scenario | None = None) -> TypeWiseReport:
    """2x2 tolerance-type matrices over the non-source regions."""
    if scenario is None:
        scenario = scenario_from_dict(traj.meta["scenario"])
    report = compute_metrics(traj)
    p_mat = np.full((2, 2), np.nan)
    h_mat = np.full((2, 2), np.nan)
    temporal, radar = {}, []
    for label in TYPE_LABELS:
        idx = [j for j, t in enumerate(scenario.region_types) if t == label]
        row, col = H_ROWS.index(label[:2]), L_COLS.index(label[2:])
        if not idx:
            continue
        cell = report.per_type[label]
        p_mat[row, col] = cell["mean_action"]
        h_mat[row, col] = cell["mean_hospitalized"]
        temporal[label] = np.nanmean(report.series["mean_action"][:, idx], axis=1)
        radar.append({"type": label, "mean_action": cell["mean_action"],
                      "mean_hospitalized": cell["mean_hospitalized"]})
    return TypeWiseReport(p_mat, h_mat, radar, temporal)


# -- output files -----------------------------------------------------------

def metrics_document(report: MetricReport, traj: Trajectory, extra: dict | None = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "metrics",
        "metrics": report.to_dict(),
        "policy": traj.meta.get("policy"),
        "seed": traj.meta.get("seed"),
        "scenario": traj.meta.get("scenario"),
    }
    if extra:
        doc.update(extra)
    return doc


def write_json(path, document) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, sort_keys=True, indent=2, allow_nan=True) + "\n")
    return path


def write_timeseries_csv(path, traj: Trajectory, report: MetricReport,
                         types: TypeWiseReport | None = None) -> Path:
    """One row per step: totals, then per-region hospitalized and inbound share."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [r["region"] for r in report.per_region]
    header = ["step", "global_reward", "total_hospitalized"]
    header += [f"hospitalized_{m}" for m in names] + [f"mean_action_{m}" for m in names]
    type_keys = list(types.temporal) if types else []
    header += [f"mean_action_{t}" for t in type_keys]
    s = report.series
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(traj.n_steps):
            row = [t, repr(float(s["global_reward"][t])), repr(float(s["total_hospitalized"][t]))]
            row += [repr(float(v)) for v in s["hospitalized"][t]]
            row += [repr(float(v)) for v in s["mean_action"][t]]
            row += [repr(float(types.temporal[k][t])) for k in type_keys]
            w.writerow(row)
    return path


TABLE_COLUMNS = ("model", "parameter", "mean_global_reward", "mean_hospitalized",
                 "max_hospitalized", "mean_action", "status")


def write_table_csv(path, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path


# -- experiments ------------------------------------------------------------

def baseline_policies(p_fix=0.5, h_threshold=1.0, l_threshold=168.0, scenario=None):
    return [
        ("Fixed", f"p_fix={p_fix:g}", FixedPolicy(p_fix)),
        ("Threshold", f"H_th={h_threshold:g},L_th={l_threshold:g}",
         ThresholdPolicy(h_threshold, l_threshold, scenario)),
    ]


def _row(model, parameter, report: MetricReport | None, status="ok", **extra):
    row = {"model": model, "parameter": parameter, "status": status}
    if report is not None:
        row.update(report.summary())
    else:
        row.update({k: float("nan") for k in TABLE_COLUMNS[2:6]})
    row.update(extra)
    return row


def seed_metrics(result, scenario: Scenario, seed: int = 0) -> list[dict]:
    """Evaluate every seed's best snapshot (for noise bands across seeds)."""
    out = []
    learner = result.learner
    saved = {k: v.params.copy() for k, v in learner.networks().items()}
    try:
        for s in result.seeds:
            if s.snapshot is None:
                continue
            for name, net in learner.networks().items():
                net.set_params(s.snapshot[name])
            rep = compute_metrics(run_episode(result.policy(), scenario, seed))
            out.append({"seed": s.seed, **rep.summary()})
    finally:
        for name, net in learner.networks().items():
            net.set_params(saved[name])
    return out


def sweep(alphas, config: TrainConfig, scenario: Scenario, output_dir=None, seed: int = 0,
          baselines=None, progress=None) -> list[dict]:
    """Comparison table: both baselines, then one trained row per alpha.

    With ``output_dir``, each alpha's checkpoint is written there and reused
    on later calls.  A failing cell is reported with ``status`` set to the
    error and NaN metrics; the other cells still run.
    """
    rows = []
    for model, parameter, policy in baselines or baseline_policies(scenario=scenario):
        rows.append(_row(model, parameter, compute_metrics(run_episode(policy, scenario, seed))))
    out_dir = Path(output_dir) if output_dir is not None else None
    for alpha in alphas:
        parameter = f"alpha={alpha:g}"
        try:
            ckpt = out_dir / f"irc_alpha_{alpha:g}.npz" if out_dir else None
            if ckpt is not None and ckpt.is_file():
                policy, meta = load_policy(ckpt)
                seeds = meta.get("seed_metrics", [])
            else:
                result = train(config.replace(alpha=float(alpha)), scenario)
                if result.best_seed is None:
                    raise PandemicMarlError("no seed produced an evaluated model")
                policy = result.policy()
                seeds = seed_metrics(result, scenario, seed)
                if ckpt is not None:
                    result.save(ckpt, extra={"seed_metrics": seeds})
                    result.write_log(out_dir / f"irc_alpha_{alpha:g}.log.jsonl")
            report = compute_metrics(run_episode(policy, scenario, seed))
            rows.append(_row("IRC", parameter, report, alpha=float(alpha), seed_metrics=seeds))
        except (PandemicMarlError, ValueError, FloatingPointError) as exc:
            log.error("sweep cell %s failed: %s", parameter, exc)
            rows.append(_row("IRC", parameter, None, status=f"failed: {exc}",
                             alpha=float(alpha)))
        if progress is not None:
            progress(rows[-1])
    return rows
