"""Scenario definitions and the YAML/JSON scenario-file schema.

A scenario file is a nested mapping::

    schema_version: 1
    name: outbreak
    horizon: 360            # time steps, multiple of action_period
    action_period: 4
    reward: {discount: 0.999, k_h: 0.01, max_exponent: 50.0}
    demand: {default_route: 5000}     # or {matrix: [[...], ...]}
    defaults:               # applied to every region unless overridden
      population: 1.0e7
      hospital_scale: 1.0e7
      rates: {beta: 0.12, gamma: 0.1, theta: 0.1}
    regions:
      - {name: source, type: source, infected: 2000, lockdown_tolerance: 0.05,
         pandemic_tolerance: 0.003, exempt_pandemic_cost: true, rates: {beta: 0.15}}
      - {name: r1, type: H+L+, pandemic_tolerance: 0.003, lockdown_tolerance: 72}

Region ``type`` labels use the ``H+``/``H-`` x ``L+``/``L-`` convention; the
exempt region is labelled ``source``.  ``demand.schedule`` may hold
``{start: step, scale: factor}`` entries that rescale the base matrix from
``start`` onward.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .epidemic import EpidemicRates
from .errors import ConfigurationError
from .rewards import DEFAULT_DISCOUNT, DEFAULT_K_H, DEFAULT_MAX_EXPONENT, RegionProfile

SCHEMA_VERSION = 1
TYPE_LABELS = ("H+L+", "H+L-", "H-L+", "H-L-")


@dataclass(frozen=True)
class DemandSchedule:
    """Base demand matrix with optional piecewise-constant scaling."""

    base: np.ndarray
    breakpoints: tuple[tuple[int, float], ...] = ()

    def __call__(self, t: int) -> np.ndarray:
        scale = 1.0
        for start, factor in self.breakpoints:
            if t >= start:
                scale = factor
        return self.base * scale if scale != 1.0 else self.base

    def window(self, t: int, length: int) -> np.ndarray:
        return np.stack([self(t + k) for k in range(length)])


@dataclass(frozen=True)
class Scenario:
    name: str
    profiles: tuple[RegionProfile, ...]
    initial_states: np.ndarray
    demand: DemandSchedule
    horizon: int = 360
    action_period: int = 4
    discount: float = DEFAULT_DISCOUNT
    k_h: float = DEFAULT_K_H
    max_exponent: float = DEFAULT_MAX_EXPONENT
    region_names: tuple[str, ...] = ()
    region_types: tuple[str, ...] = ()
    source: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_regions(self) -> int:
        return len(self.profiles)

    @property
    def decision_points(self) -> int:
        return self.horizon // self.action_period

    @property
    def stacked_profile(self) -> RegionProfile:
        return RegionProfile.stack(self.profiles)

    @property
    def rates(self) -> EpidemicRates:
        return EpidemicRates.stack([p.rates for p in self.profiles])

    @property
    def nominal_demand(self) -> np.ndarray:
        """Per-step inbound demand of each region, fixed from the base matrix."""
        return self.demand.base.sum(axis=0)

    @property
    def exempt_mask(self) -> np.ndarray:
        return np.array([bool(p.exempt_pandemic_cost) for p in self.profiles])

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved, re-loadable description (embedded in every output)."""
        regions = []
        for i, p in enumerate(self.profiles):
            s, inf, h, r = (float(v) for v in self.initial_states[i])
            regions.append({
                "name": self.region_names[i],
                "type": self.region_types[i],
                "state": {"susceptible": s, "infected": inf, "hospitalized": h, "recovered": r},
                "pandemic_tolerance": float(p.pandemic_tolerance),
                "lockdown_tolerance": float(p.lockdown_tolerance),
                "k_h": float(p.k_h),
                "exempt_pandemic_cost": bool(p.exempt_pandemic_cost),
                "hospital_scale": float(p.hospital_scale),
                "rates": {
                    "beta_stay": float(p.rates.beta_stay),
                    "beta_move": float(p.rates.beta_move),
                    "gamma": float(p.rates.gamma),
                    "theta": float(p.rates.theta),
                },
            })
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "horizon": self.horizon,
            "action_period": self.action_period,
            "reward": {"discount": self.discount, "k_h": self.k_h,
                       "max_exponent": self.max_exponent},
            "demand": {
                "matrix": self.demand.base.tolist(),
                "schedule": [{"start": s, "scale": f} for s, f in self.demand.breakpoints],
            },
            "regions": regions,
        }


def _number(value, path, *, minimum=None, strict=False, integer=False):
    if isinstance(value, str):
        # YAML 1.1 loaders read exponents without a sign ("1.0e7") as strings
        try:
            value = float(value)
        except ValueError:
            raise ConfigurationError(f"expected a number, got {value!r}", path) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", path)
    if integer and int(value) != value:
        raise ConfigurationError(f"expected an integer, got {value!r}", path)
    if not np.isfinite(value):
        raise ConfigurationError("must be finite", path)
    if minimum is not None and (value <= minimum if strict else value < minimum):
        raise ConfigurationError(f"must be {'>' if strict else '>='} {minimum}", path)
    return int(value) if integer else float(value)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


_REGION_KEYS = {
    "name", "type", "population", "infected", "state", "pandemic_tolerance",
    "lockdown_tolerance", "k_h", "exempt_pandemic_cost", "hospital_scale", "rates",
}
_TOP_KEYS = {"schema_version", "name", "horizon", "action_period", "reward", "demand",
             "defaults", "regions"}


def _rates(spec, path) -> EpidemicRates:
    if not isinstance(spec, dict):
        raise ConfigurationError("expected a mapping", path)
    unknown = set(spec) - {"beta", "beta_stay", "beta_move", "gamma", "theta"}
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}", path)
    beta = spec.get("beta")
    values = {}
    for key in ("beta_stay", "beta_move"):
        v = spec.get(key, beta)
        if v is None:
            raise ConfigurationError("missing (set beta or beta_stay/beta_move)", f"{path}.{key}")
        values[key] = _number(v, f"{path}.{key}", minimum=0)
    for key in ("gamma", "theta"):
        if key not in spec:
            raise ConfigurationError("missing", f"{path}.{key}")
        values[key] = _number(spec[key], f"{path}.{key}", minimum=0)
        if values[key] > 1:
            raise ConfigurationError("must be <= 1", f"{path}.{key}")
    return EpidemicRates(**values)


def _region(spec, defaults, k_h, index):
    path = f"regions[{index}]"
    if not isinstance(spec, dict):
        raise ConfigurationError("expected a mapping", path)
    unknown = set(spec) - _REGION_KEYS
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}", path)
    merged = _merge(defaults, spec)

    if "state" in merged:
        st = merged["state"]
        keys = ("susceptible", "infected", "hospitalized", "recovered")
        if not isinstance(st, dict) or set(st) - set(keys):
            raise ConfigurationError(f"expected keys {keys}", f"{path}.state")
        state = [_number(st.get(k, 0.0), f"{path}.state.{k}", minimum=0) for k in keys]
    else:
        pop = _number(merged.get("population", 0.0), f"{path}.population", minimum=0)
        infected = _number(merged.get("infected", 0.0), f"{path}.infected", minimum=0)
        if infected > pop:
            raise ConfigurationError("infected exceeds population", f"{path}.infected")
        state = [pop - infected, infected, 0.0, 0.0]

    for key in ("pandemic_tolerance", "lockdown_tolerance"):
        if key not in merged:
            raise ConfigurationError("missing", f"{path}.{key}")
    profile = RegionProfile(
        pandemic_tolerance=_number(merged["pandemic_tolerance"], f"{path}.pandemic_tolerance",
                                   minimum=0, strict=True),
        lockdown_tolerance=_number(merged["lockdown_tolerance"], f"{path}.lockdown_tolerance",
                                   minimum=0, strict=True),
        k_h=_number(merged.get("k_h", k_h), f"{path}.k_h", minimum=0),
        exempt_pandemic_cost=bool(merged.get("exempt_pandemic_cost", False)),
        rates=_rates(merged.get("rates", {}), f"{path}.rates"),
        hospital_scale=_number(merged.get("hospital_scale", 1.0), f"{path}.hospital_scale",
                               minimum=0, strict=True),
    )
    name = str(merged.get("name", f"region{index}"))
    label = merged.get("type")
    return profile, state, name, label


def _infer_types(profiles, labels):
    """Fill missing type labels by comparing tolerances with the other regions."""
    idx = [i for i, p in enumerate(profiles) if not p.exempt_pandemic_cost]
    if not idx:
        return tuple(labels[i] or "source" for i in range(len(profiles)))
    h = np.array([float(profiles[i].pandemic_tolerance) for i in idx])
    ell = np.array([float(profiles[i].lockdown_tolerance) for i in idx])
    h_mid, l_mid = np.median(h), np.median(ell)
    out = []
    for i, p in enumerate(profiles):
        if labels[i]:
            out.append(str(labels[i]))
        elif p.exempt_pandemic_cost:
            out.append("source")
        else:
            hs = "+" if float(p.pandemic_tolerance) > h_mid else "-"
            ls = "+" if float(p.lockdown_tolerance) > l_mid else "-"
            out.append(f"H{hs}L{ls}")
    return tuple(out)


def scenario_from_dict(spec: dict[str, Any]) -> Scenario:
    """Validate and resolve a scenario mapping."""
    if not isinstance(spec, dict):
        raise ConfigurationError("scenario must be a mapping")
    unknown = set(spec) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}", "<root>")
    version = spec.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported version {version!r}", "schema_version")

    horizon = _number(spec.get("horizon", 360), "horizon", minimum=1, integer=True)
    period = _number(spec.get("action_period", 4), "action_period", minimum=1, integer=True)
    if horizon % period:
        raise ConfigurationError(f"{horizon} is not a multiple of action_period {period}",
                                 "horizon")

    reward = spec.get("reward", {})
    if not isinstance(reward, dict) or set(reward) - {"discount", "k_h", "max_exponent"}:
        raise ConfigurationError("expected keys discount, k_h, max_exponent", "reward")
    discount = _number(reward.get("discount", DEFAULT_DISCOUNT), "reward.discount",
                       minimum=0, strict=True)
    if discount > 1:
        raise ConfigurationError("must be <= 1", "reward.discount")
    k_h = _number(reward.get("k_h", DEFAULT_K_H), "reward.k_h", minimum=0)
    max_exponent = _number(reward.get("max_exponent", DEFAULT_MAX_EXPONENT),
                           "reward.max_exponent", minimum=0, strict=True)

    regions = spec.get("regions")
    if not isinstance(regions, list) or not regions:
        raise ConfigurationError("expected a non-empty list", "regions")
    defaults = spec.get("defaults", {})
    if not isinstance(defaults, dict):
        raise ConfigurationError("expected a mapping", "defaults")

    resolved = [_region(r, defaults, k_h, i) for i, r in enumerate(regions)]
    profiles = tuple(r[0] for r in resolved)
    states = np.array([r[1] for r in resolved], dtype=float)
    names = tuple(r[2] for r in resolved)
    if len(set(names)) != len(names):
        raise ConfigurationError("region names must be unique", "regions")
    if sum(bool(p.exempt_pandemic_cost) for p in profiles) > 1:
        raise ConfigurationError("at most one region may be exempt from pandemic cost",
                                 "regions")
    types = _infer_types(profiles, [r[3] for r in resolved])
    n = len(profiles)

    demand_spec = spec.get("demand", {})
    if not isinstance(demand_spec, dict):
        raise ConfigurationError("expected a mapping", "demand")
    if "matrix" in demand_spec:
        base = np.array(demand_spec["matrix"], dtype=float)
        if base.shape != (n, n):
            raise ConfigurationError(f"expected shape ({n}, {n}), got {base.shape}",
                                     "demand.matrix")
        if np.any(base < 0) or not np.all(np.isfinite(base)):
            raise ConfigurationError("entries must be finite and >= 0", "demand.matrix")
        if np.any(np.diag(base) != 0):
            raise ConfigurationError("diagonal must be 0", "demand.matrix")
    else:
        route = _number(demand_spec.get("default_route", 0.0), "demand.default_route",
                        minimum=0)
        base = np.full((n, n), route)
        np.fill_diagonal(base, 0.0)
    breakpoints = []
    for k, item in enumerate(demand_spec.get("schedule", []) or []):
        p = f"demand.schedule[{k}]"
        if not isinstance(item, dict) or set(item) != {"start", "scale"}:
            raise ConfigurationError("expected keys start, scale", p)
        breakpoints.append((_number(item["start"], f"{p}.start", minimum=0, integer=True),
                            _number(item["scale"], f"{p}.scale", minimum=0)))
    breakpoints.sort()
    if np.any(base.sum(axis=0) <= 0):
        raise ConfigurationError("every region needs positive inbound demand", "demand")

    scenario = Scenario(
        name=str(spec.get("name", "scenario")),
        profiles=profiles,
        initial_states=states,
        demand=DemandSchedule(base, tuple(breakpoints)),
        horizon=horizon,
        action_period=period,
        discount=discount,
        k_h=k_h,
        max_exponent=max_exponent,
        region_names=names,
        region_types=types,
        source=copy.deepcopy(spec),
    )
    for t in range(horizon):
        outflow = scenario.demand(t).sum(axis=1)
        movable = states[:, 0] + states[:, 1] + states[:, 3]
        if np.any(outflow > movable):
            raise ConfigurationError(f"demand at step {t} exceeds a region's population",
                                     "demand")
        if not breakpoints:
            break
    return scenario


def load_scenario(path) -> Scenario:
    """Load a YAML (or JSON) scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file: {exc}", str(path)) from exc
    try:
        spec = yaml.safe_load(text) if path.suffix != ".json" else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot parse scenario file: {exc}", str(path)) from exc
    return scenario_from_dict(spec)


def builtin_scenario_path(name: str = "outbreak") -> Path:
    return Path(str(resources.files("pandemic_marl") / "scenarios" / f"{name}.yaml"))


def outbreak_scenario(**overrides) -> Scenario:
    """The calibrated five-region outbreak scenario shipped with the package.

    Keyword overrides are merged into the top level of the file's mapping,
    e.g. ``outbreak_scenario(horizon=120)``.
    """
    with open(builtin_scenario_path("outbreak")) as fh:
        spec = yaml.safe_load(fh)
    return scenario_from_dict(_merge(spec, overrides))
