"""Controller interface and the two expert baselines."""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from .environment import Observation
from .errors import ConfigurationError
from .rewards import LockdownLedger, inbound, update_lockdown_penalty
from .scenario import Scenario


@runtime_checkable
class Policy(Protocol):
    """Anything that maps an observation to one region's action column."""

    def act(self, observation: Observation, region: int) -> np.ndarray: ...


class FixedPolicy:
    """Admit the same share ``p_fix`` of every inbound route, always."""

    def __init__(self, p_fix: float):
        if not 0.0 <= p_fix <= 1.0:
            raise ConfigurationError(f"p_fix must lie in [0, 1], got {p_fix}", "p_fix")
        self.p_fix = float(p_fix)

    def reset(self, scenario: Scenario | None = None):
        pass

    def act(self, observation: Observation, region: int) -> np.ndarray:
        return np.full(observation.n_regions, self.p_fix)

    def describe(self) -> dict:
        return {"policy": "fixed", "p_fix": self.p_fix}


class ThresholdPolicy:
    """Close all inbound routes while ``H > H_th`` and ``L < L_th``.

    The penalty ``L`` is tracked from the policy's own actions and the
    observed demand forecast, with the same discounted recursion the reward
    model uses, so one instance should serve a single region for a single
    episode (``reset`` starts a new one).
    """

    def __init__(self, h_threshold: float, l_threshold: float, scenario: Scenario | None = None):
        if h_threshold < 0 or l_threshold < 0:
            raise ConfigurationError("thresholds must be >= 0")
        self.h_threshold = float(h_threshold)
        self.l_threshold = float(l_threshold)
        self._ledgers: dict[int, LockdownLedger] = {}
        self._scenario = scenario

    def reset(self, scenario: Scenario | None = None):
        if scenario is not None:
            self._scenario = scenario
        self._ledgers = {}

    def _ledger(self, region, observation) -> LockdownLedger:
        if region not in self._ledgers:
            if self._scenario is not None:
                nominal, discount = self._scenario.nominal_demand, self._scenario.discount
            else:
                nominal, discount = inbound(observation.demand_forecast[0]), 0.9
            self._ledgers[region] = LockdownLedger.fresh(nominal, discount)
        return self._ledgers[region]

    def decide(self, hospitalized: float, penalty: float) -> float:
        """The scalar rule: 0 (close) or 1 (open)."""
        return 0.0 if hospitalized > self.h_threshold and penalty < self.l_threshold else 1.0

    def act(self, observation: Observation, region: int) -> np.ndarray:
        ledger = self._ledger(region, observation)
        value = self.decide(observation.visible_states[region, 1], ledger.penalty[region])
        column = np.full(observation.n_regions, value)
        # advance the private ledger over the period this column will be held
        for demand in observation.demand_forecast:
            allowed = demand.copy()
            allowed[:, region] *= column
            ledger = update_lockdown_penalty(ledger, inbound(demand), inbound(allowed))
        self._ledgers[region] = ledger
        return column

    @property
    def tracked_penalty(self) -> dict[int, float]:
        return {r: float(led.penalty[r]) for r, led in self._ledgers.items()}

    def describe(self) -> dict:
        return {"policy": "threshold", "h_threshold": self.h_threshold,
                "l_threshold": self.l_threshold}


def joint_action(policies, observation: Observation) -> np.ndarray:
    """Query one policy per region and stack the columns."""
    n = observation.n_regions
    if isinstance(policies, Policy) and not isinstance(policies, (list, tuple)):
        policies = [policies] * n
    if len(policies) != n:
        raise ConfigurationError(f"expected {n} policies, got {len(policies)}")
    return np.column_stack([np.asarray(p.act(observation, j), dtype=float)
                            for j, p in enumerate(policies)])
