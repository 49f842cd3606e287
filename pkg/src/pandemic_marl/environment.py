"""Multi-agent episode driver over the epidemic core.

Each region controls one column of the action matrix (the share of each
origin's demand it lets in).  A joint action is held for
``scenario.action_period`` consecutive epidemic steps; rewards are computed
every step and summed over the period.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import epidemic
from .errors import ContractViolation, ConfigurationError
from .rewards import (
    LockdownLedger,
    inbound,
    local_reward,
    mobility_cost,
    pandemic_cost,
    update_lockdown_penalty,
)
from .scenario import Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Observation:
    """What every policy sees at a decision point.

    ``lockdown_penalty`` is each region's cumulative blocked-mobility
    penalty; it is a function of public demand and action history, so
    exposing it does not reveal the hidden S/I split.
    """

    visible_states: np.ndarray      # (n, 3): S + I, H, R
    visible_deltas: np.ndarray      # (n, 3): change since previous decision point
    demand_forecast: np.ndarray     # (action_period, n, n)
    lockdown_penalty: np.ndarray    # (n,)
    step: int
    horizon: int

    @property
    def n_regions(self) -> int:
        return self.visible_states.shape[0]

    @property
    def progress(self) -> float:
        return self.step / self.horizon


@dataclass
class StepOutcome:
    observation: Observation
    local_rewards: np.ndarray   # (n,), summed over the action period
    global_reward: float
    done: bool
    info: dict[str, Any] = field(default_factory=dict)


class PandemicEnv:
    """Deterministic multi-region environment.

    >>> from pandemic_marl.scenario import outbreak_scenario
    >>> env = PandemicEnv(outbreak_scenario())
    >>> obs = env.reset(seed=0)
    >>> obs.visible_states[0].tolist()
    [10000000.0, 0.0, 0.0]
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._profile = scenario.stacked_profile
        self._rates = scenario.rates
        self._n = scenario.n_regions
        self.seed = None
        self._states = None
        self._t = 0
        self._done = True

    @property
    def n_regions(self) -> int:
        return self._n

    @property
    def t(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._done

    @property
    def states(self) -> np.ndarray:
        """Full hidden state; for logging and evaluation, never for policies."""
        return self._states.copy()

    @property
    def ledger(self) -> LockdownLedger:
        return self._ledger

    def population(self, region: int) -> float:
        return float(epidemic.population(self._states[region]))

    def movable_population(self, region: int) -> float:
        return float(epidemic.movable_population(self._states[region]))

    def reset(self, seed: int = 0) -> Observation:
        # The dynamics are deterministic; the seed is recorded for provenance.
        self.seed = int(seed)
        self._states = self.scenario.initial_states.copy()
        self._ledger = LockdownLedger.fresh(self.scenario.nominal_demand, self.scenario.discount)
        self._t = 0
        self._done = False
        self._last_visible = epidemic.visible(self._states)
        return self._observe(np.zeros_like(self._last_visible))

    def _observe(self, deltas) -> Observation:
        sc = self.scenario
        return Observation(
            visible_states=epidemic.visible(self._states),
            visible_deltas=deltas,
            demand_forecast=sc.demand.window(self._t, sc.action_period),
            lockdown_penalty=self._ledger.penalty.copy(),
            step=self._t,
            horizon=sc.horizon,
        )

    def joint_action_matrix(self, joint_action) -> np.ndarray:
        """Stack per-region columns into an ``(n, n)`` matrix, clipping to [0, 1]."""
        n = self._n
        if isinstance(joint_action, (list, tuple)):
            if len(joint_action) != n:
                raise ConfigurationError(f"expected {n} action columns, got {len(joint_action)}")
            matrix = np.column_stack([np.asarray(c, dtype=float).reshape(n) for c in joint_action])
        else:
            matrix = np.array(joint_action, dtype=float)
            if matrix.shape != (n, n):
                raise ConfigurationError(f"joint action must have shape ({n}, {n})")
        if not np.all(np.isfinite(matrix)):
            raise ContractViolation("joint action contains non-finite entries")
        if np.any(matrix < 0) or np.any(matrix > 1):
            log.warning("action entries outside [0, 1] clipped at step %d", self._t)
            matrix = np.clip(matrix, 0.0, 1.0)
        return matrix

    def step(self, joint_action) -> StepOutcome:
        if self._done:
            raise ContractViolation("step() called on a finished episode; call reset()")
        sc = self.scenario
        action = self.joint_action_matrix(joint_action)
        period = sc.action_period
        n = self._n

        rec = {
            "steps": np.arange(self._t, self._t + period),
            "action": action,
            "states": np.empty((period, n, 4)),
            "demand": np.empty((period, n, n)),
            "allowed": np.empty((period, n, n)),
            "pandemic_cost": np.empty((period, n)),
            "mobility_cost": np.empty((period, n)),
            "lockdown_penalty": np.empty((period, n)),
            "local_rewards": np.empty((period, n)),
            "global_rewards": np.empty(period),
        }
        for k in range(period):
            demand = sc.demand(self._t)
            allowed = epidemic.actual_mobility(demand, action)
            self._states = epidemic.spread_within(
                epidemic.apply_mobility(self._states, allowed, step=self._t), self._rates)
            d_in, a_in = inbound(demand), inbound(allowed)
            self._ledger = update_lockdown_penalty(self._ledger, d_in, a_in)
            pc = pandemic_cost(self._states[:, epidemic.H], self._profile, sc.max_exponent)
            mc = mobility_cost(self._ledger, d_in, a_in, self._profile, sc.max_exponent)
            local = local_reward(pc, mc)

            rec["states"][k] = self._states
            rec["demand"][k] = demand
            rec["allowed"][k] = allowed
            rec["pandemic_cost"][k] = pc
            rec["mobility_cost"][k] = mc
            rec["lockdown_penalty"][k] = self._ledger.penalty
            rec["local_rewards"][k] = local
            rec["global_rewards"][k] = local.sum()
            self._t += 1

        self._done = self._t >= sc.horizon
        current = epidemic.visible(self._states)
        deltas = current - self._last_visible
        self._last_visible = current
        local_total = rec["local_rewards"].sum(axis=0)
        return StepOutcome(
            observation=self._observe(deltas),
            local_rewards=local_total,
            global_reward=float(local_total.sum()),
            done=self._done,
            info=rec,
        )
