"""Mobility algebra and the two-phase SIHR transmission step.

Region states are carried as ``(n, 4)`` float arrays with columns
``S, I, H, R``.  Hospitalized people never travel, so the mobility phase
only moves the ``(S, I, R)`` part; the spread phase then mixes the staying
and arriving sub-populations separately.

All functions are pure: inputs are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InfeasibleMobilityError

S, I, H, R = range(4)
COMPARTMENTS = ("susceptible", "infected", "hospitalized", "recovered")


@dataclass(frozen=True)
class PandemicState:
    """Compartment counts of one region (real-valued people)."""

    susceptible: float
    infected: float
    hospitalized: float
    recovered: float

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ConfigurationError(f"compartments must be finite and >= 0, got {values}")

    @property
    def population(self) -> float:
        return self.susceptible + self.infected + self.hospitalized + self.recovered

    @property
    def movable_population(self) -> float:
        return self.susceptible + self.infected + self.recovered

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.susceptible, self.infected, self.hospitalized, self.recovered], dtype=float
        )

    @classmethod
    def from_array(cls, values) -> "PandemicState":
        s, i, h, r = (float(v) for v in values)
        return cls(s, i, h, r)


@dataclass(frozen=True)
class VisiblePandemicState:
    """What a policy may see of a region: S and I are indistinguishable."""

    asymptomatic_pool: float
    hospitalized: float
    recovered: float

    def as_array(self) -> np.ndarray:
        return np.array([self.asymptomatic_pool, self.hospitalized, self.recovered])


@dataclass(frozen=True)
class EpidemicRates:
    """Per-step transmission, hospitalization and recovery rates.

    Fields may be scalars (one region, or shared by all) or length-``n``
    arrays.  ``beta_move`` applies to the arriving sub-population of the
    destination region.
    """

    beta_stay: float | np.ndarray
    beta_move: float | np.ndarray
    gamma: float | np.ndarray
    theta: float | np.ndarray

    def __post_init__(self):
        for name in ("beta_stay", "beta_move", "gamma", "theta"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(value)) or np.any(value < 0):
                raise ConfigurationError(f"rate must be finite and >= 0, got {value}", name)
        for name in ("gamma", "theta"):
            if np.any(np.asarray(getattr(self, name)) > 1):
                raise ConfigurationError("rate must be <= 1", name)

    @classmethod
    def uniform(cls, beta, gamma, theta, beta_move=None) -> "EpidemicRates":
        return cls(beta, beta if beta_move is None else beta_move, gamma, theta)

    @classmethod
    def stack(cls, rates: Sequence["EpidemicRates"]) -> "EpidemicRates":
        """Combine per-region scalar rates into array-valued rates."""
        return cls(
            *(
                np.array([float(getattr(r, f)) for r in rates])
                for f in ("beta_stay", "beta_move", "gamma", "theta")
            )
        )


@dataclass(frozen=True)
class MixedState:
    """Result of the mobility phase.

    ``staying`` and ``moving`` are ``(n, 3)`` arrays over ``(S, I, R)``;
    ``hospitalized`` is carried through unchanged.
    """

    staying: np.ndarray
    moving: np.ndarray
    hospitalized: np.ndarray

    @property
    def intermediate(self) -> np.ndarray:
        return self.staying + self.moving


def as_state_array(states) -> np.ndarray:
    """Coerce a sequence of :class:`PandemicState` (or an array) to ``(n, 4)``."""
    if isinstance(states, PandemicState):
        states = [states]
    if len(states) and isinstance(states[0], PandemicState):
        arr = np.stack([s.as_array() for s in states])
    else:
        arr = np.array(states, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ConfigurationError(f"states must have shape (n, 4), got {arr.shape}")
    return arr


def population(states) -> np.ndarray:
    """Total population ``S + I + H + R`` per region."""
    return np.asarray(states, dtype=float).sum(axis=-1)


def movable_population(states) -> np.ndarray:
    """Population allowed to travel, ``S + I + R`` per region."""
    arr = np.asarray(states, dtype=float)
    return arr[..., S] + arr[..., I] + arr[..., R]


def _square(matrix, name, n=None) -> np.ndarray:
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigurationError(f"{name} must be a square matrix, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ConfigurationError(f"{name} has dimension {arr.shape[0]}, expected {n}")
    return arr


def actual_mobility(demand, action) -> np.ndarray:
    """Allowed mobility: demand scaled elementwise by the fulfilled proportion."""
    demand = _square(demand, "demand")
    action = _square(action, "action", demand.shape[0])
    return demand * action


def apply_mobility(states, allowed, step=None) -> MixedState:
    """Move people along ``allowed`` (origin rows, destination columns).

    Each region sends ``allowed[i, j] / N_i`` of every movable compartment
    to region ``j``.  Raises :class:`InfeasibleMobilityError` if a region is
    asked to send more people than it has.
    """
    states = as_state_array(states)
    allowed = _square(allowed, "allowed mobility", states.shape[0])
    if np.any(allowed < 0):
        raise ConfigurationError("allowed mobility must be non-negative")

    movable = states[:, [S, I, R]]
    n_movable = movable.sum(axis=1)
    outflow = allowed.sum(axis=1)
    over = outflow > n_movable * (1 + 1e-12)
    if np.any(over):
        region = int(np.flatnonzero(over)[0])
        raise InfeasibleMobilityError(region, step, outflow[region], n_movable[region])

    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(n_movable[:, None] > 0, allowed / n_movable[:, None], 0.0)
    staying = movable - share.sum(axis=1)[:, None] * movable
    moving = share.T @ movable
    return MixedState(staying, moving, states[:, H].copy())


def _infections(beta, susceptible, infected, size):
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(size > 0, beta * susceptible * infected / size, 0.0)
    return np.minimum(raw, susceptible)


def spread_within(mixed: MixedState, rates: EpidemicRates) -> np.ndarray:
    """Spread the disease inside each region after mobility.

    New infections are computed separately on the staying and the arriving
    sub-populations and capped by their susceptibles.  Region totals are
    unchanged.
    """
    s_s, i_s, r_s = mixed.staying.T
    s_m, i_m, r_m = mixed.moving.T
    hosp = mixed.hospitalized

    new_stay = _infections(np.asarray(rates.beta_stay), s_s, i_s, s_s + i_s + r_s)
    new_move = _infections(np.asarray(rates.beta_move), s_m, i_m, s_m + i_m + r_m)

    infected_hat = i_s + i_m
    admitted = np.minimum(np.asarray(rates.gamma) * infected_hat, infected_hat)
    discharged = np.minimum(np.asarray(rates.theta) * hosp, hosp)

    out = np.empty((len(hosp), 4))
    out[:, S] = (s_s - new_stay) + (s_m - new_move)
    out[:, I] = (infected_hat - admitted) + (new_stay + new_move)
    out[:, H] = (hosp - discharged) + admitted
    out[:, R] = (r_s + r_m) + discharged
    return out


def step(states, demand, action, rates: EpidemicRates, step_index=None) -> np.ndarray:
    """One full time step: mobility for every region, then spread."""
    allowed = actual_mobility(demand, action)
    mixed = apply_mobility(states, allowed, step=step_index)
    return spread_within(mixed, rates)


def visible(state):
    """Observable part of a state: ``(S + I, H, R)``.

    Accepts a single :class:`PandemicState` (returns a
    :class:`VisiblePandemicState`) or an ``(..., 4)`` array.
    """
    if isinstance(state, PandemicState):
        return VisiblePandemicState(state.susceptible + state.infected, state.hospitalized,
                                    state.recovered)
    arr = np.asarray(state, dtype=float)
    return np.stack([arr[..., S] + arr[..., I], arr[..., H], arr[..., R]], axis=-1)
