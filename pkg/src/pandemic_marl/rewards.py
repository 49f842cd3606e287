"""Pandemic-spread cost, mobility-control cost and reward aggregation.

Every function broadcasts over regions: profile fields may be scalars or
length-``n`` arrays (see :meth:`RegionProfile.stack`).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .epidemic import EpidemicRates
from .errors import ConfigurationError, ContractViolation

# exp() is continued linearly past this exponent; keeps costs finite and
# strictly increasing when a region with a tiny tolerance blocks traffic.
DEFAULT_MAX_EXPONENT = 50.0
DEFAULT_DISCOUNT = 0.9
DEFAULT_K_H = 1.0


def guarded_exp(x, max_exponent=DEFAULT_MAX_EXPONENT):
    """``exp(x)`` up to ``max_exponent``, then its tangent line."""
    x = np.asarray(x, dtype=float)
    capped = np.exp(np.minimum(x, max_exponent))
    return np.where(x <= max_exponent, capped, capped * (1.0 + (x - max_exponent)))


@dataclass(frozen=True)
class RegionProfile:
    """Tolerance levels and epidemic rates of a region.

    ``hospital_scale`` is the number of people per unit of ``H`` in the
    pandemic-cost exponent, so with ``hospital_scale`` equal to the region
    population the tolerance reads as a hospitalized fraction.
    """

    pandemic_tolerance: float | np.ndarray
    lockdown_tolerance: float | np.ndarray
    k_h: float | np.ndarray = DEFAULT_K_H
    exempt_pandemic_cost: bool | np.ndarray = False
    rates: EpidemicRates | None = None
    hospital_scale: float | np.ndarray = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.pandemic_tolerance, dtype=float) <= 0):
            raise ConfigurationError("must be > 0", "pandemic_tolerance")
        if np.any(np.asarray(self.lockdown_tolerance, dtype=float) <= 0):
            raise ConfigurationError("must be > 0", "lockdown_tolerance")
        if np.any(np.asarray(self.k_h, dtype=float) < 0):
            raise ConfigurationError("must be >= 0", "k_h")
        if np.any(np.asarray(self.hospital_scale, dtype=float) <= 0):
            raise ConfigurationError("must be > 0", "hospital_scale")

    @classmethod
    def stack(cls, profiles: Sequence["RegionProfile"]) -> "RegionProfile":
        """Array-valued profile for vectorised cost evaluation."""
        rates = None
        if all(p.rates is not None for p in profiles):
            rates = EpidemicRates.stack([p.rates for p in profiles])
        return cls(
            pandemic_tolerance=np.array([float(p.pandemic_tolerance) for p in profiles]),
            lockdown_tolerance=np.array([float(p.lockdown_tolerance) for p in profiles]),
            k_h=np.array([float(p.k_h) for p in profiles]),
            exempt_pandemic_cost=np.array([bool(p.exempt_pandemic_cost) for p in profiles]),
            rates=rates,
            hospital_scale=np.array([float(p.hospital_scale) for p in profiles]),
        )


@dataclass(frozen=True)
class LockdownLedger:
    """Discounted cumulative blocked-mobility fraction per region.

    ``nominal_demand`` is the scenario's per-step inbound demand used to
    normalise blocked traffic; ``discount`` is applied once per step.
    """

    penalty: np.ndarray
    nominal_demand: np.ndarray
    discount: float = DEFAULT_DISCOUNT

    def __post_init__(self):
        if not 0 < self.discount <= 1:
            raise ConfigurationError(f"must lie in (0, 1], got {self.discount}", "discount")
        if np.any(np.asarray(self.nominal_demand) <= 0):
            raise ConfigurationError("nominal demand must be > 0", "nominal_demand")
        if np.any(np.asarray(self.penalty) < 0):
            raise ConfigurationError("penalty must be >= 0", "penalty")

    @classmethod
    def fresh(cls, nominal_demand, discount=DEFAULT_DISCOUNT) -> "LockdownLedger":
        nominal = np.array(nominal_demand, dtype=float)
        return cls(np.zeros_like(nominal), nominal, float(discount))


def pandemic_exponent(hospitalized, profile: RegionProfile):
    """``H / H0`` (with ``H0`` expressed in people via ``hospital_scale``)."""
    h = np.asarray(hospitalized, dtype=float)
    if np.any(h < 0):
        raise ContractViolation("hospitalized count must be >= 0")
    return h / (np.asarray(profile.pandemic_tolerance) * np.asarray(profile.hospital_scale))


def pandemic_cost(hospitalized, profile: RegionProfile, max_exponent=DEFAULT_MAX_EXPONENT):
    """``k_h * exp(H / H0)``, zero for exempt regions."""
    exponent = pandemic_exponent(hospitalized, profile)
    cost = np.asarray(profile.k_h) * guarded_exp(exponent, max_exponent)
    cost = np.where(np.asarray(profile.exempt_pandemic_cost, dtype=bool), 0.0, cost)
    return cost if cost.ndim else float(cost)


def blocked_fraction(ledger: LockdownLedger, demand_in, allowed_in):
    """Inbound traffic turned away this step, relative to nominal demand."""
    demand_in = np.asarray(demand_in, dtype=float)
    allowed_in = np.asarray(allowed_in, dtype=float)
    if np.any(allowed_in < 0) or np.any(allowed_in > demand_in * (1 + 1e-12) + 1e-12):
        raise ContractViolation("require 0 <= allowed_in <= demand_in")
    return np.maximum(demand_in - allowed_in, 0.0) / ledger.nominal_demand


def update_lockdown_penalty(ledger: LockdownLedger, demand_in, allowed_in) -> LockdownLedger:
    """``L <- discount * (L + blocked_fraction)``; returns a new ledger."""
    blocked = blocked_fraction(ledger, demand_in, allowed_in)
    return replace(ledger, penalty=ledger.discount * (ledger.penalty + blocked))


def mobility_cost(ledger: LockdownLedger, demand_in, allowed_in, profile: RegionProfile,
                  max_exponent=DEFAULT_MAX_EXPONENT):
    """``exp(L / L0) * blocked_fraction`` using the already-updated ledger."""
    blocked = blocked_fraction(ledger, demand_in, allowed_in)
    scale = guarded_exp(ledger.penalty / np.asarray(profile.lockdown_tolerance), max_exponent)
    cost = scale * blocked
    return cost if cost.ndim else float(cost)


def local_reward(pandemic_c, mobility_c):
    return -(np.asarray(pandemic_c) + np.asarray(mobility_c))


def global_reward(local_rewards) -> float:
    return float(np.sum(local_rewards))


def mixed_reward(local, global_r, alpha):
    """Reward an agent optimises at collaboration level ``alpha``."""
    return local + alpha * global_r


def inbound(matrix) -> np.ndarray:
    """Column sums: traffic into each region."""
    return np.asarray(matrix, dtype=float).sum(axis=0)
