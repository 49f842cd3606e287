import numpy as np
import pytest

from pandemic_marl.scenario import outbreak_scenario, scenario_from_dict


@pytest.fixture(scope="session")
def outbreak():
    return outbreak_scenario()


def small_scenario(n=3, infected=0.0, horizon=8, **reward):
    """Compact scenario for unit tests: ``n`` regions, 1000 people each."""
    regions = [{"name": f"r{i}", "population": 1000.0,
                "pandemic_tolerance": 1.0 + i, "lockdown_tolerance": 2.0 + i}
               for i in range(n)]
    regions[0]["infected"] = infected
    return scenario_from_dict({
        "name": "small", "horizon": horizon, "action_period": 4,
        "reward": {"discount": 0.9, "k_h": 1.0, **reward},
        "demand": {"default_route": 10.0},
        "defaults": {"rates": {"beta": 0.3, "gamma": 0.1, "theta": 0.05}},
        "regions": regions,
    })


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def typed_scenario(horizon=16, infected=20.0):
    """Five small regions: an exempt source plus one region of each tolerance type."""
    regions = [{"name": "src", "type": "source", "population": 1000.0, "infected": infected,
                "exempt_pandemic_cost": True, "pandemic_tolerance": 1.0, "lockdown_tolerance": 1.0}]
    for label, h0, l0 in (("H+L+", 3.0, 6.0), ("H+L-", 3.0, 2.0),
                          ("H-L+", 1.0, 6.0), ("H-L-", 1.0, 2.0)):
        regions.append({"name": label, "type": label, "population": 1000.0,
                        "pandemic_tolerance": h0, "lockdown_tolerance": l0})
    return scenario_from_dict({
        "name": "typed", "horizon": horizon, "action_period": 4,
        "reward": {"discount": 0.9, "k_h": 0.01},
        "demand": {"default_route": 10.0},
        "defaults": {"rates": {"beta": 0.3, "gamma": 0.1, "theta": 0.05}},
        "regions": regions,
    })
