import json

import numpy as np
import pytest

from pandemic_marl.errors import ConfigurationError
from pandemic_marl.scenario import (
    TYPE_LABELS,
    builtin_scenario_path,
    load_scenario,
    outbreak_scenario,
    scenario_from_dict,
)


def base_spec(**top):
    spec = {
        "horizon": 8,
        "demand": {"default_route": 10},
        "defaults": {"population": 1000, "rates": {"beta": 0.2, "gamma": 0.1, "theta": 0.1}},
        "regions": [{"name": "a", "pandemic_tolerance": 1, "lockdown_tolerance": 1},
                    {"name": "b", "pandemic_tolerance": 2, "lockdown_tolerance": 2}],
    }
    spec.update(top)
    return spec


def test_outbreak_initial_conditions(outbreak):
    assert outbreak.n_regions == 5
    np.testing.assert_array_equal(outbreak.initial_states[0], [9_998_000, 2000, 0, 0])
    assert np.all(outbreak.initial_states[1:, 0] == 10_000_000)
    d = outbreak.demand(0)
    assert np.all(d[~np.eye(5, dtype=bool)] == 5000) and not np.diag(d).any()
    assert outbreak.horizon % outbreak.action_period == 0
    assert outbreak.exempt_mask.tolist() == [True, False, False, False, False]


def test_outbreak_type_assignment(outbreak):
    prof = outbreak.stacked_profile
    for j, label in enumerate(outbreak.region_types[1:], start=1):
        assert label in TYPE_LABELS
        assert prof.pandemic_tolerance[j] == (0.003 if label[:2] == "H+" else 0.001)
        assert prof.lockdown_tolerance[j] == (72 if label[2:] == "L+" else 24)
    assert prof.lockdown_tolerance[0] == 0.05
    assert sorted(outbreak.region_types[1:]) == sorted(TYPE_LABELS)


def test_types_inferred_when_not_labelled():
    spec = outbreak_scenario().to_dict()
    for r in spec["regions"]:
        r.pop("type")
    inferred = scenario_from_dict(spec)
    assert inferred.region_types == outbreak_scenario().region_types


def test_round_trip_through_dict_and_json(tmp_path):
    sc = outbreak_scenario()
    path = tmp_path / "s.json"
    path.write_text(json.dumps(sc.to_dict()))
    again = load_scenario(path)
    assert again.to_dict() == sc.to_dict()


def test_builtin_file_loads():
    assert load_scenario(builtin_scenario_path()).to_dict() == outbreak_scenario().to_dict()


def test_overrides_are_merged():
    sc = outbreak_scenario(horizon=40, reward={"k_h": 2.0})
    assert sc.horizon == 40 and sc.k_h == 2.0 and sc.discount == outbreak_scenario().discount


@pytest.mark.parametrize("change, field", [
    ({"horizon": 10}, "horizon"),
    ({"reward": {"discount": 1.5}}, "reward.discount"),
    ({"reward": {"lambda": 0.9}}, "reward"),
    ({"bogus": 1}, "<root>"),
    ({"demand": {"matrix": [[1, 1], [1, 0]]}}, "demand.matrix"),
    ({"demand": {"default_route": 2000}}, "demand"),
])
def test_invalid_scenarios_name_the_field(change, field):
    with pytest.raises(ConfigurationError) as info:
        scenario_from_dict(base_spec(**change))
    assert info.value.path == field


def test_region_errors_carry_index():
    spec = base_spec()
    spec["regions"][1]["lockdown_tolerance"] = 0
    with pytest.raises(ConfigurationError, match=r"regions\[1\]\.lockdown_tolerance"):
        scenario_from_dict(spec)


def test_only_one_exempt_region():
    spec = base_spec()
    for r in spec["regions"]:
        r["exempt_pandemic_cost"] = True
    with pytest.raises(ConfigurationError, match="at most one"):
        scenario_from_dict(spec)


def test_demand_schedule_scales_after_breakpoint():
    sc = scenario_from_dict(base_spec(demand={"default_route": 10,
                                              "schedule": [{"start": 4, "scale": 0.5}]}))
    assert sc.demand(3)[0, 1] == 10 and sc.demand(4)[0, 1] == 5
    assert sc.demand.window(2, 4)[:, 0, 1].tolist() == [10, 10, 5, 5]
    assert sc.nominal_demand.tolist() == [10, 10]


def test_missing_file_is_configuration_error(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_scenario(tmp_path / "nope.yaml")
