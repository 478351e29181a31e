import json
import math

import pytest

from hydrohybrid.config import from_dict, load_config, to_dict
from hydrohybrid.controller import ForceSegment
from hydrohybrid.errors import ValidationError
from hydrohybrid.plant import FORCE, POSITION, DynamicLoad, HardStop


def test_empty_document_is_preset_a():
    cfg = from_dict({})
    assert cfg.preset == "A" and cfg.scenario.name == "A"
    assert isinstance(cfg.scenario.environment, HardStop)


def test_preset_b():
    cfg = from_dict({"scenario": {"preset": "B"}})
    assert isinstance(cfg.scenario.environment, DynamicLoad)
    assert [s.value for s in cfg.scenario.reference.force] == [3375.0, 4500.0, 3150.0]


@pytest.mark.parametrize("preset", ["A", "B"])
def test_round_trip(preset):
    cfg = from_dict({"scenario": {"preset": preset}})
    doc = to_dict(cfg)
    assert from_dict(json.loads(json.dumps(doc))) == cfg


def test_snapshot_is_explicit():
    doc = to_dict(from_dict({}))
    assert doc["controller"]["e_max"] is None  # infinity written as null
    assert doc["gains"]["position"]["K1"] == 190.0
    assert doc["environment"]["kind"] == "hard_stop"


def test_override_merges():
    cfg = from_dict({"hysteresis": {"T_lo": 800.0}, "gains": {"force": {"Ki": 0.002}}})
    assert cfg.scenario.hysteresis.T_lo == 800.0 and cfg.scenario.hysteresis.T_hi == 3300.0
    assert cfg.scenario.gains[FORCE].Ki == 0.002 and cfg.scenario.gains[FORCE].K4 == 5e-5


def test_segments_replace_wholesale():
    cfg = from_dict({"reference": {"force": [{"kind": "const", "value": 1000.0}]}})
    assert cfg.scenario.reference.force == (ForceSegment("const", math.inf, 1000.0),)


def test_environment_kind_switch_resets():
    cfg = from_dict({"environment": {"kind": "dynamic_load", "period": 5.0},
                     "scenario": {"variant": "dynamic_env"}})
    assert cfg.scenario.environment.period == 5.0
    assert cfg.scenario.environment.duty == DynamicLoad().duty


@pytest.mark.parametrize("doc,field", [
    ({"plant": {"mass": 1.0}}, "plant.mass"),
    ({"bogus": {}}, "config"),
    ({"scenario": {"preset": "Z"}}, "scenario.preset"),
    ({"hysteresis": {"T_hi": 10.0}}, "hysteresis"),
    ({"scenario": {"seed": 1.5}}, "scenario.seed"),
    ({"gains": {"position": {"K4": 1.0}}}, "K4"),
])
def test_rejects_with_field(doc, field):
    with pytest.raises(ValidationError) as info:
        from_dict(doc)
    assert field in str(info.value)


def test_desired_poles():
    cfg = from_dict({"gains": {"desired_poles": {"position": [-50, -60, [-270, 1250], [-270, -1250]]}}})
    assert cfg.desired_poles[POSITION][2] == complex(-270, 1250)


def test_load_errors(tmp_path):
    with pytest.raises(ValidationError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError):
        load_config(bad)
