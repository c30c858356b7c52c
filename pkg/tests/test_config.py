from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from impactopt.config import (
    RunConfig,
    cfl_limit,
    config_to_dict,
    dump_config,
    parse_config,
    parse_config_dict,
    resolve_units,
)
from impactopt.errors import ConfigError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def _blast() -> dict:
    return json.loads((SCENARIOS / "gradient_check_8x2.json").read_text())


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_are_valid(path) -> None:
    cfg = parse_config(path)

    assert isinstance(cfg, RunConfig)
    assert resolve_units(cfg).dt <= cfl_limit(cfg)


def test_round_trip_through_dict_and_file(tmp_path) -> None:
    cfg = parse_config_dict(_blast())

    assert parse_config_dict(config_to_dict(cfg)) == cfg
    dump_config(cfg, tmp_path / "config.json")
    assert parse_config(tmp_path / "config.json") == cfg


def test_defaults_fill_missing_blocks() -> None:
    data = _blast()
    del data["solver"]

    cfg = parse_config_dict(data)

    assert cfg.solver.admm.r0 == 1e-2
    assert cfg.boundary.clamped == ["left", "right"]
    assert cfg.objective_params().sigma_y0 == 0.005


def test_unknown_and_missing_keys_are_reported() -> None:
    data = _blast()
    data["materials"] = {}
    del data["time"]

    with pytest.raises(ConfigError) as info:
        parse_config_dict(data)

    text = str(info.value)
    assert "materials: unknown key" in text
    assert "time: required key missing" in text


def test_every_violation_is_collected() -> None:
    data = _blast()
    data["material"]["Gc"] = -1.0
    data["load"]["pulse"] = "ramp"
    data["design"]["volume_limit"] = 2.0
    data["geometry"]["nx"] = 8.5

    with pytest.raises(ConfigError) as info:
        parse_config_dict(data)

    problems = info.value.violations
    assert len(problems) >= 3
    assert any("load.pulse" in p for p in problems)
    assert any("volume_limit" in p for p in problems)
    assert any("geometry.nx" in p for p in problems)


def test_material_violations_name_the_field() -> None:
    data = _blast()
    data["material"]["Gc"] = -1.0

    with pytest.raises(ConfigError) as info:
        parse_config_dict(data)

    assert any("Gc" in p for p in info.value.violations)


def test_cfl_violation_states_the_limit() -> None:
    good = parse_config_dict(_blast())
    limit = cfl_limit(good)
    needed = math.ceil(resolve_units(good).end_time / limit)
    data = _blast()
    data["time"]["n_steps"] = 10

    with pytest.raises(ConfigError) as info:
        parse_config_dict(data)

    text = str(info.value)
    assert "CFL limit" in text
    assert f"{limit:.6g}" in text
    assert f"use at least {needed} steps" in text


def test_scenario_and_interpolation_must_agree() -> None:
    data = _blast()
    data["interpolation"] = {"kind": "two-material"}

    with pytest.raises(ConfigError) as info:
        parse_config_dict(data)

    assert any("E1" in p for p in info.value.violations)

    data = _blast()
    data["scenario"] = "impact-two-material"
    with pytest.raises(ConfigError) as info:
        parse_config_dict(data)
    assert any("impact block" in p for p in info.value.violations)


def test_misaligned_flyer_is_rejected() -> None:
    data = json.loads((SCENARIOS / "impact_two_material_60x15.json").read_text())
    data["impact"]["flyer_nx"] = 35

    with pytest.raises(ConfigError, match="flyer element width"):
        parse_config_dict(data)


def test_unreadable_and_malformed_files(tmp_path) -> None:
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config(bad)
    with pytest.raises(ConfigError):
        parse_config_dict([1, 2])


def test_units_resolve_against_the_material_block() -> None:
    cfg = parse_config_dict(_blast())
    units = resolve_units(cfg)
    E, nu, rho = 0.5, 0.3, 0.05
    K = E / (2 * (1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    c = math.sqrt((K + mu) / rho)

    assert units.wave_speed == pytest.approx(c)
    assert units.end_time == pytest.approx(8.0 / c)
    assert units.dt == pytest.approx(8.0 / c / 200)
    assert units.impulse == pytest.approx(5e-3 * math.sqrt(E * rho))
    assert units.duration == pytest.approx(1.47 / c)
    assert units.velocity == 0.0
