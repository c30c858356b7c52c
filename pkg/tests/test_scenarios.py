from __future__ import annotations

import json

import numpy as np
import pytest

from impactopt.config import parse_config, parse_config_dict
from impactopt.errors import ConfigError
from impactopt.mesh import CONTACT, FLYER
from impactopt.optimizer import ScheduleValues
from impactopt.scenarios import ImpactProblem, build_mesh


def _small_impact() -> dict:
    elastic = {"sigma_y0": 1.0, "Gc": 1.0}
    return {
        "scenario": "impact-two-material",
        "geometry": {"L": 1.0, "H": 0.25, "nx": 10, "ny": 4},
        "material": {
            "E": 1.0, "nu": 0.3, "rho": 0.05,
            "sigma_y0": elastic["sigma_y0"], "eps_p0": 0.1, "n": 3.0, "eps_dot_p0": 1.0, "m": 3.0,
            "Gc": elastic["Gc"], "ell": 0.1,
        },
        "interpolation": {
            "kind": "two-material", "p": 2.0,
            "E1": 0.5, "E2": 1.0, "sy1": 0.5, "sy2": 1.0, "Gc1": 2.0, "Gc2": 1.0,
        },
        "impact": {
            "flyer_nx": 6, "flyer_ny": 2, "flyer_length": 0.6, "flyer_height": 0.1,
            "E": 0.3, "nu": 0.4, "rho": 0.02, "velocity": 0.01,
        },
        "time": {"end_time": 2.0, "n_steps": 250},
        "design": {"initial": 0.5, "volume_limit": 1.0, "filter_radius": 0.15},
        "threads": 1,
    }


def test_blast_problem_shape(scenario_path) -> None:
    problem = ImpactProblem(parse_config(scenario_path("gradient_check_8x2.json")))

    assert problem.n_design == 16
    assert problem.lower == 0.01
    assert problem.upper == 1.0
    np.testing.assert_array_equal(problem.initial_design(), np.full(16, 0.5))
    assert problem.contact is None
    problem.close()


def test_impact_mesh_and_flyer_velocity() -> None:
    cfg = parse_config_dict(_small_impact())
    problem = ImpactProblem(cfg)
    mesh = build_mesh(cfg)

    assert problem.n_design == 40
    assert (problem.lower, problem.upper) == (0.0, 1.0)
    assert len(mesh.block_elements(CONTACT)) == 6
    assert len(mesh.block_elements(FLYER)) == 12

    model, _ = problem.model(np.full(40, 0.5))
    flyer_nodes = mesh.boundary_sets["flyer"]
    np.testing.assert_allclose(model.v0[flyer_nodes, 1], -problem.units.velocity)
    assert problem.units.velocity == pytest.approx(0.01 * problem.units.wave_speed)
    rest = np.setdiff1d(np.arange(mesh.n_nodes), flyer_nodes)
    assert not np.any(model.v0[rest])
    problem.close()


@pytest.mark.timeout(120)
def test_flyer_pushes_the_impact_face_down() -> None:
    problem = ImpactProblem(parse_config_dict(_small_impact()))
    face = problem.mesh.boundary_sets["impact_face"]
    lowest = []

    run = problem.forward(
        problem.initial_design(),
        observer=lambda model, state: lowest.append(float(state.u[face, 1].min())),
    )
    value = problem.objective(run).value

    assert min(lowest) < 0.0
    assert value.total > 0.0
    assert value.D_p == 0.0
    assert value.D_a == 0.0
    problem.close()


def test_schedule_reaches_the_interpolation_and_load(scenario_path) -> None:
    problem = ImpactProblem(parse_config(scenario_path("gradient_check_8x2.json")))

    problem.apply_schedule(ScheduleValues(k1=0.25, k2=4.0, load_scale=0.7, p=2.0))

    assert problem.scheme.k1 == 0.25
    assert problem.scheme.k2 == 4.0
    assert problem.load().scale == 0.7
    problem.close()


def test_two_material_schedule_sets_the_power() -> None:
    problem = ImpactProblem(parse_config_dict(_small_impact()))

    problem.apply_schedule(ScheduleValues(k1=0.5, k2=2.0, load_scale=1.0, p=5.0))

    assert problem.scheme.p == 5.0
    problem.close()


def test_sampled_elements_follow_the_seed(scenario_path) -> None:
    data = json.loads(scenario_path("gradient_check_8x2.json").read_text())
    first = ImpactProblem(parse_config_dict(data)).sample_elements()
    again = ImpactProblem(parse_config_dict(data)).sample_elements()

    np.testing.assert_array_equal(first, again)
    assert len(first) == 10
    assert len(np.unique(first)) == 10

    data["gradient_check"]["elements"] = [0, 16]
    with pytest.raises(ConfigError, match="out of range"):
        ImpactProblem(parse_config_dict(data)).sample_elements()


def test_solid_scenario_cannot_be_gradient_checked(scenario_path) -> None:
    data = json.loads(scenario_path("model_problem.json").read_text())
    data["geometry"].update(nx=8, ny=2)
    data["time"]["n_steps"] = 400
    problem = ImpactProblem(parse_config_dict(data))

    with pytest.raises(ConfigError, match="solid-void or two-material"):
        problem.gradient_check()


def test_step_too_large_for_the_bounds_is_rejected(scenario_path) -> None:
    data = json.loads(scenario_path("gradient_check_8x2.json").read_text())
    data["gradient_check"]["h"] = 0.6
    problem = ImpactProblem(parse_config_dict(data))

    with pytest.raises(ConfigError, match="out of bounds"):
        problem.gradient_check()


@pytest.mark.timeout(300)
def test_elastic_gradient_check_passes(scenario_path) -> None:
    data = json.loads(scenario_path("gradient_check_8x2_elastic.json").read_text())
    data["gradient_check"]["elements"] = [2, 7, 13]
    problem = ImpactProblem(parse_config_dict(data))

    report = problem.gradient_check()

    assert report.complete
    assert [r.element for r in report.rows] == [2, 7, 13]
    assert report.passed, report.rows
