"""Acceptance-scale runs; enable with ``--runslow``."""

from __future__ import annotations

import json

import numpy as np
import pytest

from impactopt.config import parse_config, parse_config_dict
from impactopt.constitutive import MaterialParams, longitudinal_wave_speed
from impactopt.forward import DynamicModel, run_forward
from impactopt.interpolation import SolidVoidScheme, element_materials
from impactopt.loading import LoadProgram
from impactopt.mesh import build_structured_mesh
from impactopt.optimizer import run_optimization
from impactopt.scenarios import ImpactProblem

pytestmark = pytest.mark.slow


@pytest.mark.timeout(1800)
def test_damage_gradient_check(scenario_path, tmp_path) -> None:
    problem = ImpactProblem(parse_config(scenario_path("gradient_check_8x2.json")))

    report = problem.gradient_check()
    report.write_csv(tmp_path / "gradient_check.csv")

    assert report.complete
    assert len(report.rows) == 10
    assert report.passed, f"max rel. error {report.max_rel_error:.3e}"


@pytest.mark.timeout(3600)
def test_model_problem_forward(scenario_path) -> None:
    problem = ImpactProblem(parse_config(scenario_path("model_problem.json")))

    run = problem.forward(problem.initial_design())
    reports = run.result.reports

    assert len(reports) == 1500
    assert reports[-1].max_alpha > 0.0
    assert reports[-1].plastic > 0.0
    assert all(r.admm_iterations >= 1 for r in reports)


@pytest.mark.timeout(3600)
def test_short_blast_optimization(scenario_path, tmp_path) -> None:
    data = json.loads(scenario_path("blast_solid_void_20x5.json").read_text())
    data["optimizer"]["max_iters"] = 3
    problem = ImpactProblem(parse_config_dict(data))

    result = run_optimization(problem, problem.initial_design(), problem.cfg.optimizer, tmp_path)

    assert result.iterations == 3
    assert [row["iter"] for row in result.history] == [1, 2, 3]
    assert problem.constraint.fraction(result.eta) <= 0.5 + 1e-6
    assert np.all(result.eta >= problem.lower)


def _design_centroids(problem: ImpactProblem) -> np.ndarray:
    mesh = problem.mesh
    return mesh.node_coords[mesh.elements[mesh.design_elements]].mean(axis=1)


def _element_means(gauss_values: np.ndarray, problem: ImpactProblem) -> np.ndarray:
    return np.asarray(gauss_values).reshape(-1, 4).mean(axis=1)[problem.mesh.design_elements]


@pytest.mark.timeout(600)
def test_plane_strain_bar_carries_its_wavefront_at_the_longitudinal_speed() -> None:
    mesh = build_structured_mesh(200, 1, 1.0, 0.005)
    # nu = 0 decouples the lateral faces, so the strip is exactly one-dimensional
    base = MaterialParams.from_young(
        1.0, 0.0, rho=1.0, sigma_y0=1e3, eps_p0=0.1, n=3.0, eps_dot_p0=1.0, m=3.0,
        Gc=1e3, ell=0.1, d1=0.01, w1=0.95,
    )
    materials = element_materials(np.ones(mesh.n_elements), SolidVoidScheme(), base, 3.0)
    left = mesh.boundary_sets["left"]
    load = LoadProgram(
        nodes=left, weights=np.full(len(left), 1.0 / len(left)), impulse=1e-5,
        duration=0.05, pulse="half_sine", direction=np.array([1.0, 0.0]),
    ).bind(mesh)
    model = DynamicModel(mesh, base, materials, load, clamped_sets=("right",))
    c_L = longitudinal_wave_speed(base.K, base.mu, base.rho)
    dt = 0.002

    run = run_forward(model, dt, 350)

    bottom = mesh.boundary_sets["bottom"]
    x = mesh.node_coords[bottom, 0]

    def half_amplitude_front(n: int) -> float:
        u = np.asarray(run.record.u[n])[bottom, 0]
        half = 0.5 * u[0]
        j = int(np.flatnonzero(u >= half).max())
        return float(x[j] + (u[j] - half) / (u[j] - u[j + 1]) * (x[j + 1] - x[j]))

    speed = (half_amplitude_front(350) - half_amplitude_front(150)) / (200 * dt)
    assert speed == pytest.approx(c_L, rel=0.02)


@pytest.mark.timeout(1800)
def test_strong_impact_nucleates_damage_inside_the_plate(scenario_path) -> None:
    problem = ImpactProblem(parse_config(scenario_path("impact_two_material_60x15.json")))
    assert problem.cfg.impact.velocity == pytest.approx(0.110)
    H = problem.cfg.geometry.H
    hy = H / problem.cfg.geometry.ny
    depth = H - _design_centroids(problem)[:, 1]

    strong = problem.forward(np.ones(problem.n_design), keep_trajectory=False).result.last
    damage = _element_means(strong.gp.alpha, problem)

    assert damage.max() > 0.0
    deepest = depth[int(np.argmax(damage))]
    # the row of peak damage touches neither the impact face nor the back face
    assert hy < deepest < H - hy


@pytest.mark.timeout(1800)
def test_tough_impact_hardens_near_the_impact_face_or_the_supports(scenario_path) -> None:
    problem = ImpactProblem(parse_config(scenario_path("impact_two_material_60x15.json")))
    L = problem.cfg.geometry.L
    H = problem.cfg.geometry.H
    centroids = _design_centroids(problem)

    tough = problem.forward(np.zeros(problem.n_design), keep_trajectory=False).result.last
    q = _element_means(tough.gp.q, problem)

    assert q.max() > 0.0
    x, y = centroids[int(np.argmax(q))]
    assert H - y < H / 3.0 or min(x, L - x) < 0.1 * L


@pytest.mark.timeout(7200)
def test_two_material_optimization_beats_its_start_and_both_baselines(scenario_path, tmp_path) -> None:
    data = json.loads(scenario_path("impact_two_material_60x15.json").read_text())
    data["geometry"].update(nx=20, ny=5)
    data["impact"].update(flyer_nx=12, flyer_ny=4)
    data["optimizer"].update(fixed_at=1, max_iters=60, conv_tol=1e-12)
    problem = ImpactProblem(parse_config_dict(data))

    result = run_optimization(problem, problem.initial_design(), problem.cfg.optimizer, tmp_path)
    final = problem.evaluate(result.eta).total
    baselines = problem.baselines()

    assert result.iterations == 60
    assert all(row["volume"] <= data["design"]["volume_limit"] + 1e-6 for row in result.history)
    assert final < result.history[0]["total"]
    assert final < baselines["lower"].total
    assert final < baselines["upper"].total
