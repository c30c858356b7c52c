from __future__ import annotations

import numpy as np
import pytest

from impactopt.errors import InvalidArgumentError
from impactopt.loading import LoadProgram, gaussian_edge_weights, gaussian_top_load
from impactopt.mesh import build_structured_mesh


def test_edge_weights_are_normalized_and_symmetric() -> None:
    mesh = build_structured_mesh(20, 5, 1.0, 0.25)
    top = mesh.boundary_sets["top"]

    w = gaussian_edge_weights(mesh, top, 0.5, 0.05, 0.2)

    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    x = mesh.node_coords[top, 0]
    assert np.all(np.diff(x) > 0.0)
    np.testing.assert_allclose(w, w[::-1], atol=1e-14)
    assert np.all(w[np.abs(x - 0.5) > 0.1 + 0.05 + 1e-12] == 0.0)


def test_edge_weights_need_overlap() -> None:
    mesh = build_structured_mesh(4, 1, 1.0, 0.25)
    with pytest.raises(InvalidArgumentError):
        gaussian_edge_weights(mesh, mesh.boundary_sets["top"], 5.0, 0.05, 0.2)
    with pytest.raises(InvalidArgumentError):
        gaussian_edge_weights(mesh, mesh.boundary_sets["top"], 0.5, 0.0, 0.2)


@pytest.mark.parametrize("pulse", ["box", "half_sine"])
def test_pulse_delivers_the_impulse(pulse: str) -> None:
    mesh = build_structured_mesh(10, 2, 1.0, 0.25)
    load = gaussian_top_load(mesh, 1.0, impulse=2e-3, duration=1.5, pulse=pulse)
    n = 400
    dt = 1.5 / n
    times = (np.arange(n) + 0.5) * dt

    total = sum(load.nodal_force(t, mesh.n_nodes)[:, 1].sum() for t in times) * dt

    assert total == pytest.approx(-2e-3, rel=1e-4)
    assert load.amplitude(1.5) == 0.0
    assert load.amplitude(-0.1) == 0.0


def test_scale_multiplies_the_traction_only() -> None:
    mesh = build_structured_mesh(4, 2, 1.0, 0.5)
    load = gaussian_top_load(mesh, 1.0, 1.0, 1.0, body_force=np.array([0.0, -2.0]))
    body = load.nodal_force(5.0, mesh.n_nodes)
    full = load.nodal_force(0.5, mesh.n_nodes) - body
    load.scale = 0.7

    np.testing.assert_allclose(load.nodal_force(0.5, mesh.n_nodes) - body, 0.7 * full, rtol=1e-14)
    assert body[:, 1].sum() == pytest.approx(-2.0 * 0.5, rel=1e-13)


def test_empty_program_applies_nothing() -> None:
    np.testing.assert_array_equal(LoadProgram.none().nodal_force(0.0, 3), 0.0)
    with pytest.raises(InvalidArgumentError):
        LoadProgram(nodes=np.zeros(0, dtype=np.int64), weights=np.zeros(0), pulse="ramp")
