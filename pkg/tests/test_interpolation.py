from __future__ import annotations

import numpy as np
import pytest

from impactopt.constitutive import MaterialParams
from impactopt.errors import InvalidArgumentError
from impactopt.interpolation import (
    SolidVoidScheme,
    TwoMaterialScheme,
    bezier_Be,
    element_materials,
    objective_interp,
    solid_void_maps,
    two_material_maps,
)

BASE = MaterialParams.from_young(
    1.0, 0.3, rho=1.0, sigma_y0=0.01, eps_p0=0.1, n=3.0, eps_dot_p0=1.0, m=3.0,
    Gc=1e-4, ell=0.01, d1=0.01, w1=0.95,
)
TWO = TwoMaterialScheme(E1=0.5, E2=1.0, sy1=0.005, sy2=0.01, Gc1=1e-4, Gc2=0.5e-4, p=3.0)


@pytest.mark.parametrize("k1,k2", [(0.5, 2.0), (0.125, 8.0), (0.3, 4.0)])
def test_bezier_endpoints_and_slopes(k1: float, k2: float) -> None:
    B, dB = bezier_Be(np.array([0.0, 1.0]), k1, k2)

    np.testing.assert_allclose(B, [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(dB, [k1, k2], rtol=1e-8)


def test_bezier_is_monotone_and_slope_consistent() -> None:
    eta = np.linspace(0.0, 1.0, 101)
    B, dB = bezier_Be(eta, 0.5, 2.0)

    assert np.all(np.diff(B) > 0.0)
    h = 1e-6
    mid = eta[1:-1]
    fd = (bezier_Be(mid + h, 0.5, 2.0)[0] - bezier_Be(mid - h, 0.5, 2.0)[0]) / (2 * h)
    np.testing.assert_allclose(dB[1:-1], fd, rtol=1e-5)


def test_bezier_rejects_bad_arguments() -> None:
    with pytest.raises(InvalidArgumentError):
        bezier_Be(1.2, 0.5, 2.0)
    with pytest.raises(InvalidArgumentError):
        bezier_Be(0.5, 1.5, 2.0)


def test_void_is_weaker_in_stiffness_than_in_plasticity_and_damage() -> None:
    scheme = SolidVoidScheme()
    maps = solid_void_maps(np.array([scheme.eta_min, 1.0]), scheme)

    assert maps.B_p[0] / maps.B_e[0] == pytest.approx(2.0, rel=0.1)
    assert maps.B_a[0] / maps.B_e[0] == pytest.approx(10.0, rel=0.1)
    np.testing.assert_allclose([maps.B_e[1], maps.B_p[1], maps.B_a[1]], 1.0, rtol=1e-12)
    assert maps.rho[0] == pytest.approx(scheme.eta_min)
    with pytest.raises(InvalidArgumentError):
        solid_void_maps(np.array([0.001]), scheme)


def test_shifts_follow_k1_under_continuation() -> None:
    scheme = SolidVoidScheme().with_slopes(0.125, 8.0)

    assert scheme.shift_p == pytest.approx(0.125 * 0.01)
    assert scheme.shift_a == pytest.approx(9.0 * 0.125 * 0.01)
    assert SolidVoidScheme(k1=1.5).violations()


def test_two_material_endpoints() -> None:
    maps = two_material_maps(np.array([0.0, 1.0]), TWO)

    np.testing.assert_allclose(maps.E, [0.5, 1.0])
    np.testing.assert_allclose(maps.sigma_y, [0.005, 0.01])
    np.testing.assert_allclose(maps.Gc, [1e-4, 0.5e-4])
    assert TwoMaterialScheme(E1=2.0, E2=1.0, sy1=0.005, sy2=0.01, Gc1=1e-4, Gc2=0.5e-4).violations()


def test_objective_interpolation() -> None:
    P, dP = objective_interp(np.array([0.0, 0.5, 1.0]), 3.0)

    np.testing.assert_allclose(P, [0.0, 0.875, 1.0])
    np.testing.assert_allclose(dP, [3.0, 0.75, 0.0])
    with pytest.raises(InvalidArgumentError):
        objective_interp(0.5, 0.5)


@pytest.mark.parametrize("scheme", [SolidVoidScheme(), TWO], ids=["solid-void", "two-material"])
def test_element_material_slopes_match_finite_differences(scheme) -> None:
    eta = np.array([0.2, 0.45, 0.8])
    h = 1e-6
    mats = element_materials(eta, scheme, BASE, 3.0)
    up = element_materials(eta + h, scheme, BASE, 3.0)
    down = element_materials(eta - h, scheme, BASE, 3.0)

    for name in ("rho", "K", "mu", "sigma_y", "Gc", "sigma_y_obj", "Gc_obj"):
        fd = (getattr(up, name) - getattr(down, name)) / (2 * h)
        np.testing.assert_allclose(getattr(mats, f"d_{name}"), fd, rtol=1e-5, atol=1e-12, err_msg=name)


def test_two_material_keeps_poisson_ratio() -> None:
    mats = element_materials(np.array([0.0, 1.0]), TWO, BASE)
    nu = (mats.K - mats.mu) / (2.0 * mats.K)

    np.testing.assert_allclose(nu, 0.3, rtol=1e-12)
    np.testing.assert_allclose(mats.rho, BASE.rho)
