from __future__ import annotations

import numpy as np
import pytest

from impactopt.adjoint import AdjointSettings, adjoint_damage_admm, run_adjoint
from impactopt.errors import InvalidArgumentError
from impactopt.forward import run_forward
from impactopt.objective import ObjectiveParams, TrajectoryObjective

PARAMS = ObjectiveParams(s=4, c_p=5.0, c_a=50.0, p_O=3.0, sigma_y0=1.0, length=1.0)


def test_undamaged_trajectory_has_a_finite_adjoint(beam) -> None:
    model = beam()
    run = run_forward(model, 0.02, 3)
    obj = TrajectoryObjective(model, run.record, model.materials, PARAMS)

    assert run.record.alpha.max() == 0.0
    assert np.any(obj.damage_terminal)
    adjoint = run_adjoint(model, run.record, obj, AdjointSettings())

    np.testing.assert_array_equal(adjoint.b, 0.0)
    np.testing.assert_array_equal(adjoint.z, 0.0)
    assert np.any(adjoint.chi[3])
    assert np.all(np.isfinite(adjoint.xi))
    S = model.space.S
    free = model.space.free
    np.testing.assert_allclose(
        (S @ adjoint.chi[3])[free], obj.damage_terminal[free], rtol=1e-10, atol=1e-12
    )


def test_zero_sources_give_a_zero_adjoint(beam) -> None:
    model = beam()
    space = model.space
    alpha = np.zeros(space.n_gauss)

    result = adjoint_damage_admm(
        model, model.factor_cache(), 0.01, alpha, alpha, np.ones_like(alpha),
        np.zeros_like(alpha), np.zeros(space.size),
    )

    assert result.iterations == 0
    np.testing.assert_array_equal(result.chi, 0.0)
    np.testing.assert_array_equal(result.alpha_prev_bar, 0.0)


def _dense_damage_adjoint(model, r, active, F, alpha_bar, a_bar):
    """Unreduced weighted system in (b_A, z_free, chi_free), solved densely."""
    space = model.space
    free = space.free
    A = np.flatnonzero(active)
    w = space.weights[A]
    NA = space.N.toarray()[A][:, free]
    K = model.K_grad.toarray()[np.ix_(free, free)]
    S = space.S.toarray()[np.ix_(free, free)]
    na, nf = len(A), len(free)
    M = np.zeros((na + 2 * nf, na + 2 * nf))
    M[:na, :na] = np.diag(w * (F[A] + r))
    M[:na, na:na + nf] = -r * w[:, None] * NA
    M[:na, na + nf:] = -w[:, None] * NA
    M[na:na + nf, :na] = M[:na, na:na + nf].T
    M[na + nf:, :na] = M[:na, na + nf:].T
    M[na:na + nf, na:na + nf] = K + r * S
    M[na:na + nf, na + nf:] = S
    M[na + nf:, na:na + nf] = S
    rhs = np.concatenate([alpha_bar[A], a_bar[free], np.zeros(nf)])
    x = np.linalg.solve(M, rhs)
    b = np.zeros(space.n_gauss)
    b[A] = x[:na]
    z = np.zeros(space.size)
    chi = np.zeros(space.size)
    z[free] = x[na:na + nf]
    chi[free] = x[na + nf:]
    return b, z, chi


@pytest.mark.timeout(30)
@pytest.mark.parametrize("r", [0.01, 1.0, 100.0])
def test_damage_adjoint_solves_the_weighted_system(beam, r) -> None:
    model = beam(Gc=1e-3)
    space = model.space
    rng = np.random.default_rng(7)
    alpha_prev = np.zeros(space.n_gauss)
    alpha = np.where(rng.random(space.n_gauss) < 0.4, 0.3, 0.0)
    alpha[:3] = 1.0
    H = rng.random(space.n_gauss)
    alpha_bar = rng.standard_normal(space.n_gauss)
    a_bar = rng.standard_normal(space.size)
    b1 = model.base
    F = (2.0 + 2.0 * b1.d1) * H + 2.0 * (1.0 - b1.w1) * model.local_coeff
    active = (alpha > alpha_prev) & (alpha < 1.0)

    result = adjoint_damage_admm(
        model, model.factor_cache(), r, alpha, alpha_prev, H, alpha_bar, a_bar
    )
    b, z, chi = _dense_damage_adjoint(model, r, active, F, alpha_bar, a_bar)

    assert 1 <= result.iterations <= 5
    scale = np.abs(np.concatenate([b, z, chi])).max()
    np.testing.assert_allclose(result.b, b, atol=1e-8 * scale)
    np.testing.assert_allclose(result.z, z, atol=1e-8 * scale)
    np.testing.assert_allclose(result.chi, chi, atol=1e-8 * scale)
    N = space.N
    held = alpha == alpha_prev
    expected_prev = alpha_bar + space.weights * (r * (N @ z) + N @ chi)
    np.testing.assert_allclose(result.alpha_prev_bar[held], expected_prev[held], atol=1e-8 * scale)
    np.testing.assert_array_equal(result.alpha_prev_bar[alpha == 1.0], 0.0)


def test_adjoint_rejects_a_foreign_record(beam) -> None:
    model = beam()
    run = run_forward(model, 0.02, 2)
    obj = TrajectoryObjective(model, run.record, model.materials, PARAMS)
    run.record.u = run.record.u[:, :-1]

    with pytest.raises(InvalidArgumentError):
        run_adjoint(model, run.record, obj)
