"""Backward sweep of the discrete adjoint.

The sweep transposes one forward step at a time, from the last step back to
the first. Within a step the order is reversed too: the damage ADMM first,
then the return map, then the central-difference kinematics. Every
linearization is taken at the recorded forward state. The damage adjoint is
the transpose of the converged ADMM fixed point at the penalty that the
forward step exited with; it is solved exactly, not by splitting, because a
splitting driven by that penalty stalls when the penalty is small.

Naming follows the forward module. ``xi`` is the nodal adjoint of the
acceleration, pulled back through the lumped mass. ``z`` and ``chi`` are the
adjoints of ``a`` and ``lambda``. ``b`` is the Gauss-point adjoint of
``alpha``. ``gamma`` holds the return-map multipliers. ``mu_adj`` and
``A_accum`` carry the cotangents of the plastic strain and of the
accumulated dissipation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import constitutive as cm
from .errors import InvalidArgumentError, SolverError
from .forward import DynamicModel, TrajectoryRecord
from .mesh import divergence_of_stress, scatter_nodal, strain_at_gauss
from .objective import TrajectoryObjective, partials_at_step
from .sparse import PenaltyFactorCache

logger = logging.getLogger(__name__)


@dataclass
class AdjointSettings:
    tol_abs: float = 1e-10
    tol_rel: float = 1e-10
    max_iters: int = 5000

    def violations(self) -> List[str]:
        problems = []
        if not (self.tol_abs > 0.0 and self.tol_rel > 0.0):
            problems.append("adjoint tolerances must be positive")
        if self.max_iters < 1:
            problems.append("adjoint max_iters must be >= 1")
        return problems


@dataclass
class AdjointState:
    """Cotangents of the level-``n`` forward state while the sweep sits at ``n``."""

    u_bar: np.ndarray
    xi_v_half: np.ndarray
    alpha_bar: np.ndarray
    a_bar: np.ndarray
    q_bar: np.ndarray
    mu_adj: np.ndarray
    A_accum: np.ndarray
    step: int

    @classmethod
    def terminal(cls, model: DynamicModel, objective: TrajectoryObjective, n_steps: int) -> "AdjointState":
        ngd = model.space.n_gauss
        parts = partials_at_step(objective, n_steps)
        return cls(
            u_bar=parts.du,
            xi_v_half=np.zeros((model.n_nodes, 2)),
            alpha_bar=np.zeros(ngd),
            a_bar=parts.da,
            q_bar=parts.dq,
            mu_adj=np.zeros((ngd, 2, 2)),
            A_accum=parts.dg,
            step=n_steps,
        )


class AdjointRecord:
    """Adjoint fields kept for sensitivity accumulation.

    ``xi[n]`` pairs with forward step ``n -> n+1``; ``b, z, chi, gamma`` are
    indexed by the level ``k`` of the step ``k-1 -> k`` that produced them
    (index 0 stays zero). ``mu_adj`` and ``A_accum`` hold the completed
    level cotangents.
    """

    def __init__(self, n_steps: int, n_nodes: int, n_damage: int, n_design_gauss: int,
                 spill_dir: Optional[Path] = None) -> None:
        self.n_steps = n_steps
        self.spill_dir = Path(spill_dir) if spill_dir is not None else None
        levels = n_steps + 1
        self.xi = self._allocate("xi", (n_steps, n_nodes, 2))
        self.xi_v_half = self._allocate("xi_v_half", (levels, n_nodes, 2))
        self.z = self._allocate("z", (levels, n_damage))
        self.chi = self._allocate("chi", (levels, n_damage))
        self.b = self._allocate("b", (levels, n_design_gauss))
        self.gamma = self._allocate("gamma", (levels, n_design_gauss))
        self.mu_adj = self._allocate("mu_adj", (levels, n_design_gauss, 2, 2))
        self.A_accum = self._allocate("A_accum", (levels, n_design_gauss))
        self.iterations = np.zeros(levels, dtype=np.int64)

    def _allocate(self, name: str, shape: tuple) -> np.ndarray:
        if self.spill_dir is None:
            return np.zeros(shape)
        self.spill_dir.mkdir(parents=True, exist_ok=True)
        arr = np.lib.format.open_memmap(self.spill_dir / f"{name}.npy", mode="w+", dtype=float, shape=shape)
        arr[...] = 0.0
        return arr


# ------------------------------------------------------------ damage adjoint


@dataclass
class DamageAdjoint:
    b: np.ndarray
    z: np.ndarray
    chi: np.ndarray
    alpha_prev_bar: np.ndarray
    iterations: int
    r_p: float = 0.0
    r_d: float = 0.0


def active_damage_points(alpha: np.ndarray, alpha_prev: np.ndarray) -> np.ndarray:
    """Gauss points whose damage moved strictly inside ``(alpha_prev, 1)``."""
    return (alpha > alpha_prev) & (alpha < 1.0)


def _damage_residuals(
    cache: PenaltyFactorCache, r: float, Pb: np.ndarray, z: np.ndarray, chi: np.ndarray,
    a_src: np.ndarray,
) -> tuple:
    """Consensus gap ``S z - P b`` and the global-row residual, with their scales."""
    S, K = cache.mass().matrix, cache.stiffness
    Sz, Schi, Kz = S @ z, S @ chi, K @ z
    gap = Sz - Pb
    row = Kz + r * Sz + Schi - r * Pb - a_src
    scale_p = max(np.linalg.norm(Pb), np.linalg.norm(Sz))
    scale_d = (np.linalg.norm(Kz) + r * np.linalg.norm(Sz) + np.linalg.norm(Schi)
               + r * np.linalg.norm(Pb) + np.linalg.norm(a_src))
    return float(np.linalg.norm(gap)), float(np.linalg.norm(row)), scale_p, scale_d


def adjoint_damage_admm(
    model: DynamicModel,
    cache: PenaltyFactorCache,
    r: float,
    alpha: np.ndarray,
    alpha_prev: np.ndarray,
    H: np.ndarray,
    alpha_bar: np.ndarray,
    a_bar: np.ndarray,
    settings: AdjointSettings = AdjointSettings(),
    step: Optional[int] = None,
) -> DamageAdjoint:
    """Transpose of the converged damage update at penalty ``r``.

    With the forward active set fixed, the converged update is linear in
    ``(alpha, a, lambda)`` and symmetric once the pointwise rows are weighted
    by the quadrature weights. The pointwise rows are eliminated in closed
    form, leaving a saddle system in ``(z, chi)`` on the free nodes::

        [K + r S - r^2 G   S - r G] [z  ]   [a_bar + r h]
        [S - r G           -G     ] [chi] = [h          ]

    with ``G = N_A^T diag(w / (F + r)) N_A`` and ``h = N_A^T (alpha_bar / (F + r))``.
    It is factorized once and polished by iterative refinement until the
    consensus and global residuals pass the forward exit tests. Points held at
    ``alpha_prev`` pass their cotangent back to the previous level; points
    capped at one drop it.
    """
    space = model.space
    free = space.free
    N = space.N
    w = space.weights
    b1 = model.base
    F = (2.0 + 2.0 * b1.d1) * H + 2.0 * (1.0 - b1.w1) * model.local_coeff
    active = active_damage_points(alpha, alpha_prev)
    lower = ~(alpha > alpha_prev)

    n_a = space.size
    z = np.zeros(n_a)
    chi = np.zeros(n_a)
    a_src = np.zeros(n_a)
    a_src[free] = a_bar[free]
    if not (np.any(alpha_bar) or np.any(a_src)):
        return DamageAdjoint(np.zeros_like(alpha), z, chi, np.zeros_like(alpha), 0)

    src = alpha_bar / w
    nf = len(free)
    iterations = 0
    r_p = r_d = 0.0
    if nf and not np.any(active):
        # no point moved: S z = 0 forces z = 0 and chi carries a_bar alone
        chi[free] = cache.mass().solve(a_src[free])
        iterations = 1
    elif nf:
        inv = np.where(active, 1.0 / (F + r), 0.0)
        Nf = sp.csr_matrix(N)[:, free]
        G = (Nf.T @ sp.diags(w * inv) @ Nf).tocsc()
        h = Nf.T @ (inv * alpha_bar)
        S = cache.mass().matrix
        coupling = S - r * G
        system = sp.bmat(
            [[cache.stiffness + r * S - r * r * G, coupling], [coupling, -G]], format="csc"
        )
        rhs = np.concatenate([a_src[free] + r * h, h])
        lu = splu(system)
        x = np.zeros(2 * nf)
        residual = rhs
        floor = settings.tol_abs * float(np.linalg.norm(rhs)) / math.sqrt(nf)
        for iterations in range(1, settings.max_iters + 1):
            x = x + lu.solve(residual)
            z[free], chi[free] = x[:nf], x[nf:]
            b = inv * (src + r * (N @ z) + N @ chi)
            r_p, r_d, scale_p, scale_d = _damage_residuals(
                cache, r, (space.P @ b)[free], z[free], chi[free], a_src[free]
            )
            scale_p += float(np.linalg.norm(G @ x[nf:]) + r * np.linalg.norm(G @ x[:nf]))
            if r_p <= floor + settings.tol_rel * scale_p and r_d <= floor + settings.tol_rel * scale_d:
                break
            residual = rhs - system @ x
        else:
            logger.error("adjoint damage solve failed after %d refinements", settings.max_iters)
            raise SolverError(
                "adjoint damage solve did not reach its tolerance",
                step=step,
                diagnostics={"r_p": r_p, "r_d": r_d, "active_points": int(active.sum())},
            )

    b = np.where(active, (src + r * (N @ z) + N @ chi) / (F + r), 0.0)
    passed = alpha_bar + w * (r * (N @ z) + N @ chi)
    alpha_prev_bar = np.where(lower, passed, 0.0)
    return DamageAdjoint(b, z, chi, alpha_prev_bar, iterations, r_p, r_d)


def drive_cotangent(model: DynamicModel, alpha: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cotangent of the damage drive ``H`` given the damage adjoint ``b``."""
    d_prime = cm.degradation_terms(alpha, model.base.d1)[1]
    return -model.space.weights * d_prime * b


# ---------------------------------------------------------- plasticity adjoint


@dataclass
class ReturnMapLinearization:
    """Recorded-state quantities of one return map, reused by both backward passes."""

    dq: np.ndarray
    M: np.ndarray
    sigma_trial: np.ndarray
    plastic: np.ndarray
    dphi_ddq: np.ndarray
    dphi_dq: np.ndarray
    dphi_dsy: np.ndarray


def linearize_return_map(model: DynamicModel, record: TrajectoryRecord, k: int) -> ReturnMapLinearization:
    idx = model.design_gp
    b = model.base
    dt = record.dt
    eps = strain_at_gauss(model.mesh, np.asarray(record.u[k]))[idx]
    eps_p_prev = np.asarray(record.eps_p[k - 1])[idx]
    q_prev = np.asarray(record.q[k - 1])[idx]
    dq = np.asarray(record.q[k])[idx] - q_prev
    mu = model.mu_gp[idx]
    sy = model.sigma_y_gp
    sigma, M, _ = cm.mises_normalized(eps, eps_p_prev, mu)
    plastic = dq > 0.0
    q = q_prev + dq
    rate = dq / dt
    dphi_ddq = np.full_like(dq, -1.0)
    dphi_dq = np.zeros_like(dq)
    dphi_dsy = np.zeros_like(dq)
    if np.any(plastic):
        p = plastic
        flow = cm.unit_flow_stress(q[p], b.eps_p0, b.n)
        flow_slope = cm.unit_flow_slope(q[p], b.eps_p0, b.n)
        rate_stress = cm.unit_rate_stress(rate[p], b.eps_dot_p0, b.m)
        rate_slope = cm.unit_rate_slope(rate[p], b.eps_dot_p0, b.m)
        dphi_ddq[p] = -3.0 * mu[p] - sy[p] * (flow_slope + rate_slope / dt)
        dphi_dq[p] = -sy[p] * flow_slope
        dphi_dsy[p] = -(flow + rate_stress)
    return ReturnMapLinearization(dq, M, sigma, plastic, dphi_ddq, dphi_dq, dphi_dsy)


@dataclass
class PlasticAdjoint:
    gamma: np.ndarray
    eps_bar: np.ndarray
    q_prev_bar: np.ndarray
    eps_p_prev_bar: np.ndarray
    g_prev_bar: np.ndarray


def adjoint_plastic_update(
    model: DynamicModel,
    lin: ReturnMapLinearization,
    q_bar: np.ndarray,
    eps_p_bar: np.ndarray,
    g_bar: np.ndarray,
    dt: float,
) -> PlasticAdjoint:
    """Transpose of the return map at the design Gauss points.

    Elastic points pass every cotangent through unchanged. At plastic points
    the increment cotangent is turned into the multiplier ``gamma`` of the
    scalar consistency equation, which then feeds the trial strain, the
    previous hardening variable and the material parameters.
    """
    b = model.base
    p = lin.plastic
    mu = model.mu_gp[model.design_gp]
    gamma = np.zeros_like(lin.dq)
    eps_bar = np.zeros_like(eps_p_bar)
    q_prev_bar = q_bar.copy()
    eps_p_prev_bar = eps_p_bar.copy()
    if np.any(p):
        M = lin.M[p]
        rate = lin.dq[p] / dt
        dq_bar = q_bar[p] + cm.ddot(eps_p_bar[p], M) + g_bar[p] * cm.unit_rate_stress(rate, b.eps_dot_p0, b.m)
        kappa = -dq_bar / lin.dphi_ddq[p]
        gamma[p] = kappa
        M_bar = lin.dq[p][:, None, None] * eps_p_bar[p]
        sig = lin.sigma_trial[p]
        e_bar = (2.0 * mu[p] * kappa)[:, None, None] * M + (3.0 * mu[p] / sig)[:, None, None] * (
            cm.deviator(M_bar) - (2.0 / 3.0) * cm.ddot(M, M_bar)[:, None, None] * M
        )
        eps_bar[p] = e_bar
        eps_p_prev_bar[p] -= e_bar
        q_prev_bar[p] += kappa * lin.dphi_dq[p]
    return PlasticAdjoint(gamma, eps_bar, q_prev_bar, eps_p_prev_bar, g_bar.copy())


# ------------------------------------------------------ displacement adjoint


def _strain_transpose(model: DynamicModel, eps_bar_design: np.ndarray) -> np.ndarray:
    """``B^T eps_bar`` for a cotangent given on the design Gauss points."""
    full = np.zeros((model.n_gauss, 2, 2))
    full[model.design_gp] = eps_bar_design / model.space.weights[:, None, None]
    return scatter_nodal(model.mesh, divergence_of_stress(model.mesh, full))


@dataclass
class DisplacementAdjoint:
    xi: np.ndarray
    u_prev_bar: np.ndarray
    eps_p_prev_bar: np.ndarray
    alpha_prev_bar: np.ndarray


def adjoint_displacement_step(
    model: DynamicModel,
    record: TrajectoryRecord,
    n: int,
    acc_bar: np.ndarray,
) -> DisplacementAdjoint:
    """Transpose of ``acc^n = M^-1 (f(t^n) - F_int(u^n, eps_p^n, alpha^n))``.

    ``xi`` is ``M^-1 acc_bar`` on the free nodes; the internal force then
    returns cotangents to the displacement, plastic strain and damage of
    level ``n``.
    """
    xi = model.inv_mass[:, None] * acc_bar
    if not np.any(xi):
        ngd = model.space.n_gauss
        return DisplacementAdjoint(xi, np.zeros_like(xi), np.zeros((ngd, 2, 2)), np.zeros(ngd))
    u = np.asarray(record.u[n])
    eps_p = np.asarray(record.eps_p[n])
    alpha = np.asarray(record.alpha[n])
    eps_e = strain_at_gauss(model.mesh, u) - eps_p
    d = model.degradation(alpha)
    By = strain_at_gauss(model.mesh, xi)
    C_By = cm.amor_tangent_apply(eps_e, d, model.K_gp, model.mu_gp, By)
    u_prev_bar = -model.internal_force(C_By)
    idx = model.design_gp
    w = model.space.weights
    eps_p_prev_bar = w[:, None, None] * C_By[idx]
    resp = cm.elastic_response(eps_e[idx], alpha[idx], model.K_gp[idx], model.mu_gp[idx], model.base.d1)
    alpha_prev_bar = -w * cm.ddot(resp.dstress_da, By[idx])
    return DisplacementAdjoint(xi, u_prev_bar, eps_p_prev_bar, alpha_prev_bar)


# ------------------------------------------------------------------- sweep


def run_adjoint(
    model: DynamicModel,
    record: TrajectoryRecord,
    objective: TrajectoryObjective,
    settings: AdjointSettings = AdjointSettings(),
    cache: Optional[PenaltyFactorCache] = None,
    spill_dir: Optional[Path] = None,
) -> AdjointRecord:
    """Sweep backwards over every recorded step."""
    N = record.n_steps
    if record.u.shape[1] != model.n_nodes or record.alpha.shape[1] != model.n_gauss:
        raise InvalidArgumentError("trajectory record does not match the model")
    cache = cache or model.factor_cache()
    dt = record.dt
    idx = model.design_gp
    out = AdjointRecord(N, model.n_nodes, model.n_damage, model.space.n_gauss, spill_dir)
    state = AdjointState.terminal(model, objective, N)
    out.mu_adj[N] = state.mu_adj
    out.A_accum[N] = state.A_accum

    for k in range(N, 0, -1):
        n = k - 1
        alpha_k = np.asarray(record.alpha[k])[idx]
        alpha_n = np.asarray(record.alpha[n])[idx]
        eps_k = strain_at_gauss(model.mesh, np.asarray(record.u[k]))
        gp_k = record.state(k).gp
        H = model.damage_drive(eps_k, gp_k)

        dmg = adjoint_damage_admm(
            model, cache, float(record.penalty[n]), alpha_k, alpha_n, H,
            state.alpha_bar, state.a_bar, settings, step=k,
        )
        H_bar = drive_cotangent(model, alpha_k, dmg.b)
        eps_e = eps_k[idx] - gp_k.eps_p[idx]
        psi_grad = cm.tension_stress(eps_e, model.K_gp[idx], model.mu_gp[idx])
        eps_bar = H_bar[:, None, None] * psi_grad
        eps_p_bar = state.mu_adj - eps_bar
        q_bar = state.q_bar + H_bar * model.sigma_y_gp * cm.unit_flow_stress(
            gp_k.q[idx], model.base.eps_p0, model.base.n
        )
        g_bar = state.A_accum + H_bar * model.sigma_y_gp

        lin = linearize_return_map(model, record, k)
        plast = adjoint_plastic_update(model, lin, q_bar, eps_p_bar, g_bar, dt)
        eps_bar = eps_bar + plast.eps_bar

        u_bar_k = state.u_bar + _strain_transpose(model, eps_bar)
        v_bar = state.xi_v_half + dt * u_bar_k
        kick = 0.5 * dt if n == 0 else dt
        disp = adjoint_displacement_step(model, record, n, kick * v_bar)

        u_bar_n = u_bar_k + disp.u_prev_bar
        if n >= 1:
            u_bar_n = u_bar_n + partials_at_step(objective, n).du

        out.xi[n] = disp.xi
        out.xi_v_half[k] = v_bar
        out.z[k] = dmg.z
        out.chi[k] = dmg.chi
        out.b[k] = dmg.b
        out.gamma[k] = plast.gamma
        out.iterations[k] = dmg.iterations

        state = AdjointState(
            u_bar=u_bar_n,
            xi_v_half=v_bar,
            alpha_bar=dmg.alpha_prev_bar + disp.alpha_prev_bar,
            a_bar=np.zeros(model.n_damage),
            q_bar=plast.q_prev_bar,
            mu_adj=plast.eps_p_prev_bar + disp.eps_p_prev_bar,
            A_accum=plast.g_prev_bar,
            step=n,
        )
        out.mu_adj[n] = state.mu_adj
        out.A_accum[n] = state.A_accum
        logger.debug("adjoint step %d: %d damage refinements (r_p=%.2e)", k, dmg.iterations, dmg.r_p)

    logger.info("adjoint sweep: %d steps, max damage refinements %d", N, int(out.iterations.max()))
    return out
