"""Forward time integration.

Each step advances the displacement with an explicit central-difference
update, then corrects plasticity with a backward-Euler return map and finally
solves the damage problem by ADMM: a pointwise problem for the Gauss-point
field ``alpha``, a linear global problem for the nodal field ``a`` and a
weak multiplier update for ``lambda``.

The multiplier lives on the free damage nodes only, so the weak constraint
``(S a - P alpha)_free = 0`` is what the iterations drive to zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import constitutive as cm
from .constitutive import MaterialParams
from .errors import ConfigError, InvalidArgumentError, SolverError
from .interpolation import ElementMaterials
from .loading import LoadProgram
from .mesh import CONTACT, DESIGN, FLYER, Mesh2D, ScalarSpace, divergence_of_stress, lumped_mass
from .mesh import scatter_nodal, strain_at_gauss
from .parallel import ChunkedExecutor
from .sparse import PenaltyFactorCache

logger = logging.getLogger(__name__)


@dataclass
class ADMMSettings:
    r0: float = 1e-2
    r_min: float = 1e-6
    r_max: float = 1e4
    gamma_r: float = 2.0
    tau: float = 10.0
    tol_abs: float = 1e-7
    tol_rel: float = 1e-7
    max_iters: int = 2000
    adapt: bool = True

    def violations(self) -> List[str]:
        problems = []
        if not 0.0 < self.r_min <= self.r0 <= self.r_max:
            problems.append(f"need 0 < r_min <= r0 <= r_max, got ({self.r_min}, {self.r0}, {self.r_max})")
        if not self.gamma_r > 1.0:
            problems.append(f"gamma_r must be > 1, got {self.gamma_r}")
        if not self.tau > 1.0:
            problems.append(f"tau must be > 1, got {self.tau}")
        if not (self.tol_abs > 0.0 and self.tol_rel > 0.0):
            problems.append("ADMM tolerances must be positive")
        if self.max_iters < 1:
            problems.append("ADMM max_iters must be >= 1")
        return problems


@dataclass
class ReturnMapSettings:
    tol: float = 1e-12
    max_iters: int = 100

    def violations(self) -> List[str]:
        problems = []
        if not self.tol > 0.0:
            problems.append("return-map tolerance must be positive")
        if self.max_iters < 1:
            problems.append("return-map max_iters must be >= 1")
        return problems


def penalty_adapt(r: float, r_p: float, r_d: float, settings: ADMMSettings) -> float:
    """Residual balancing: grow ``r`` when primal lags, shrink it when dual lags."""
    if r_p > settings.tau * r_d:
        return min(settings.gamma_r * r, settings.r_max)
    if r_d > settings.tau * r_p:
        return max(r / settings.gamma_r, settings.r_min)
    return r


@dataclass
class GaussPointState:
    alpha: np.ndarray
    q: np.ndarray
    eps_p: np.ndarray
    g_accum: np.ndarray

    @classmethod
    def zeros(cls, n_gauss: int) -> "GaussPointState":
        return cls(
            alpha=np.zeros(n_gauss),
            q=np.zeros(n_gauss),
            eps_p=np.zeros((n_gauss, 2, 2)),
            g_accum=np.zeros(n_gauss),
        )

    def copy(self) -> "GaussPointState":
        return GaussPointState(self.alpha.copy(), self.q.copy(), self.eps_p.copy(), self.g_accum.copy())


@dataclass
class ForwardState:
    u: np.ndarray
    v_half: np.ndarray
    a: np.ndarray
    lam: np.ndarray
    gp: GaussPointState
    time: float = 0.0
    step: int = 0


@dataclass
class ContactLayer:
    """Asymmetric elastic layer between the flyer and the impact face."""

    K: float
    mu: float
    rho: float
    eps_soft: float = 1e-4


class DynamicModel:
    """Everything static about one forward problem: mesh, materials, loads, operators."""

    def __init__(
        self,
        mesh: Mesh2D,
        base: MaterialParams,
        materials: ElementMaterials,
        load: LoadProgram,
        clamped_sets: Sequence[str] = ("left", "right"),
        contact: Optional[ContactLayer] = None,
        flyer: Optional[MaterialParams] = None,
        flyer_velocity: Optional[Sequence[float]] = None,
        executor: Optional[ChunkedExecutor] = None,
    ) -> None:
        self.mesh = mesh
        self.base = base
        self.materials = materials
        self.load = load
        self.executor = executor or ChunkedExecutor(1)
        self.design = mesh.design_elements
        if materials.n_elements != len(self.design):
            raise InvalidArgumentError(
                f"materials cover {materials.n_elements} elements, "
                f"mesh has {len(self.design)} design elements"
            )
        self.contact_elements = mesh.block_elements(CONTACT)
        self.flyer_elements = mesh.block_elements(FLYER)
        if len(self.contact_elements) and contact is None:
            raise InvalidArgumentError("mesh has contact elements but no contact layer was given")
        if len(self.flyer_elements) and flyer is None:
            raise InvalidArgumentError("mesh has flyer elements but no flyer material was given")

        ne = mesh.n_elements
        self.rho = np.empty(ne)
        self.K = np.empty(ne)
        self.mu = np.empty(ne)
        self.rho[self.design] = materials.rho
        self.K[self.design] = materials.K
        self.mu[self.design] = materials.mu
        if contact is not None:
            self.rho[self.contact_elements] = contact.rho
            self.K[self.contact_elements] = contact.K
            self.mu[self.contact_elements] = contact.mu
        if flyer is not None:
            self.rho[self.flyer_elements] = flyer.rho
            self.K[self.flyer_elements] = flyer.K
            self.mu[self.flyer_elements] = flyer.mu
        self.contact = contact

        self.K_gp = np.repeat(self.K, 4)
        self.mu_gp = np.repeat(self.mu, 4)
        self.fixed_degradation = np.ones(mesh.n_gauss)
        if contact is not None:
            contact_gp = (4 * self.contact_elements[:, None] + np.arange(4)).ravel()
            self.fixed_degradation[contact_gp] = contact.eps_soft

        self.clamped = mesh.dirichlet_dofs(clamped_sets)
        self.free_nodes = ~self.clamped
        self.mass = lumped_mass(mesh, self.rho)
        self.inv_mass = np.where(self.free_nodes, 1.0 / self.mass, 0.0)

        self.space = ScalarSpace(mesh, self.design, np.flatnonzero(self.clamped))
        self.design_gp = self.space.gauss_index
        self.sigma_y_gp = np.repeat(materials.sigma_y, 4)
        self.Gc_gp = np.repeat(materials.Gc, 4)
        self.cw = base.cw
        self.local_coeff = self.Gc_gp / (4.0 * self.cw * base.ell)
        self.grad_coeff = materials.Gc * base.ell / (2.0 * self.cw)
        self.K_grad = self.space.laplacian(self.grad_coeff)

        self.v0 = np.zeros((mesh.n_nodes, 2))
        if flyer_velocity is not None:
            self.v0[mesh.boundary_sets["flyer"]] = np.asarray(flyer_velocity, dtype=float)
            self.v0[self.clamped] = 0.0

    # ------------------------------------------------------------------ sizes

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_gauss(self) -> int:
        return self.mesh.n_gauss

    @property
    def n_damage(self) -> int:
        return self.space.size

    def wave_speeds(self) -> np.ndarray:
        return cm.longitudinal_wave_speed(self.K, self.mu, self.rho)

    def critical_time_step(self, cfl: float = 0.5) -> float:
        h = self.mesh.min_element_size()
        return float(cfl * np.min(h / self.wave_speeds()))

    def factor_cache(self) -> PenaltyFactorCache:
        return PenaltyFactorCache(self.K_grad, self.space.S, self.space.free)

    def initial_state(self) -> ForwardState:
        return ForwardState(
            u=np.zeros((self.n_nodes, 2)),
            v_half=self.v0.copy(),
            a=np.zeros(self.n_damage),
            lam=np.zeros(self.n_damage),
            gp=GaussPointState.zeros(self.n_gauss),
        )

    # ------------------------------------------------------------ mechanics

    def degradation(self, alpha: np.ndarray) -> np.ndarray:
        d = self.fixed_degradation.copy()
        d[self.design_gp] = cm.degradation_terms(alpha[self.design_gp], self.base.d1)[0]
        return d

    def stress(self, u: np.ndarray, eps_p: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        eps_e = strain_at_gauss(self.mesh, u) - eps_p
        return cm.amor_stress(eps_e, self.degradation(alpha), self.K_gp, self.mu_gp)

    def internal_force(self, stress: np.ndarray) -> np.ndarray:
        parts = self.executor.map(
            lambda s, e: divergence_of_stress(self.mesh, stress, s, e), self.mesh.n_elements
        )
        return scatter_nodal(self.mesh, np.concatenate(parts))

    def acceleration(self, u: np.ndarray, eps_p: np.ndarray, alpha: np.ndarray, t: float) -> np.ndarray:
        force = self.load.nodal_force(t, self.n_nodes) - self.internal_force(self.stress(u, eps_p, alpha))
        return self.inv_mass[:, None] * force

    def damage_drive(self, eps: np.ndarray, gp: GaussPointState) -> np.ndarray:
        """``psi+ + sigma_y (W_p + int g)`` on the design Gauss points."""
        idx = self.design_gp
        eps_e = eps[idx] - gp.eps_p[idx]
        psi = cm.tension_energy(eps_e, self.K_gp[idx], self.mu_gp[idx])
        b = self.base
        plastic = cm.unit_plastic_energy(gp.q[idx], b.eps_p0, b.n) + gp.g_accum[idx]
        return psi + self.sigma_y_gp * plastic

    def energies(self, u: np.ndarray, gp: GaussPointState, a: np.ndarray) -> dict:
        """Stored elastic, plastic and damage energies at one level."""
        w = self.mesh.weights
        eps_e = strain_at_gauss(self.mesh, u) - gp.eps_p
        d = self.degradation(gp.alpha)
        elastic = float(np.sum(w * cm.amor_energy(eps_e, d, self.K_gp, self.mu_gp)))
        idx = self.design_gp
        b = self.base
        plastic = float(
            np.sum(
                w[idx]
                * d[idx]
                * self.sigma_y_gp
                * (cm.unit_plastic_energy(gp.q[idx], b.eps_p0, b.n) + gp.g_accum[idx])
            )
        )
        wa = cm.hardening_terms(gp.alpha[idx], b.w1)[0]
        damage = float(np.sum(w[idx] * self.local_coeff * wa) + 0.5 * a @ (self.K_grad @ a))
        return {"elastic": elastic, "plastic": plastic, "damage": damage}


# ------------------------------------------------------------------ return map


@dataclass
class ReturnMapResult:
    q: np.ndarray
    eps_p: np.ndarray
    g_accum: np.ndarray
    dq: np.ndarray
    M: np.ndarray
    sigma_trial: np.ndarray
    plastic: np.ndarray
    iterations: int


RETURN_MAP_FIELDS = ("q", "eps_p", "g_accum", "dq", "M", "sigma_trial", "plastic")


def _flow_residual(dq, sigma_tr, q_n, mu, sy, dt, b: MaterialParams):
    q = q_n + dq
    rate = dq / dt
    phi = sigma_tr - 3.0 * mu * dq - sy * (
        cm.unit_flow_stress(q, b.eps_p0, b.n) + cm.unit_rate_stress(rate, b.eps_dot_p0, b.m)
    )
    dphi = -3.0 * mu - sy * (
        cm.unit_flow_slope(q, b.eps_p0, b.n) + cm.unit_rate_slope(rate, b.eps_dot_p0, b.m) / dt
    )
    return phi, dphi


def plastic_return_map(
    eps: np.ndarray,
    q_n: np.ndarray,
    eps_p_n: np.ndarray,
    g_n: np.ndarray,
    mu: np.ndarray,
    sigma_y: np.ndarray,
    dt: float,
    base: MaterialParams,
    settings: ReturnMapSettings = ReturnMapSettings(),
) -> ReturnMapResult:
    """Backward-Euler viscoplastic predictor-corrector at a batch of points.

    ``mu`` and ``sigma_y`` are the local (interpolated) shear modulus and
    yield stress. The flow direction is frozen at the trial state and the
    increment solves ``phi(dq) = 0``, a strictly decreasing scalar equation,
    by Newton's method inside a bisection bracket. ``g_accum`` is kept per
    unit yield stress.
    """
    if dt <= 0.0:
        raise InvalidArgumentError("time step must be positive")
    sigma_tr, M, _ = cm.mises_normalized(eps, eps_p_n, mu)
    yield_now = sigma_y * cm.unit_flow_stress(q_n, base.eps_p0, base.n)
    plastic = sigma_tr > yield_now
    dq = np.zeros_like(q_n)
    iterations = 0
    if np.any(plastic):
        s_tr, qn, m_, sy = sigma_tr[plastic], q_n[plastic], mu[plastic], sigma_y[plastic]
        lo = np.zeros_like(s_tr)
        hi = s_tr / (3.0 * m_)
        x = 0.5 * hi
        converged = np.zeros(len(s_tr), dtype=bool)
        for iterations in range(1, settings.max_iters + 1):
            phi, dphi = _flow_residual(x, s_tr, qn, m_, sy, dt, base)
            converged = np.abs(phi) <= settings.tol * s_tr
            if np.all(converged):
                break
            lo = np.where(phi > 0.0, x, lo)
            hi = np.where(phi < 0.0, x, hi)
            with np.errstate(invalid="ignore", divide="ignore"):
                step = x - phi / dphi
            inside = np.isfinite(step) & (step > lo) & (step < hi)
            x = np.where(converged, x, np.where(inside, step, 0.5 * (lo + hi)))
            if np.all(converged | (hi - lo <= 1e-15 * np.maximum(hi, 1e-300))):
                break
        else:
            worst = float(np.max(np.abs(phi) / s_tr))
            raise SolverError(
                "plastic return map did not converge",
                diagnostics={"max_relative_residual": worst, "points": int(plastic.sum())},
            )
        dq[plastic] = x
    q = q_n + dq
    eps_p = eps_p_n + dq[:, None, None] * M
    g_accum = g_n + dt * cm.unit_dissipation(dq / dt, base.eps_dot_p0, base.m)
    return ReturnMapResult(q, eps_p, g_accum, dq, M, sigma_tr, plastic, iterations)


# ------------------------------------------------------------ damage by ADMM


def local_damage_solve(
    H: np.ndarray,
    c: np.ndarray,
    lam_g: np.ndarray,
    a_g: np.ndarray,
    r: float,
    alpha_n: np.ndarray,
    d1: float,
    w1: float,
    tol: float = 1e-12,
    max_iters: int = 50,
) -> np.ndarray:
    """Pointwise minimizer of ``d(x) H + c w(x) - lam x + r/2 (a - x)^2`` on ``[alpha_n, 1]``.

    The stationarity residual is increasing in ``x``, so a Newton iteration
    kept inside a bisection bracket finds the unique root.
    """
    slope = (2.0 + 2.0 * d1) * H + 2.0 * (1.0 - w1) * c + r

    def residual(x: np.ndarray) -> np.ndarray:
        _, dd, _ = cm.degradation_terms(x, d1)
        _, dw, _ = cm.hardening_terms(x, w1)
        return dd * H + c * dw - lam_g - r * (a_g - x)

    scale = np.abs(lam_g) + r * np.abs(a_g) + 2.0 * H + c + 1e-300
    lo = alpha_n.astype(float).copy()
    hi = np.ones_like(lo)
    r_lo = residual(lo)
    r_hi = residual(hi)
    at_lower = r_lo >= 0.0
    at_upper = ~at_lower & (r_hi <= 0.0)
    x = lo.copy()
    todo = ~(at_lower | at_upper)
    for _ in range(max_iters):
        if not np.any(todo):
            break
        R = residual(x)
        todo &= np.abs(R) > tol * scale
        lo = np.where(todo & (R < 0.0), x, lo)
        hi = np.where(todo & (R > 0.0), x, hi)
        step = x - R / slope
        inside = (step >= lo) & (step <= hi)
        x = np.where(todo, np.where(inside, step, 0.5 * (lo + hi)), x)
    x[at_upper] = 1.0
    x[at_lower] = alpha_n[at_lower]
    return x


@dataclass
class DamageUpdate:
    alpha: np.ndarray
    a: np.ndarray
    lam: np.ndarray
    r: float
    iterations: int
    r_p: float
    r_d: float
    tol_p: float
    tol_d: float
    history: List[tuple] = field(default_factory=list)


def admm_damage_update(
    space: ScalarSpace,
    cache: PenaltyFactorCache,
    H: np.ndarray,
    c: np.ndarray,
    alpha_n: np.ndarray,
    a_n: np.ndarray,
    lam_n: np.ndarray,
    r: float,
    settings: ADMMSettings,
    d1: float,
    w1: float,
    adapt: Optional[bool] = None,
    step: Optional[int] = None,
) -> DamageUpdate:
    """Run ADMM for one damage update, starting from ``(a_n, lam_n)`` at penalty ``r``.

    ``alpha_n`` is the previous Gauss-point damage (irreversibility bound).
    With ``adapt=False`` the penalty stays at ``r`` throughout.
    """
    adapt = settings.adapt if adapt is None else adapt
    free = space.free
    n_free = max(len(free), 1)
    S, P = space.S, space.P
    a = a_n.copy()
    lam = lam_n.copy()
    history: List[tuple] = []
    floor = settings.tol_abs / math.sqrt(n_free)
    for it in range(1, settings.max_iters + 1):
        alpha = local_damage_solve(H, c, space.at_gauss(lam), space.at_gauss(a), r, alpha_n, d1, w1)
        p_alpha = P @ alpha
        a_new = np.zeros_like(a)
        if len(free):
            a_new[free] = cache.operator(r).solve((r * p_alpha - S @ lam)[free])
        s_a = S @ a_new
        gap = (s_a - p_alpha)[free]
        if len(free):
            lam[free] += r * cache.mass().solve(gap)
        r_p = float(np.linalg.norm(gap))
        r_d = float(r * np.linalg.norm((s_a - S @ a)[free]))
        a = a_new
        tol_p = floor + settings.tol_rel * max(np.linalg.norm(p_alpha[free]), np.linalg.norm(s_a[free]))
        tol_d = floor + settings.tol_rel * float(np.linalg.norm((S @ lam)[free]))
        history.append((r, r_p, r_d))
        if r_p <= tol_p and r_d <= tol_d:
            return DamageUpdate(alpha, a, lam, r, it, r_p, r_d, tol_p, tol_d, history)
        if adapt:
            r = penalty_adapt(r, r_p, r_d, settings)
    logger.error("ADMM failed after %d iterations (r_p=%.3e, r_d=%.3e)", settings.max_iters, r_p, r_d)
    raise SolverError(
        f"damage ADMM did not converge in {settings.max_iters} iterations",
        step=step,
        diagnostics={"r_p": r_p, "r_d": r_d, "tol_p": tol_p, "tol_d": tol_d, "history": history[-20:]},
    )


# --------------------------------------------------------------- trajectory


class TrajectoryRecord:
    """Every level of a forward run, kept for the backward pass.

    Level ``k`` holds the state after ``k`` steps. ``v_half[k]`` is the
    velocity entering step ``k`` (``v^{k-1/2}``, with ``v_half[0]`` the initial
    velocity); ``acc[n]`` and ``penalty[n]`` belong to step ``n -> n+1``.
    Arrays are memory-mapped ``.npy`` files when ``spill_dir`` is given.
    """

    _FIELDS = ("u", "v_half", "a", "lam", "alpha", "q", "eps_p", "g_accum")

    def __init__(
        self,
        n_steps: int,
        n_nodes: int,
        n_damage: int,
        n_gauss: int,
        dt: float,
        spill_dir: Optional[Path] = None,
    ) -> None:
        self.dt = dt
        self.n_steps = n_steps
        self.spill_dir = Path(spill_dir) if spill_dir is not None else None
        levels = n_steps + 1
        shapes = {
            "u": (levels, n_nodes, 2),
            "v_half": (levels, n_nodes, 2),
            "a": (levels, n_damage),
            "lam": (levels, n_damage),
            "alpha": (levels, n_gauss),
            "q": (levels, n_gauss),
            "eps_p": (levels, n_gauss, 2, 2),
            "g_accum": (levels, n_gauss),
            "acc": (n_steps, n_nodes, 2),
        }
        for name, shape in shapes.items():
            setattr(self, name, self._allocate(name, shape))
        self.times = dt * np.arange(levels)
        self.penalty = np.zeros(n_steps)
        self.iterations = np.zeros(n_steps, dtype=np.int64)

    def _allocate(self, name: str, shape: tuple) -> np.ndarray:
        if self.spill_dir is None:
            return np.zeros(shape)
        self.spill_dir.mkdir(parents=True, exist_ok=True)
        return np.lib.format.open_memmap(self.spill_dir / f"{name}.npy", mode="w+", dtype=float, shape=shape)

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def store(self, k: int, state: ForwardState) -> None:
        self.u[k] = state.u
        self.v_half[k] = state.v_half
        self.a[k] = state.a
        self.lam[k] = state.lam
        self.alpha[k] = state.gp.alpha
        self.q[k] = state.gp.q
        self.eps_p[k] = state.gp.eps_p
        self.g_accum[k] = state.gp.g_accum

    def state(self, k: int) -> ForwardState:
        gp = GaussPointState(
            np.array(self.alpha[k]), np.array(self.q[k]), np.array(self.eps_p[k]), np.array(self.g_accum[k])
        )
        return ForwardState(
            u=np.array(self.u[k]),
            v_half=np.array(self.v_half[k]),
            a=np.array(self.a[k]),
            lam=np.array(self.lam[k]),
            gp=gp,
            time=float(self.times[k]),
            step=k,
        )

    def flush(self) -> None:
        for name in (*self._FIELDS, "acc"):
            arr = getattr(self, name)
            if isinstance(arr, np.memmap):
                arr.flush()


@dataclass
class StepReport:
    step: int
    time: float
    admm_iterations: int
    penalty: float
    r_p: float
    r_d: float
    tol_p: float
    tol_d: float
    plastic_points: int
    max_alpha: float
    kinetic: float
    elastic: float
    plastic: float
    damage: float
    external_work: float

    @property
    def total_energy(self) -> float:
        return self.kinetic + self.elastic + self.plastic + self.damage


@dataclass
class ForwardResult:
    """``record`` is None for runs made with ``keep_trajectory=False``."""

    record: Optional[TrajectoryRecord]
    reports: List[StepReport]
    n_factorizations: int
    penalties: List[float]
    last: Optional[ForwardState] = None

    @property
    def final_state(self) -> ForwardState:
        if self.record is None:
            return self.last
        return self.record.state(self.record.n_steps)


def explicit_displacement_step(model: DynamicModel, state: ForwardState, dt: float):
    """Central-difference update; returns ``(u_next, v_next_half, acc)``.

    At step zero ``state.v_half`` is the initial velocity and only a half kick
    is applied.
    """
    acc = model.acceleration(state.u, state.gp.eps_p, state.gp.alpha, state.time)
    kick = 0.5 * dt if state.step == 0 else dt
    v_next = state.v_half + kick * acc
    return state.u + dt * v_next, v_next, acc


def step_forward(
    model: DynamicModel,
    state: ForwardState,
    dt: float,
    cache: PenaltyFactorCache,
    r: float,
    admm: ADMMSettings,
    return_map: ReturnMapSettings,
    adapt: Optional[bool] = None,
):
    """Advance one step; returns ``(next_state, acc, damage_update, return_map_result, kinetic)``."""
    u_next, v_next, acc = explicit_displacement_step(model, state, dt)
    kinetic = 0.5 * float(np.sum(model.mass[:, None] * state.v_half * v_next))
    eps = strain_at_gauss(model.mesh, u_next)
    gp = state.gp.copy()
    idx = model.design_gp
    b = model.base

    def chunk(start: int, stop: int) -> ReturnMapResult:
        sel = idx[start:stop]
        return plastic_return_map(
            eps[sel],
            gp.q[sel],
            gp.eps_p[sel],
            gp.g_accum[sel],
            model.mu_gp[sel],
            model.sigma_y_gp[start:stop],
            dt,
            b,
            return_map,
        )

    try:
        parts = model.executor.map(chunk, len(idx))
    except SolverError as exc:
        raise SolverError(str(exc), step=state.step + 1, diagnostics=exc.diagnostics) from exc
    rm = _concat_return_maps(parts)
    gp.q[idx], gp.eps_p[idx], gp.g_accum[idx] = rm.q, rm.eps_p, rm.g_accum

    H = model.damage_drive(eps, gp)
    dmg = admm_damage_update(
        model.space,
        cache,
        H,
        model.local_coeff,
        state.gp.alpha[idx],
        state.a,
        state.lam,
        r,
        admm,
        b.d1,
        b.w1,
        adapt=adapt,
        step=state.step + 1,
    )
    gp.alpha[idx] = dmg.alpha
    nxt = ForwardState(u_next, v_next, dmg.a, dmg.lam, gp, state.time + dt, state.step + 1)
    return nxt, acc, dmg, rm, kinetic


def _concat_return_maps(parts: List[ReturnMapResult]) -> ReturnMapResult:
    if len(parts) == 1:
        return parts[0]
    return ReturnMapResult(
        *(np.concatenate([getattr(p, f) for p in parts]) for f in RETURN_MAP_FIELDS),
        iterations=max(p.iterations for p in parts),
    )


def check_time_step(model: DynamicModel, dt: float, cfl: float) -> None:
    limit = model.critical_time_step(cfl)
    if dt > limit:
        raise ConfigError([f"time step {dt:.6g} exceeds the CFL limit {limit:.6g} (cfl={cfl})"])


def run_forward(
    model: DynamicModel,
    dt: float,
    n_steps: int,
    admm: ADMMSettings = ADMMSettings(),
    return_map: ReturnMapSettings = ReturnMapSettings(),
    cfl: float = 0.5,
    penalty_schedule: Optional[Sequence[float]] = None,
    spill_dir: Optional[Path] = None,
    observer: Optional[Callable[[ForwardState], None]] = None,
    keep_trajectory: bool = True,
) -> ForwardResult:
    """Integrate from quiescence (plus any flyer velocity) over ``n_steps`` steps.

    With ``penalty_schedule`` each step's ADMM runs at the given fixed
    penalty, which reproduces the discrete equations of an earlier run.
    Without ``keep_trajectory`` only the current state is held, so the result
    cannot feed the adjoint.
    """
    if n_steps < 1:
        raise InvalidArgumentError("need at least one time step")
    if penalty_schedule is not None and len(penalty_schedule) != n_steps:
        raise InvalidArgumentError(
            f"penalty schedule has {len(penalty_schedule)} entries, expected {n_steps}"
        )
    check_time_step(model, dt, cfl)
    record = None
    if keep_trajectory:
        record = TrajectoryRecord(n_steps, model.n_nodes, model.n_damage, model.n_gauss, dt, spill_dir)
    cache = model.factor_cache()
    state = model.initial_state()
    if record is not None:
        record.store(0, state)
    if observer is not None:
        observer(state)
    reports: List[StepReport] = []
    work = 0.0
    r = admm.r0
    for n in range(n_steps):
        if penalty_schedule is not None:
            r = float(penalty_schedule[n])
        energies = model.energies(state.u, state.gp, state.a)
        force = model.load.nodal_force(state.time, model.n_nodes)
        nxt, acc, dmg, rm, kinetic = step_forward(
            model, state, dt, cache, r, admm, return_map,
            adapt=False if penalty_schedule is not None else None,
        )
        work += float(np.sum(force * (nxt.u - state.u)))
        if record is not None:
            record.acc[n] = acc
            record.penalty[n] = dmg.r
            record.iterations[n] = dmg.iterations
            record.store(n + 1, nxt)
        reports.append(
            StepReport(
                step=n + 1,
                time=nxt.time,
                admm_iterations=dmg.iterations,
                penalty=dmg.r,
                r_p=dmg.r_p,
                r_d=dmg.r_d,
                tol_p=dmg.tol_p,
                tol_d=dmg.tol_d,
                plastic_points=int(rm.plastic.sum()),
                max_alpha=float(dmg.alpha.max()) if dmg.alpha.size else 0.0,
                kinetic=kinetic,
                elastic=energies["elastic"],
                plastic=energies["plastic"],
                damage=energies["damage"],
                external_work=work,
            )
        )
        logger.debug(
            "step %d: %d ADMM iterations at r=%g, %d plastic points",
            n + 1,
            dmg.iterations,
            dmg.r,
            int(rm.plastic.sum()),
        )
        r = dmg.r
        state = nxt
        if observer is not None:
            observer(state)
    if record is not None:
        record.flush()
    logger.info(
        "forward run: %d steps, %d factorizations, max ADMM iterations %d",
        n_steps,
        cache.n_factorizations,
        max(rep.admm_iterations for rep in reports),
    )
    return ForwardResult(record, reports, cache.n_factorizations, cache.penalties, last=state)
