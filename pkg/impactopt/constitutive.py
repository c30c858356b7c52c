"""Pointwise material functions for plane-strain elasto-viscoplasticity with damage.

Tensors are 2x2 and carried in trailing axes, so every function here accepts
batches of shape ``(..., 2, 2)``. The deviator is ``X - (tr X / 2) I``.

Kernels named after a quantity (``amor_stress``, ``unit_flow_stress`` ...) take
explicit per-point parameter arrays and are what the solvers call. The
``MaterialParams`` wrappers below them serve tests and one-off evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import quad

from .errors import InvalidArgumentError

EYE = np.eye(2)


@dataclass(frozen=True)
class MaterialParams:
    """Scalar constants of one material."""

    K: float
    mu: float
    rho: float
    sigma_y0: float
    eps_p0: float
    n: float
    eps_dot_p0: float
    m: float
    Gc: float
    ell: float
    d1: float
    w1: float
    c_w: Optional[float] = None

    @classmethod
    def from_young(cls, E: float, nu: float, **kwargs: float) -> "MaterialParams":
        K, mu = young_to_bulk_shear(E, nu)
        return cls(K=K, mu=mu, **kwargs)

    @property
    def young(self) -> float:
        return bulk_shear_to_young(self.K, self.mu)[0]

    @property
    def poisson(self) -> float:
        return bulk_shear_to_young(self.K, self.mu)[1]

    @property
    def wave_speed(self) -> float:
        return longitudinal_wave_speed(self.K, self.mu, self.rho)

    @property
    def cw(self) -> float:
        """Phase-field normalization, computed from ``w1`` unless given."""
        return self.c_w if self.c_w is not None else cw_default(self.w1)

    def with_values(self, **changes: float) -> "MaterialParams":
        return replace(self, **changes)

    def violations(self) -> list:
        problems = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("w1", "d1", "c_w") or value is None:
                continue
            if not value > 0.0:
                problems.append(f"{f.name} must be > 0, got {value}")
        if not 0.0 <= self.w1 <= 1.0:
            problems.append(f"w1 must lie in [0, 1], got {self.w1}")
        if not 0.0 < self.d1 < 1.0:
            problems.append(f"d1 must lie in (0, 1), got {self.d1}")
        if self.c_w is not None and not self.c_w > 0.0:
            problems.append(f"c_w must be > 0, got {self.c_w}")
        if self.mu > 0.0 and self.K <= self.mu:
            problems.append("K must exceed mu (Poisson ratio in (0, 0.5))")
        return problems


def young_to_bulk_shear(E, nu):
    """Plane-strain 2D bulk and shear moduli (``lambda = K - mu``)."""
    if not np.all(np.asarray(nu) < 0.5) or not np.all(np.asarray(E) > 0.0):
        raise InvalidArgumentError("need E > 0 and nu < 0.5")
    mu = E / (2.0 * (1.0 + nu))
    K = E / (2.0 * (1.0 + nu) * (1.0 - 2.0 * nu))
    return K, mu


def bulk_shear_to_young(K, mu):
    nu = (K - mu) / (2.0 * K)
    return 2.0 * mu * (1.0 + nu), nu


def longitudinal_wave_speed(K, mu, rho):
    return np.sqrt((K + mu) / rho)


def trace(X: np.ndarray) -> np.ndarray:
    return X[..., 0, 0] + X[..., 1, 1]


def deviator(X: np.ndarray) -> np.ndarray:
    return X - 0.5 * trace(X)[..., None, None] * EYE


def ddot(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ij->...", X, Y)


def _check_unit_interval(a: np.ndarray, name: str) -> None:
    a = np.asarray(a)
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise InvalidArgumentError(f"{name} must lie in [0, 1]")


# degradation and damage hardening


def degradation_terms(a, d1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    d = (1.0 - a) ** 2 + d1 * a**2
    d_prime = -2.0 * (1.0 - a) + 2.0 * d1 * a
    return d, d_prime, np.full_like(a, 2.0 + 2.0 * d1)


def degradation(a, d1: float):
    """``d(a) = (1-a)^2 + d1 a^2`` with first and second derivatives."""
    _check_unit_interval(a, "damage")
    return degradation_terms(a, d1)


def hardening_terms(a, w1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    w = w1 * a + (1.0 - w1) * a**2
    return w, w1 + 2.0 * (1.0 - w1) * a, np.full_like(a, 2.0 * (1.0 - w1))


def damage_hardening(a, w1: float):
    """``w(a) = w1 a + (1-w1) a^2`` with first and second derivatives."""
    _check_unit_interval(a, "damage")
    return hardening_terms(a, w1)


def cw_default(w1: float) -> float:
    """``int_0^1 sqrt(w(a)) da``."""
    if not 0.0 <= w1 <= 1.0:
        raise InvalidArgumentError(f"w1 must lie in [0, 1], got {w1}")
    value, _ = quad(lambda a: math.sqrt(w1 * a + (1.0 - w1) * a * a), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    return value


# elastic response with tension-compression split


def split_trace(tr: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """``(tr+, tr-)``; a zero trace counts as compressive."""
    pos = np.where(tr > 0.0, tr, 0.0)
    return pos, tr - pos


def tension_energy(eps_e: np.ndarray, K, mu) -> np.ndarray:
    """Degradable part ``(K/2) tr+^2 + mu e_D:e_D``."""
    pos, _ = split_trace(trace(eps_e))
    dev = deviator(eps_e)
    return 0.5 * K * pos**2 + mu * ddot(dev, dev)


def tension_stress(eps_e: np.ndarray, K, mu) -> np.ndarray:
    """Derivative of :func:`tension_energy` in the elastic strain."""
    pos, _ = split_trace(trace(eps_e))
    volumetric = (np.asarray(K) * pos)[..., None, None] * EYE
    return volumetric + 2.0 * np.asarray(mu)[..., None, None] * deviator(eps_e)


def amor_energy(eps_e: np.ndarray, d, K, mu) -> np.ndarray:
    _, neg = split_trace(trace(eps_e))
    return 0.5 * K * neg**2 + d * tension_energy(eps_e, K, mu)


def amor_stress(eps_e: np.ndarray, d, K, mu) -> np.ndarray:
    _, neg = split_trace(trace(eps_e))
    d = np.asarray(d)
    return (np.asarray(K) * neg)[..., None, None] * EYE + d[..., None, None] * tension_stress(eps_e, K, mu)


def amor_tangent_apply(eps_e: np.ndarray, d, K, mu, X: np.ndarray) -> np.ndarray:
    """``C : X`` with ``C`` the tangent of :func:`amor_stress` at ``eps_e``."""
    tension = trace(eps_e) > 0.0
    d = np.asarray(d)
    K = np.asarray(K)
    vol = np.where(tension, d * K, K) * trace(X)
    return vol[..., None, None] * EYE + (2.0 * d * mu)[..., None, None] * deviator(X)


def amor_parameter_stress(eps_e: np.ndarray, d) -> Tuple[np.ndarray, np.ndarray]:
    """``(d sigma / d K, d sigma / d mu)``."""
    pos, neg = split_trace(trace(eps_e))
    d = np.asarray(d)
    return (neg + d * pos)[..., None, None] * EYE, 2.0 * d[..., None, None] * deviator(eps_e)


@dataclass
class ElasticResponse:
    """Energy, stress and the damage derivatives the adjoint pairs with.

    The strain-strain second derivative is :func:`amor_tangent_apply`.
    Derivatives in the plastic strain follow from ``eps_e = eps - eps_p``,
    so ``d2W/da deps_p = -dstress_da``.
    """

    energy: np.ndarray
    stress: np.ndarray
    dstress_da: np.ndarray
    d2energy_da2: np.ndarray
    denergy_da: np.ndarray


def elastic_energy(eps, eps_p, a, p: MaterialParams) -> np.ndarray:
    d, _, _ = degradation(a, p.d1)
    return amor_energy(np.asarray(eps) - eps_p, d, p.K, p.mu)


def stress(eps, eps_p, a, p: MaterialParams) -> np.ndarray:
    d, _, _ = degradation(a, p.d1)
    return amor_stress(np.asarray(eps) - eps_p, d, p.K, p.mu)


def elastic_response(eps_e: np.ndarray, a, K, mu, d1: float) -> ElasticResponse:
    """Response at elastic strain ``eps_e`` and damage ``a``; ``K`` and ``mu`` may vary pointwise."""
    eps_e = np.asarray(eps_e, dtype=float)
    d, d_prime, d_second = degradation(a, d1)
    psi = tension_energy(eps_e, K, mu)
    sig_t = tension_stress(eps_e, K, mu)
    return ElasticResponse(
        energy=amor_energy(eps_e, d, K, mu),
        stress=amor_stress(eps_e, d, K, mu),
        dstress_da=np.asarray(d_prime)[..., None, None] * sig_t,
        d2energy_da2=d_second * psi,
        denergy_da=d_prime * psi,
    )


def mises_normalized(eps, eps_p, mu, scale=1.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Undegraded Mises stress, flow direction and a no-flow flag.

    ``M = (3/2) s / sigma_M`` so ``M:M = 3/2``; where ``sigma_M == 0`` the
    direction is returned as zero and the flag is set.
    """
    s = (2.0 * np.asarray(scale) * np.asarray(mu))[..., None, None] * deviator(np.asarray(eps) - eps_p)
    sigma = np.sqrt(1.5 * ddot(s, s))
    zero = sigma == 0.0
    safe = np.where(zero, 1.0, sigma)
    M = 1.5 * s / safe[..., None, None]
    M[zero] = 0.0
    return sigma, M, zero


# plasticity, per unit yield stress


def unit_flow_stress(q, eps_p0, n):
    """``1 + (q/eps_p0)^(1/n)``: hardening stress over yield stress."""
    return 1.0 + (np.asarray(q) / eps_p0) ** (1.0 / n)


def unit_flow_slope(q, eps_p0, n):
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        at_zero = np.inf if n > 1 else 1.0 / eps_p0
        return np.where(q > 0.0, (q / eps_p0) ** (1.0 / n - 1.0) / (n * eps_p0), at_zero)


def unit_plastic_energy(q, eps_p0, n):
    """``q + n eps_p0/(n+1) (q/eps_p0)^((n+1)/n)``."""
    q = np.asarray(q)
    return q + n * eps_p0 / (n + 1.0) * (q / eps_p0) ** ((n + 1.0) / n)


def unit_rate_stress(q_dot, eps_dot_p0, m):
    return (np.asarray(q_dot) / eps_dot_p0) ** (1.0 / m)


def unit_rate_slope(q_dot, eps_dot_p0, m):
    q_dot = np.asarray(q_dot, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(
            q_dot > 0.0,
            (q_dot / eps_dot_p0) ** (1.0 / m - 1.0) / (m * eps_dot_p0),
            np.inf if m > 1 else 1.0 / eps_dot_p0,
        )


def unit_dissipation(q_dot, eps_dot_p0, m):
    return m * eps_dot_p0 / (m + 1.0) * (np.asarray(q_dot) / eps_dot_p0) ** ((m + 1.0) / m)


def hardening_stress(q, p: MaterialParams):
    """``sigma_0(q) = sigma_y (1 + (q/eps_p0)^(1/n))`` and its slope."""
    if np.any(np.asarray(q) < 0.0):
        raise InvalidArgumentError("accumulated plastic strain must be >= 0")
    return p.sigma_y0 * unit_flow_stress(q, p.eps_p0, p.n), p.sigma_y0 * unit_flow_slope(q, p.eps_p0, p.n)


def plastic_energy(q, p: MaterialParams):
    return p.sigma_y0 * unit_plastic_energy(q, p.eps_p0, p.n)


def dissipation_potential(q_dot, p: MaterialParams):
    return p.sigma_y0 * unit_dissipation(q_dot, p.eps_dot_p0, p.m)


def rate_stress(q_dot, p: MaterialParams):
    """First and second derivatives of the dissipation potential, plus an unbounded flag.

    The second derivative is infinite at ``q_dot == 0`` when ``m > 1``.
    """
    if np.any(np.asarray(q_dot) < 0.0):
        raise InvalidArgumentError("plastic strain rate must be >= 0")
    slope = p.sigma_y0 * unit_rate_slope(q_dot, p.eps_dot_p0, p.m)
    return p.sigma_y0 * unit_rate_stress(q_dot, p.eps_dot_p0, p.m), slope, np.isinf(slope)


def contact_stress(eps: np.ndarray, K_c: float, mu_c: float, eps_soft: float) -> np.ndarray:
    """Stiff in compression, nearly free in shear and hydrostatic tension."""
    return amor_stress(eps, eps_soft, K_c, mu_c)
