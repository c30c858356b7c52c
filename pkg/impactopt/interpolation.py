"""Design-variable to material-parameter maps and their eta-derivatives."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np

from .constitutive import MaterialParams, young_to_bulk_shear
from .errors import InvalidArgumentError, SolverError

_BEZIER_TOL = 1e-12
_BEZIER_MAX_ITERS = 100


@dataclass(frozen=True)
class SolidVoidScheme:
    """Shifted Bezier interpolation between void (``eta_min``) and solid.

    ``delta_p`` and ``delta_a`` default to ``k1 * eta_min`` and
    ``9 * k1 * eta_min`` and follow ``k1`` when slopes change under continuation.
    """

    k1: float = 0.5
    k2: float = 2.0
    eta_min: float = 0.01
    delta_p: Optional[float] = None
    delta_a: Optional[float] = None

    @property
    def shift_p(self) -> float:
        return self.k1 * self.eta_min if self.delta_p is None else self.delta_p

    @property
    def shift_a(self) -> float:
        return 9.0 * self.k1 * self.eta_min if self.delta_a is None else self.delta_a

    def with_slopes(self, k1: float, k2: float) -> "SolidVoidScheme":
        return replace(self, k1=k1, k2=k2)

    def violations(self) -> list:
        problems = []
        if not 0.0 < self.k1 < 1.0 < self.k2:
            problems.append(f"Bezier slopes need 0 < k1 < 1 < k2, got k1={self.k1}, k2={self.k2}")
        if not 0.0 < self.eta_min < 0.5:
            problems.append(f"eta_min must lie in (0, 0.5), got {self.eta_min}")
        elif not 0.0 < self.shift_p < self.shift_a < 1.0:
            problems.append("shifts need 0 < delta_p < delta_a < 1")
        return problems


@dataclass(frozen=True)
class TwoMaterialScheme:
    """Power-law blend of a tough phase (``eta = 0``) and a strong phase (``eta = 1``)."""

    E1: float
    E2: float
    sy1: float
    sy2: float
    Gc1: float
    Gc2: float
    p: float = 2.0

    def with_power(self, p: float) -> "TwoMaterialScheme":
        return replace(self, p=p)

    def violations(self) -> list:
        problems = []
        if not 0.0 < self.E1 < self.E2:
            problems.append("two-material scheme needs 0 < E1 < E2")
        if not 0.0 < self.sy1 < self.sy2:
            problems.append("two-material scheme needs 0 < sy1 < sy2")
        if not self.Gc1 > self.Gc2 > 0.0:
            problems.append("two-material scheme needs Gc1 > Gc2 > 0")
        if self.p < 1.0:
            problems.append(f"power-law exponent must be >= 1, got {self.p}")
        return problems


Scheme = Union[SolidVoidScheme, TwoMaterialScheme]


def _bezier_eta(v: np.ndarray, A: float) -> Tuple[np.ndarray, np.ndarray]:
    return A * (3.0 * v - 3.0 * v**2) + v**3, A * (3.0 - 6.0 * v) + 3.0 * v**2


def bezier_Be(eta, k1: float, k2: float) -> Tuple[np.ndarray, np.ndarray]:
    """``(B_e, dB_e/deta)`` of the Bezier stiffness curve.

    The parametric coordinate ``v`` solves the monotone cubic
    ``eta = A (3v - 3v^2) + v^3`` with ``A = (1 - k2)/(k1 - k2)`` by Newton's
    method inside a shrinking bisection bracket.
    """
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0.0) or np.any(eta > 1.0):
        raise InvalidArgumentError("design variable must lie in [0, 1]")
    if not 0.0 < k1 < 1.0 < k2:
        raise InvalidArgumentError(f"Bezier slopes need 0 < k1 < 1 < k2, got k1={k1}, k2={k2}")
    A = (1.0 - k2) / (k1 - k2)
    lo = np.zeros_like(eta)
    hi = np.ones_like(eta)
    v = eta.copy()
    for _ in range(_BEZIER_MAX_ITERS):
        f, df = _bezier_eta(v, A)
        f = f - eta
        lo = np.where(f < 0.0, v, lo)
        hi = np.where(f > 0.0, v, hi)
        step = v - f / df
        inside = (step >= lo) & (step <= hi)
        v_new = np.where(f == 0.0, v, np.where(inside, step, 0.5 * (lo + hi)))
        done = np.abs(v_new - v) <= _BEZIER_TOL
        v = v_new
        if np.all(done):
            break
    else:
        raise SolverError("Bezier parameter solve did not converge")
    _, deta_dv = _bezier_eta(v, A)
    B = k1 * A * (3.0 * v - 3.0 * v**2) + v**3
    dB_dv = k1 * A * (3.0 - 6.0 * v) + 3.0 * v**2
    return B, dB_dv / deta_dv


@dataclass
class SolidVoidMaps:
    rho: np.ndarray
    B_e: np.ndarray
    B_p: np.ndarray
    B_a: np.ndarray
    d_rho: np.ndarray
    d_B_e: np.ndarray
    d_B_p: np.ndarray
    d_B_a: np.ndarray


def solid_void_maps(eta, scheme: SolidVoidScheme, rho0: float = 1.0) -> SolidVoidMaps:
    """Density and the stiffness, plasticity and damage factors at ``eta``."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < scheme.eta_min * (1.0 - 1e-12)) or np.any(eta > 1.0):
        raise InvalidArgumentError(f"design variable must lie in [{scheme.eta_min}, 1]")
    B_e, dB_e = bezier_Be(eta, scheme.k1, scheme.k2)
    dp, da = scheme.shift_p, scheme.shift_a
    return SolidVoidMaps(
        rho=rho0 * eta,
        B_e=B_e,
        B_p=(B_e + dp) / (1.0 + dp),
        B_a=(B_e + da) / (1.0 + da),
        d_rho=np.full_like(eta, rho0),
        d_B_e=dB_e,
        d_B_p=dB_e / (1.0 + dp),
        d_B_a=dB_e / (1.0 + da),
    )


@dataclass
class TwoMaterialMaps:
    E: np.ndarray
    sigma_y: np.ndarray
    Gc: np.ndarray
    d_E: np.ndarray
    d_sigma_y: np.ndarray
    d_Gc: np.ndarray


def two_material_maps(eta, scheme: TwoMaterialScheme) -> TwoMaterialMaps:
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0.0) or np.any(eta > 1.0):
        raise InvalidArgumentError("design variable must lie in [0, 1]")
    p = scheme.p
    up, down = eta**p, (1.0 - eta) ** p
    d_up = p * eta ** (p - 1.0)
    d_down = -p * (1.0 - eta) ** (p - 1.0)
    return TwoMaterialMaps(
        E=scheme.E1 + up * (scheme.E2 - scheme.E1),
        sigma_y=scheme.sy1 + up * (scheme.sy2 - scheme.sy1),
        Gc=scheme.Gc2 + down * (scheme.Gc1 - scheme.Gc2),
        d_E=d_up * (scheme.E2 - scheme.E1),
        d_sigma_y=d_up * (scheme.sy2 - scheme.sy1),
        d_Gc=d_down * (scheme.Gc1 - scheme.Gc2),
    )


def objective_interp(eta, p_O: float) -> Tuple[np.ndarray, np.ndarray]:
    """Concave ``P(eta) = 1 - (1 - eta)^p_O`` and its slope."""
    if p_O < 1.0:
        raise InvalidArgumentError(f"objective power must be >= 1, got {p_O}")
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0.0) or np.any(eta > 1.0):
        raise InvalidArgumentError("design variable must lie in [0, 1]")
    return 1.0 - (1.0 - eta) ** p_O, p_O * (1.0 - eta) ** (p_O - 1.0)


@dataclass
class ElementMaterials:
    """Per-element physical parameters, objective-weighted parameters and slopes.

    ``d_*`` arrays hold derivatives with respect to the physical (filtered)
    design variable of each element.
    """

    rho: np.ndarray
    K: np.ndarray
    mu: np.ndarray
    sigma_y: np.ndarray
    Gc: np.ndarray
    sigma_y_obj: np.ndarray
    Gc_obj: np.ndarray
    d_rho: np.ndarray
    d_K: np.ndarray
    d_mu: np.ndarray
    d_sigma_y: np.ndarray
    d_Gc: np.ndarray
    d_sigma_y_obj: np.ndarray
    d_Gc_obj: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.rho.shape[0]


def element_materials(eta, scheme: Scheme, base: MaterialParams, p_O: float = 3.0) -> ElementMaterials:
    """Evaluate every eta-dependent parameter on each design element.

    ``base`` supplies the solid (solid-void) or the shared (two-material)
    constants; only ``rho, K, mu, sigma_y0, Gc`` vary with ``eta``.
    """
    eta = np.asarray(eta, dtype=float)
    if isinstance(scheme, SolidVoidScheme):
        maps = solid_void_maps(eta, scheme, base.rho)
        P, dP = objective_interp(eta, p_O)
        return ElementMaterials(
            rho=maps.rho,
            K=base.K * maps.B_e,
            mu=base.mu * maps.B_e,
            sigma_y=base.sigma_y0 * maps.B_p,
            Gc=base.Gc * maps.B_a,
            sigma_y_obj=base.sigma_y0 * P,
            Gc_obj=base.Gc * P,
            d_rho=maps.d_rho,
            d_K=base.K * maps.d_B_e,
            d_mu=base.mu * maps.d_B_e,
            d_sigma_y=base.sigma_y0 * maps.d_B_p,
            d_Gc=base.Gc * maps.d_B_a,
            d_sigma_y_obj=base.sigma_y0 * dP,
            d_Gc_obj=base.Gc * dP,
        )
    if isinstance(scheme, TwoMaterialScheme):
        maps = two_material_maps(eta, scheme)
        K_per_E, mu_per_E = young_to_bulk_shear(1.0, base.poisson)
        zeros = np.zeros_like(eta)
        return ElementMaterials(
            rho=np.full_like(eta, base.rho),
            K=K_per_E * maps.E,
            mu=mu_per_E * maps.E,
            sigma_y=maps.sigma_y,
            Gc=maps.Gc,
            sigma_y_obj=maps.sigma_y,
            Gc_obj=maps.Gc,
            d_rho=zeros,
            d_K=K_per_E * maps.d_E,
            d_mu=mu_per_E * maps.d_E,
            d_sigma_y=maps.d_sigma_y,
            d_Gc=maps.d_Gc,
            d_sigma_y_obj=maps.d_sigma_y,
            d_Gc_obj=maps.d_Gc,
        )
    raise InvalidArgumentError(f"unknown interpolation scheme {type(scheme).__name__}")
