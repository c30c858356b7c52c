"""Design sensitivities: parameter cotangents, density filter, volume, gradient check."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import constitutive as cm
from .adjoint import AdjointRecord, drive_cotangent, linearize_return_map
from .errors import BudgetExceededError, InvalidArgumentError
from .forward import DynamicModel, TrajectoryRecord
from .interpolation import ElementMaterials
from .mesh import Mesh2D, element_shape_integrals, strain_at_gauss

logger = logging.getLogger(__name__)


class DensityFilter:
    """Renormalized linear-hat filter over element centroids.

    Row ``e`` of the filter weighs element ``i`` by ``max(0, R - |x_e - x_i|)``
    and is scaled to sum to one.
    """

    def __init__(self, centroids: np.ndarray, radius: float) -> None:
        if radius < 0.0:
            raise InvalidArgumentError(f"filter radius must be >= 0, got {radius}")
        self.radius = float(radius)
        n = len(centroids)
        centroids = np.asarray(centroids, dtype=float)
        neighbours = cKDTree(centroids).query_ball_point(centroids, radius)
        rows = np.repeat(np.arange(n), [len(nb) for nb in neighbours])
        cols = np.concatenate([np.asarray(nb, dtype=np.int64) for nb in neighbours])
        dist = np.linalg.norm(centroids[rows] - centroids[cols], axis=1)
        weights = np.maximum(0.0, radius - dist)
        if radius == 0.0:
            weights[rows == cols] = 1.0
        H = sp.coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()
        row_sums = np.asarray(H.sum(axis=1)).ravel()
        self._matrix = sp.diags(1.0 / row_sums) @ H
        self._matrix = self._matrix.tocsr()
        self._transpose = self._matrix.T.tocsr()

    @classmethod
    def for_mesh(cls, mesh: Mesh2D, radius: float) -> "DensityFilter":
        return cls(mesh.element_centroids()[mesh.design_elements], radius)

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._matrix

    def apply(self, eta_raw: np.ndarray) -> np.ndarray:
        return self._matrix @ np.asarray(eta_raw, dtype=float)

    def transpose(self, g_phys: np.ndarray) -> np.ndarray:
        return self._transpose @ np.asarray(g_phys, dtype=float)


@dataclass
class DesignField:
    eta_raw: np.ndarray
    eta_phys: np.ndarray
    lower: float
    upper: float
    volume_limit: float

    @classmethod
    def from_raw(cls, eta_raw, filt: DensityFilter, lower: float, upper: float,
                 volume_limit: float) -> "DesignField":
        eta_raw = np.asarray(eta_raw, dtype=float)
        if np.any(eta_raw < lower - 1e-12) or np.any(eta_raw > upper + 1e-12):
            raise InvalidArgumentError(f"design variable must lie in [{lower}, {upper}]")
        return cls(eta_raw, np.clip(filt.apply(eta_raw), lower, upper), lower, upper, volume_limit)


class VolumeConstraint:
    """``sum(v_e eta_e) / sum(v_e) - limit <= 0`` on the filtered design."""

    def __init__(self, areas: np.ndarray, limit: float, filt: Optional[DensityFilter] = None) -> None:
        if not 0.0 < limit:
            raise InvalidArgumentError(f"volume limit must be positive, got {limit}")
        self.fractions = np.asarray(areas, dtype=float) / float(np.sum(areas))
        self.limit = float(limit)
        self.filter = filt

    def fraction(self, eta_raw: np.ndarray) -> float:
        eta = self.filter.apply(eta_raw) if self.filter is not None else eta_raw
        return float(self.fractions @ eta)

    def value(self, eta_raw: np.ndarray) -> float:
        return self.fraction(eta_raw) - self.limit

    def gradient(self) -> np.ndarray:
        if self.filter is None:
            return self.fractions.copy()
        return self.filter.transpose(self.fractions)


@dataclass
class ParameterCotangents:
    """Per design element cotangents of the physical parameters."""

    rho: np.ndarray
    K: np.ndarray
    mu: np.ndarray
    sigma_y: np.ndarray
    Gc: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ParameterCotangents":
        return cls(*(np.zeros(n) for _ in range(5)))

    def chain(self, materials: ElementMaterials) -> np.ndarray:
        return (
            self.rho * materials.d_rho
            + self.K * materials.d_K
            + self.mu * materials.d_mu
            + self.sigma_y * materials.d_sigma_y
            + self.Gc * materials.d_Gc
        )


@dataclass
class SensitivityField:
    d_phys: np.ndarray
    d_raw: Optional[np.ndarray] = None
    parameters: Optional[ParameterCotangents] = None


def _per_element(gauss_values: np.ndarray) -> np.ndarray:
    return gauss_values.reshape(-1, 4).sum(axis=1)


def step_parameter_cotangents(
    model: DynamicModel,
    record: TrajectoryRecord,
    adjoint: AdjointRecord,
    k: int,
    out: ParameterCotangents,
) -> None:
    """Add the parameter cotangents of forward step ``k-1 -> k`` into ``out``."""
    idx = model.design_gp
    base = model.base
    w = model.space.weights
    n = k - 1
    mu_gp = model.mu_gp[idx]

    # damage update of step k
    b = np.asarray(adjoint.b[k])
    z = np.asarray(adjoint.z[k])
    if np.any(b) or np.any(z):
        alpha = np.asarray(record.alpha[k])[idx]
        H_bar = drive_cotangent(model, alpha, b)
        eps_e = strain_at_gauss(model.mesh, np.asarray(record.u[k]))[idx] - np.asarray(record.eps_p[k])[idx]
        pos, _ = cm.split_trace(cm.trace(eps_e))
        dev = cm.deviator(eps_e)
        q = np.asarray(record.q[k])[idx]
        g = np.asarray(record.g_accum[k])[idx]
        out.K += _per_element(H_bar * 0.5 * pos**2)
        out.mu += _per_element(H_bar * cm.ddot(dev, dev))
        out.sigma_y += _per_element(H_bar * (cm.unit_plastic_energy(q, base.eps_p0, base.n) + g))
        w_prime = cm.hardening_terms(alpha, base.w1)[1]
        out.Gc += _per_element(-w * w_prime * b) / (4.0 * model.cw * base.ell)
        conn = model.space.local_conn()
        a = np.asarray(record.a[k])
        grad_pair = np.einsum("ep,epq,eq->e", z[conn], model.space.element_laplacians, a[conn])
        out.Gc -= base.ell / (2.0 * model.cw) * grad_pair

    # return map of step k
    gamma = np.asarray(adjoint.gamma[k])
    if np.any(gamma):
        lin = linearize_return_map(model, record, k)
        p = lin.plastic
        mu_bar = np.zeros_like(gamma)
        sy_bar = np.zeros_like(gamma)
        mu_bar[p] = gamma[p] * (lin.sigma_trial[p] / mu_gp[p] - 3.0 * lin.dq[p])
        sy_bar[p] = gamma[p] * lin.dphi_dsy[p]
        out.mu += _per_element(mu_bar)
        out.sigma_y += _per_element(sy_bar)

    # acceleration of step n -> n+1
    xi = np.asarray(adjoint.xi[n])
    if np.any(xi):
        u = np.asarray(record.u[n])
        eps_e = strain_at_gauss(model.mesh, u)[idx] - np.asarray(record.eps_p[n])[idx]
        d = cm.degradation_terms(np.asarray(record.alpha[n])[idx], base.d1)[0]
        By = strain_at_gauss(model.mesh, xi)[idx]
        dK, dmu = cm.amor_parameter_stress(eps_e, d)
        out.K -= _per_element(w * cm.ddot(dK, By))
        out.mu -= _per_element(w * cm.ddot(dmu, By))
        integrals = element_shape_integrals(model.mesh)[model.design]
        acc = np.asarray(record.acc[n])
        conn = model.mesh.elements[model.design]
        out.rho -= np.einsum("ea,eai,eai->e", integrals, acc[conn], xi[conn])


def accumulate_sensitivity(
    model: DynamicModel,
    record: TrajectoryRecord,
    adjoint: AdjointRecord,
    materials: ElementMaterials,
    direct: Optional[np.ndarray] = None,
    filt: Optional[DensityFilter] = None,
) -> SensitivityField:
    """Total derivative of the objective with respect to each element's design variable.

    ``direct`` is the explicit design dependence of the objective itself.
    With ``filt`` the result is also pulled back to the raw design.
    """
    if adjoint.n_steps != record.n_steps:
        raise InvalidArgumentError(
            f"adjoint covers {adjoint.n_steps} steps, trajectory has {record.n_steps}"
        )
    cot = ParameterCotangents.zeros(len(model.design))
    for k in range(1, record.n_steps + 1):
        step_parameter_cotangents(model, record, adjoint, k, cot)
    d_phys = cot.chain(materials)
    if direct is not None:
        d_phys = d_phys + direct
    d_raw = filt.transpose(d_phys) if filt is not None else None
    return SensitivityField(d_phys, d_raw, cot)


# ------------------------------------------------------------ gradient check


@dataclass
class GradientCheckRow:
    element: int
    adjoint: float
    finite_difference: float
    rel_error: float
    checked: bool


@dataclass
class GradientCheckReport:
    step: float
    tolerance: float
    rows: List[GradientCheckRow] = field(default_factory=list)
    complete: bool = True

    @property
    def passed(self) -> bool:
        checked = [r for r in self.rows if r.checked]
        return self.complete and bool(checked) and all(r.rel_error <= self.tolerance for r in checked)

    @property
    def max_rel_error(self) -> float:
        checked = [r.rel_error for r in self.rows if r.checked]
        return max(checked) if checked else 0.0

    def write_csv(self, path: Path) -> None:
        path = Path(path)
        try:
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["element", "adjoint_grad", "fd_grad", "rel_err", "checked"])
                for r in self.rows:
                    writer.writerow(
                        [
                            r.element,
                            repr(float(r.adjoint)),
                            repr(float(r.finite_difference)),
                            repr(float(r.rel_error)),
                            int(r.checked),
                        ]
                    )
        except OSError as exc:
            raise OSError(f"could not write gradient report {path}: {exc}") from exc


def fd_gradient_check(
    objective: Callable[[np.ndarray], float],
    eta: np.ndarray,
    gradient: np.ndarray,
    elements: Sequence[int],
    h: float = 1e-5,
    tolerance: float = 5e-3,
    threshold: float = 1e-3,
    budget_seconds: Optional[float] = None,
) -> GradientCheckReport:
    """Compare ``gradient`` with central differences of ``objective`` at ``elements``.

    Elements whose adjoint gradient is below ``threshold * max|gradient|`` are
    reported but not checked. ``objective`` must evaluate the same discrete
    problem for every perturbation, so callers replay the penalty schedule of
    the unperturbed run.
    """
    if h <= 0.0:
        raise InvalidArgumentError(f"finite-difference step must be positive, got {h}")
    eta = np.asarray(eta, dtype=float)
    report = GradientCheckReport(step=h, tolerance=tolerance)
    scale = float(np.max(np.abs(gradient))) if len(gradient) else 0.0
    start = time.perf_counter()
    for e in elements:
        if budget_seconds is not None and time.perf_counter() - start > budget_seconds:
            report.complete = False
            raise BudgetExceededError(
                f"gradient check exceeded its {budget_seconds:g} s budget after {len(report.rows)} elements",
                partial=report,
            )
        plus = eta.copy()
        minus = eta.copy()
        plus[e] += h
        minus[e] -= h
        fd = (objective(plus) - objective(minus)) / (2.0 * h)
        adj = float(gradient[e])
        rel = abs(adj - fd) / max(abs(fd), 1e-300)
        checked = abs(adj) >= threshold * scale
        report.rows.append(GradientCheckRow(int(e), adj, float(fd), float(rel), bool(checked)))
        logger.info("element %d: adjoint %.6e, fd %.6e, rel err %.2e", e, adj, fd, rel)
    return report
