"""Composite trajectory objective: displacement norm plus plastic and damage dissipation."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List

import numpy as np
import scipy.sparse as sp

from . import constitutive as cm
from .errors import InvalidArgumentError
from .forward import DynamicModel, TrajectoryRecord
from .interpolation import ElementMaterials
from .mesh import h1_gram
from .output import csv_cell

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectiveParams:
    """Weights of ``O = O_disp + c_p D_p + c_a D_a``.

    ``O_disp = (sigma_y0 L / T^(1/s)) (sum_n dt |u^n|_H1^s)^(1/s)`` over the
    design domain, summed over levels ``1..N``.
    """

    s: int = 4
    c_p: float = 5.0
    c_a: float = 50.0
    p_O: float = 3.0
    sigma_y0: float = 1.0
    length: float = 1.0

    def violations(self) -> List[str]:
        problems = []
        if self.s < 2 or self.s % 2:
            problems.append(f"time-norm power s must be an even integer >= 2, got {self.s}")
        if self.c_p < 0.0 or self.c_a < 0.0:
            problems.append("dissipation weights c_p and c_a must be >= 0")
        if self.p_O < 1.0:
            problems.append(f"objective power p_O must be >= 1, got {self.p_O}")
        if not (self.sigma_y0 > 0.0 and self.length > 0.0):
            problems.append("objective normalization needs positive sigma_y0 and length")
        return problems


@dataclass
class ObjectiveValue:
    total: float
    disp: float
    D_p: float
    D_a: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


class TrajectoryObjective:
    """Evaluates the objective on one trajectory and supplies its derivatives.

    Construction does the work: the H1 norms of every level, the global time
    factor and the terminal fields are computed once.
    """

    def __init__(
        self,
        model: DynamicModel,
        record: TrajectoryRecord,
        materials: ElementMaterials,
        params: ObjectiveParams,
        gram: sp.spmatrix = None,
    ) -> None:
        if params.violations():
            raise InvalidArgumentError("; ".join(params.violations()))
        self.model = model
        self.record = record
        self.params = params
        self.gram = gram if gram is not None else h1_gram(model.mesh, model.design)
        N = record.n_steps
        dt = record.dt
        self.norms = np.zeros(N + 1)
        for n in range(1, N + 1):
            u = np.asarray(record.u[n]).ravel()
            self.norms[n] = np.sqrt(max(float(u @ (self.gram @ u)), 0.0))
        s = params.s
        self.time_sum = float(dt * np.sum(self.norms[1:] ** s))
        self.scale = params.sigma_y0 * params.length / record.end_time ** (1.0 / s)
        disp = self.scale * self.time_sum ** (1.0 / s)

        base = model.base
        space = model.space
        w = space.weights
        a_g = space.at_gauss(np.asarray(record.a[N]))
        idx = model.design_gp
        q = np.asarray(record.q[N])[idx]
        g = np.asarray(record.g_accum[N])[idx]
        d, d_prime, _ = cm.degradation_terms(a_g, base.d1)
        wa, wa_prime, _ = cm.hardening_terms(a_g, base.w1)
        sy_obj = np.repeat(materials.sigma_y_obj, 4)
        c_obj = np.repeat(materials.Gc_obj, 4) / (4.0 * model.cw * base.ell)
        plastic = cm.unit_plastic_energy(q, base.eps_p0, base.n) + g
        D_p = float(np.sum(w * d * sy_obj * plastic))
        D_a = float(np.sum(w * c_obj * wa))
        self.value = ObjectiveValue(disp + params.c_p * D_p + params.c_a * D_a, disp, D_p, D_a)

        self._damage_terminal = space.P @ (
            params.c_p * d_prime * sy_obj * plastic + params.c_a * c_obj * wa_prime
        )
        self._hardening_terminal = params.c_p * w * d * sy_obj * cm.unit_flow_stress(q, base.eps_p0, base.n)
        self._dissipation_terminal = params.c_p * w * d * sy_obj
        per_gp_p = (w * d * plastic).reshape(-1, 4).sum(axis=1)
        per_gp_a = (w * wa).reshape(-1, 4).sum(axis=1) / (4.0 * model.cw * base.ell)
        self.direct = (
            params.c_p * per_gp_p * materials.d_sigma_y_obj
            + params.c_a * per_gp_a * materials.d_Gc_obj
        )

    # adjoint sources, read through partials_at_step

    def displacement(self, n: int) -> np.ndarray:
        """``dO/du^n`` as a nodal ``(n_nodes, 2)`` array."""
        shape = (self.model.n_nodes, 2)
        if n < 1 or self.time_sum == 0.0 or self.norms[n] == 0.0:
            return np.zeros(shape)
        s = self.params.s
        factor = self.scale * self.time_sum ** (1.0 / s - 1.0) * self.record.dt * self.norms[n] ** (s - 2)
        u = np.asarray(self.record.u[n]).ravel()
        return (factor * (self.gram @ u)).reshape(shape)

    @property
    def damage_terminal(self) -> np.ndarray:
        return self._damage_terminal

    @property
    def hardening_terminal(self) -> np.ndarray:
        return self._hardening_terminal

    @property
    def dissipation_terminal(self) -> np.ndarray:
        return self._dissipation_terminal


def evaluate(
    model: DynamicModel,
    record: TrajectoryRecord,
    materials: ElementMaterials,
    params: ObjectiveParams,
) -> ObjectiveValue:
    return TrajectoryObjective(model, record, materials, params).value


@dataclass
class StepPartials:
    du: np.ndarray
    da: np.ndarray
    dq: np.ndarray
    dg: np.ndarray


def partials_at_step(objective: TrajectoryObjective, n: int) -> StepPartials:
    """Objective derivatives with respect to the level-``n`` state.

    Damage and hardening terms are endpoint functionals and appear only at
    the final level.
    """
    model = objective.model
    ngd = model.space.n_gauss
    if n == objective.record.n_steps:
        return StepPartials(
            objective.displacement(n),
            objective.damage_terminal.copy(),
            objective.hardening_terminal.copy(),
            objective.dissipation_terminal.copy(),
        )
    return StepPartials(objective.displacement(n), np.zeros(model.n_damage), np.zeros(ngd), np.zeros(ngd))


HISTORY_FIELDS = ("iter", "total", "disp", "D_p", "D_a", "volume")


def write_history(path: Path, rows: Iterable[Dict[str, float]]) -> None:
    """Objective history CSV, one row per optimization iteration."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: csv_cell(v) for k, v in row.items()})
    except OSError as exc:
        raise OSError(f"could not write objective history {path}: {exc}") from exc


def single_material_baselines(
    evaluate_design: Callable[[np.ndarray], ObjectiveValue],
    n_elements: int,
    lower: float,
    upper: float = 1.0,
) -> Dict[str, ObjectiveValue]:
    """Objective of the uniform designs at either bound."""
    out = {}
    for name, value in (("lower", lower), ("upper", upper)):
        out[name] = evaluate_design(np.full(n_elements, value))
        logger.info("baseline eta=%g: O=%.6e", value, out[name].total)
    return out
