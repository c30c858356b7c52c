"""Scenario assembly: meshes, materials, loads and solvers wired from a :class:`RunConfig`."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .adjoint import run_adjoint
from .config import RunConfig, resolve_units
from .constitutive import MaterialParams, young_to_bulk_shear
from .errors import ConfigError
from .forward import ContactLayer, DynamicModel, ForwardResult, ForwardState, run_forward
from .interpolation import ElementMaterials, Scheme, SolidVoidScheme, TwoMaterialScheme, element_materials
from .loading import LoadProgram, gaussian_top_load
from .mesh import Mesh2D, build_impact_mesh, build_structured_mesh
from .objective import ObjectiveValue, TrajectoryObjective, single_material_baselines
from .optimizer import ScheduleValues
from .parallel import ChunkedExecutor
from .sensitivity import (
    DensityFilter,
    DesignField,
    GradientCheckReport,
    SensitivityField,
    VolumeConstraint,
    accumulate_sensitivity,
    fd_gradient_check,
)

logger = logging.getLogger(__name__)

Observer = Callable[[DynamicModel, ForwardState], None]


@dataclass
class Trajectory:
    model: DynamicModel
    materials: ElementMaterials
    design: DesignField
    result: ForwardResult


def build_mesh(cfg: RunConfig) -> Mesh2D:
    g = cfg.geometry
    if cfg.impact is None:
        return build_structured_mesh(g.nx, g.ny, g.L, g.H)
    imp = cfg.impact
    thickness = imp.contact_thickness * g.L if imp.contact_thickness is not None else g.H / g.ny
    return build_impact_mesh(
        g.nx,
        g.ny,
        g.L,
        g.H,
        imp.flyer_nx,
        imp.flyer_ny,
        imp.flyer_length * g.L,
        imp.flyer_height * g.L,
        thickness,
    )


class ImpactProblem:
    """One configured scenario, evaluated at any design.

    Implements the design-problem protocol of :func:`impactopt.optimizer.run_optimization`.
    """

    def __init__(self, cfg: RunConfig, executor: Optional[ChunkedExecutor] = None) -> None:
        self.cfg = cfg
        self.units = resolve_units(cfg)
        self.base: MaterialParams = cfg.material.params()
        self.mesh = build_mesh(cfg)
        self.executor = executor or ChunkedExecutor(cfg.threads or 1)
        self.scheme: Scheme = cfg.interpolation.scheme()
        self.kind = cfg.interpolation.kind
        self.filter = DensityFilter.for_mesh(self.mesh, self.units.filter_radius)
        areas = self.mesh.element_areas()[self.mesh.design_elements]
        self.constraint = VolumeConstraint(areas, cfg.design.volume_limit, self.filter)
        self.n_design = len(self.mesh.design_elements)
        if self.kind == "solid":
            self.lower = self.upper = 1.0
        elif self.kind == "solid-void":
            self.lower, self.upper = cfg.interpolation.eta_min, 1.0
        else:
            self.lower, self.upper = 0.0, 1.0
        self.load_scale = 1.0
        self.contact, self.flyer, self.flyer_velocity = self._impact_parts()
        self.last: Optional[Trajectory] = None
        logger.info(
            "%s: %d elements (%d design), dt=%.4g, %d steps",
            cfg.scenario,
            self.mesh.n_elements,
            self.n_design,
            self.units.dt,
            cfg.time.n_steps,
        )

    def _impact_parts(self):
        imp = self.cfg.impact
        if imp is None:
            return None, None, None
        K, mu = young_to_bulk_shear(imp.E, imp.nu)
        flyer = self.base.with_values(K=K, mu=mu, rho=imp.rho)
        contact = ContactLayer(
            K=imp.contact_K_factor * imp.E,
            mu=mu if imp.contact_mu is None else imp.contact_mu,
            rho=imp.rho,
            eps_soft=imp.contact_eps_soft,
        )
        return contact, flyer, (0.0, -self.units.velocity)

    def initial_design(self) -> np.ndarray:
        if self.kind == "solid":
            return np.ones(self.n_design)
        return np.full(self.n_design, self.cfg.design.initial)

    def load(self) -> LoadProgram:
        ld = self.cfg.load
        program = gaussian_top_load(
            self.mesh,
            self.cfg.geometry.L,
            self.units.impulse,
            self.units.duration,
            ld.pulse,
            ld.std_fraction,
            ld.width_fraction,
            np.asarray(ld.body_force, dtype=float),
        )
        program.scale = self.load_scale
        return program

    def apply_schedule(self, values: ScheduleValues) -> None:
        """Continuation: Bezier slopes or the power-law exponent, plus the load amplitude."""
        if isinstance(self.scheme, SolidVoidScheme) and self.kind == "solid-void":
            self.scheme = self.scheme.with_slopes(values.k1, values.k2)
        elif isinstance(self.scheme, TwoMaterialScheme):
            self.scheme = self.scheme.with_power(values.p)
        self.load_scale = values.load_scale
        logger.debug("schedule: %s", values)

    def materials(self, eta_phys: np.ndarray) -> ElementMaterials:
        return element_materials(eta_phys, self.scheme, self.base, self.cfg.objective.p_O)

    def model(self, eta_phys: np.ndarray) -> Tuple[DynamicModel, ElementMaterials]:
        materials = self.materials(eta_phys)
        model = DynamicModel(
            self.mesh,
            self.base,
            materials,
            self.load(),
            clamped_sets=self.cfg.boundary.clamped,
            contact=self.contact,
            flyer=self.flyer,
            flyer_velocity=self.flyer_velocity,
            executor=self.executor,
        )
        return model, materials

    def design(self, eta_raw: np.ndarray) -> DesignField:
        return DesignField.from_raw(
            eta_raw, self.filter, self.lower, self.upper, self.cfg.design.volume_limit
        )

    def forward(
        self,
        eta_raw: np.ndarray,
        penalty_schedule: Optional[Sequence[float]] = None,
        spill_dir: Optional[Path] = None,
        observer: Optional[Observer] = None,
        keep_trajectory: bool = True,
    ) -> Trajectory:
        design = self.design(eta_raw)
        model, materials = self.model(design.eta_phys)
        solver = self.cfg.solver
        watch = None if observer is None else (lambda state: observer(model, state))
        result = run_forward(
            model,
            self.units.dt,
            self.cfg.time.n_steps,
            solver.admm,
            solver.return_map,
            cfl=self.cfg.time.cfl,
            penalty_schedule=penalty_schedule,
            spill_dir=spill_dir,
            observer=watch,
            keep_trajectory=keep_trajectory,
        )
        self.last = Trajectory(model, materials, design, result)
        return self.last

    def objective(self, run: Trajectory) -> TrajectoryObjective:
        return TrajectoryObjective(run.model, run.result.record, run.materials, self.cfg.objective_params())

    def evaluate(
        self, eta_raw: np.ndarray, penalty_schedule: Optional[Sequence[float]] = None
    ) -> ObjectiveValue:
        return self.objective(self.forward(eta_raw, penalty_schedule)).value

    def sensitivity(self, run: Trajectory) -> Tuple[ObjectiveValue, SensitivityField]:
        obj = self.objective(run)
        record = run.result.record
        adjoint = run_adjoint(run.model, record, obj, self.cfg.solver.adjoint)
        field = accumulate_sensitivity(run.model, record, adjoint, run.materials, obj.direct, self.filter)
        return obj.value, field

    def value_and_gradient(self, eta_raw: np.ndarray) -> Tuple[ObjectiveValue, np.ndarray]:
        value, field = self.sensitivity(self.forward(eta_raw))
        return value, field.d_raw

    def volume(self, eta_raw: np.ndarray) -> Tuple[float, np.ndarray, float]:
        return (
            self.constraint.value(eta_raw),
            self.constraint.gradient(),
            self.constraint.fraction(eta_raw),
        )

    def baselines(self) -> Dict[str, ObjectiveValue]:
        return single_material_baselines(self.evaluate, self.n_design, self.lower, self.upper)

    def sample_elements(self) -> np.ndarray:
        gc = self.cfg.gradient_check
        if gc.elements is not None:
            bad = [e for e in gc.elements if not 0 <= e < self.n_design]
            if bad:
                raise ConfigError([f"gradient_check.elements out of range: {bad}"])
            return np.asarray(gc.elements, dtype=np.int64)
        rng = np.random.default_rng(self.cfg.seed)
        count = min(gc.n_elements, self.n_design)
        return np.sort(rng.choice(self.n_design, size=count, replace=False))

    def gradient_check(self, eta_raw: Optional[np.ndarray] = None) -> GradientCheckReport:
        """Adjoint gradient against central differences at sampled elements.

        Perturbed runs replay the penalty schedule of the unperturbed one.
        """
        if self.kind == "solid":
            raise ConfigError(["gradient checks need a solid-void or two-material design"])
        eta = self.initial_design() if eta_raw is None else np.asarray(eta_raw, dtype=float)
        gc = self.cfg.gradient_check
        elements = self.sample_elements()
        if np.any(eta[elements] - gc.h < self.lower) or np.any(eta[elements] + gc.h > self.upper):
            raise ConfigError(["gradient_check.h pushes sampled design variables out of bounds"])
        run = self.forward(eta)
        penalties = np.asarray(run.result.record.penalty, dtype=float).copy()
        value, field = self.sensitivity(run)
        logger.info("gradient check at O=%.6e over %d elements", value.total, len(elements))
        return fd_gradient_check(
            lambda x: self.evaluate(x, penalties).total,
            eta,
            field.d_raw,
            elements,
            h=gc.h,
            tolerance=gc.tolerance,
            threshold=gc.threshold,
            budget_seconds=gc.budget_seconds,
        )

    def close(self) -> None:
        self.executor.close()
