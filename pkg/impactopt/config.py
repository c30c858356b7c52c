"""Run configuration: JSON scenario files parsed into nested dataclasses.

All lengths are in units of the domain length ``L``. Times are in units of
``L / c_L`` and impulses in units of ``L^2 sqrt(E rho)``, with ``c_L``, ``E``
and ``rho`` taken from the ``material`` block. Impact velocities are in units
of ``c_L``. :func:`resolve_units` converts to absolute values once.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .adjoint import AdjointSettings
from .constitutive import MaterialParams, longitudinal_wave_speed, young_to_bulk_shear
from .errors import ConfigError
from .forward import ADMMSettings, ReturnMapSettings
from .interpolation import SolidVoidScheme, TwoMaterialScheme
from .loading import PULSES
from .objective import ObjectiveParams
from .optimizer import ScheduleParams

logger = logging.getLogger(__name__)

SCENARIOS = ("model-problem", "blast-solid-void", "impact-two-material")
INTERPOLATIONS = ("solid", "solid-void", "two-material")
BOUNDARY_SETS = ("left", "right", "top", "bottom")


@dataclass
class GeometryConfig:
    L: float = 1.0
    H: float = 0.25
    nx: int = 100
    ny: int = 25


@dataclass
class MaterialConfig:
    E: float
    nu: float
    rho: float
    sigma_y0: float
    eps_p0: float
    n: float
    eps_dot_p0: float
    m: float
    Gc: float
    ell: float
    d1: float = 0.01
    w1: float = 0.95
    c_w: Optional[float] = None

    def params(self) -> MaterialParams:
        return MaterialParams.from_young(
            self.E,
            self.nu,
            rho=self.rho,
            sigma_y0=self.sigma_y0,
            eps_p0=self.eps_p0,
            n=self.n,
            eps_dot_p0=self.eps_dot_p0,
            m=self.m,
            Gc=self.Gc,
            ell=self.ell,
            d1=self.d1,
            w1=self.w1,
            c_w=self.c_w,
        )


@dataclass
class InterpolationConfig:
    """``solid`` fixes the design at one; the other kinds map eta to materials."""

    kind: str = "solid-void"
    k1: float = 0.5
    k2: float = 2.0
    eta_min: float = 0.01
    delta_p: Optional[float] = None
    delta_a: Optional[float] = None
    E1: Optional[float] = None
    E2: Optional[float] = None
    sy1: Optional[float] = None
    sy2: Optional[float] = None
    Gc1: Optional[float] = None
    Gc2: Optional[float] = None
    p: float = 2.0

    def scheme(self) -> Union[SolidVoidScheme, TwoMaterialScheme]:
        if self.kind == "two-material":
            return TwoMaterialScheme(self.E1, self.E2, self.sy1, self.sy2, self.Gc1, self.Gc2, self.p)
        return SolidVoidScheme(self.k1, self.k2, self.eta_min, self.delta_p, self.delta_a)

    def violations(self) -> List[str]:
        if self.kind not in INTERPOLATIONS:
            return [f"interpolation.kind must be one of {INTERPOLATIONS}, got {self.kind!r}"]
        if self.kind == "two-material":
            missing = [k for k in ("E1", "E2", "sy1", "sy2", "Gc1", "Gc2") if getattr(self, k) is None]
            if missing:
                return [f"two-material interpolation needs {', '.join(missing)}"]
        return [f"interpolation: {v}" for v in self.scheme().violations()]


@dataclass
class LoadConfig:
    impulse: float = 0.0
    duration: float = 1.47
    pulse: str = "box"
    std_fraction: float = 0.05
    width_fraction: float = 0.2
    body_force: List[float] = field(default_factory=lambda: [0.0, 0.0])

    def violations(self) -> List[str]:
        problems = []
        if self.pulse not in PULSES:
            problems.append(f"load.pulse must be one of {PULSES}, got {self.pulse!r}")
        if self.impulse < 0.0:
            problems.append("load.impulse must be >= 0")
        if not self.duration > 0.0:
            problems.append("load.duration must be positive")
        if not (self.std_fraction > 0.0 and self.width_fraction > 0.0):
            problems.append("load profile std and width must be positive")
        if len(self.body_force) != 2:
            problems.append("load.body_force must have two components")
        return problems


@dataclass
class ImpactConfig:
    """Flyer block. Flyer sizes and the contact thickness are in units of ``L``."""

    flyer_nx: int
    flyer_ny: int
    flyer_length: float
    flyer_height: float
    E: float
    nu: float
    rho: float
    velocity: float
    contact_K_factor: float = 10.0
    contact_mu: Optional[float] = None
    contact_eps_soft: float = 1e-4
    contact_thickness: Optional[float] = None

    def violations(self) -> List[str]:
        problems = []
        if self.flyer_nx < 1 or self.flyer_ny < 1:
            problems.append("flyer element counts must be >= 1")
        if not (self.flyer_length > 0.0 and self.flyer_height > 0.0):
            problems.append("flyer dimensions must be positive")
        if not (self.E > 0.0 and -1.0 < self.nu < 0.5 and self.rho > 0.0):
            problems.append("flyer needs E > 0, -1 < nu < 0.5 and rho > 0")
        if self.velocity < 0.0:
            problems.append("impact.velocity must be >= 0 (the flyer moves downwards)")
        if not self.contact_K_factor > 0.0:
            problems.append("impact.contact_K_factor must be positive")
        if not 0.0 < self.contact_eps_soft < 1.0:
            problems.append("impact.contact_eps_soft must lie in (0, 1)")
        if self.contact_thickness is not None and not self.contact_thickness > 0.0:
            problems.append("impact.contact_thickness must be positive")
        return problems


@dataclass
class TimeConfig:
    end_time: float
    n_steps: int
    cfl: float = 0.5

    def violations(self) -> List[str]:
        problems = []
        if not self.end_time > 0.0:
            problems.append("time.end_time must be positive")
        if self.n_steps < 1:
            problems.append("time.n_steps must be >= 1")
        if not 0.0 < self.cfl <= 1.0:
            problems.append("time.cfl must lie in (0, 1]")
        return problems


@dataclass
class BoundaryConfig:
    clamped: List[str] = field(default_factory=lambda: ["left", "right"])

    def violations(self) -> List[str]:
        bad = [name for name in self.clamped if name not in BOUNDARY_SETS]
        return [f"unknown boundary set(s) {bad}; expected names from {BOUNDARY_SETS}"] if bad else []


@dataclass
class SolverConfig:
    admm: ADMMSettings = field(default_factory=ADMMSettings)
    return_map: ReturnMapSettings = field(default_factory=ReturnMapSettings)
    adjoint: AdjointSettings = field(default_factory=AdjointSettings)


@dataclass
class ObjectiveConfig:
    s: int = 4
    c_p: float = 5.0
    c_a: float = 50.0
    p_O: float = 3.0


@dataclass
class DesignConfig:
    initial: float = 0.5
    volume_limit: float = 0.5
    filter_radius: float = 0.021

    def violations(self) -> List[str]:
        problems = []
        if not 0.0 < self.volume_limit <= 1.0:
            problems.append("design.volume_limit must lie in (0, 1]")
        if self.filter_radius < 0.0:
            problems.append("design.filter_radius must be >= 0")
        if not 0.0 <= self.initial <= 1.0:
            problems.append("design.initial must lie in [0, 1]")
        return problems


@dataclass
class OutputConfig:
    stride: int = 100
    spill: bool = False

    def violations(self) -> List[str]:
        return ["output.stride must be >= 1"] if self.stride < 1 else []


@dataclass
class GradientCheckConfig:
    n_elements: int = 10
    h: float = 1e-5
    tolerance: float = 5e-3
    threshold: float = 1e-3
    budget_seconds: float = 300.0
    elements: Optional[List[int]] = None

    def violations(self) -> List[str]:
        problems = []
        if self.n_elements < 1:
            problems.append("gradient_check.n_elements must be >= 1")
        if not (self.h > 0.0 and self.tolerance > 0.0 and self.budget_seconds > 0.0):
            problems.append("gradient_check h, tolerance and budget_seconds must be positive")
        if self.threshold < 0.0:
            problems.append("gradient_check.threshold must be >= 0")
        return problems


@dataclass
class RunConfig:
    scenario: str
    material: MaterialConfig
    time: TimeConfig
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    interpolation: InterpolationConfig = field(default_factory=InterpolationConfig)
    load: LoadConfig = field(default_factory=LoadConfig)
    impact: Optional[ImpactConfig] = None
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    design: DesignConfig = field(default_factory=DesignConfig)
    optimizer: ScheduleParams = field(default_factory=ScheduleParams)
    output: OutputConfig = field(default_factory=OutputConfig)
    gradient_check: GradientCheckConfig = field(default_factory=GradientCheckConfig)
    threads: Optional[int] = None
    seed: int = 0

    def objective_params(self) -> ObjectiveParams:
        o = self.objective
        return ObjectiveParams(o.s, o.c_p, o.c_a, o.p_O, self.material.sigma_y0, self.geometry.L)


# ------------------------------------------------------------------ parsing


def _type_name(tp: Any) -> str:
    return getattr(tp, "__name__", str(tp))


def _convert(value: Any, tp: Any, where: str, problems: List[str]) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is Union:
        inner = [a for a in args if a is not type(None)]
        if value is None:
            return None
        return _convert(value, inner[0], where, problems)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            problems.append(f"{where}: expected an object, got {type(value).__name__}")
            return None
        return _build(tp, value, where, problems)
    if origin in (list, List):
        if not isinstance(value, list):
            problems.append(f"{where}: expected a list, got {type(value).__name__}")
            return None
        return [_convert(v, args[0], f"{where}[{i}]", problems) for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            problems.append(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}: expected a number, got {value!r}")
            return value
        if not math.isfinite(value):
            problems.append(f"{where}: must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            problems.append(f"{where}: expected a string, got {value!r}")
        return value
    problems.append(f"{where}: unsupported type {_type_name(tp)}")
    return value


def _build(cls: type, data: Dict[str, Any], where: str, problems: List[str]) -> Any:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            problems.append(f"{where}.{key}: unknown key" if where else f"{key}: unknown key")
    kwargs = {}
    broken = False
    for f in dataclasses.fields(cls):
        path = f"{where}.{f.name}" if where else f.name
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                problems.append(f"{path}: required key missing")
                broken = True
            continue
        before = len(problems)
        value = _convert(data[f.name], hints[f.name], path, problems)
        if len(problems) > before:
            broken = True
        kwargs[f.name] = value
    if broken:
        return None
    obj = cls(**kwargs)
    check = getattr(obj, "violations", None)
    if check is not None:
        problems.extend(f"{where}: {v}" if where else v for v in check())
    return obj


def _material_violations(m: MaterialConfig) -> List[str]:
    try:
        params = m.params()
    except (ValueError, ZeroDivisionError) as exc:
        return [f"material: {exc}"]
    return [f"material: {v}" for v in params.violations()]


def cfl_limit(cfg: RunConfig) -> float:
    """Largest stable time step for the configured meshes and materials (absolute units)."""
    g = cfg.geometry
    mat = cfg.material
    K, mu = young_to_bulk_shear(mat.E, mat.nu)
    speeds = [longitudinal_wave_speed(K, mu, mat.rho)]
    sizes = [g.L / g.nx, g.H / g.ny]
    if cfg.interpolation.kind == "two-material" and cfg.interpolation.E2 is not None:
        K2, mu2 = young_to_bulk_shear(max(cfg.interpolation.E1, cfg.interpolation.E2), mat.nu)
        speeds.append(longitudinal_wave_speed(K2, mu2, mat.rho))
    if cfg.impact is not None:
        imp = cfg.impact
        Kf, muf = young_to_bulk_shear(imp.E, imp.nu)
        Kc = imp.contact_K_factor * imp.E
        muc = muf if imp.contact_mu is None else imp.contact_mu
        speeds += [longitudinal_wave_speed(Kf, muf, imp.rho), longitudinal_wave_speed(Kc, muc, imp.rho)]
        thickness = imp.contact_thickness * g.L if imp.contact_thickness is not None else g.H / g.ny
        sizes += [imp.flyer_length * g.L / imp.flyer_nx, imp.flyer_height * g.L / imp.flyer_ny, thickness]
    return cfg.time.cfl * min(sizes) / max(speeds)


def validate(cfg: RunConfig) -> List[str]:
    problems = _material_violations(cfg.material)
    if cfg.scenario not in SCENARIOS:
        problems.append(f"scenario must be one of {SCENARIOS}, got {cfg.scenario!r}")
    g = cfg.geometry
    if g.nx < 1 or g.ny < 1 or not (g.L > 0.0 and g.H > 0.0):
        problems.append("geometry needs positive L, H and element counts")
        return problems
    if cfg.scenario == "impact-two-material":
        if cfg.impact is None:
            problems.append("impact-two-material scenario needs an impact block")
        if cfg.interpolation.kind != "two-material":
            problems.append("impact-two-material scenario needs two-material interpolation")
    elif cfg.impact is not None:
        problems.append(f"impact block is only valid for impact-two-material, not {cfg.scenario}")
    if cfg.scenario == "blast-solid-void" and cfg.interpolation.kind != "solid-void":
        problems.append("blast-solid-void scenario needs solid-void interpolation")
    if cfg.scenario == "model-problem" and cfg.interpolation.kind != "solid":
        problems.append("model-problem scenario needs solid interpolation")
    if cfg.interpolation.kind == "solid-void" and cfg.design.initial < cfg.interpolation.eta_min:
        problems.append("design.initial must be >= interpolation.eta_min")
    if cfg.threads is not None and cfg.threads < 1:
        problems.append("threads must be >= 1")
    if cfg.impact is not None and not problems:
        imp = cfg.impact
        if not math.isclose(imp.flyer_length * g.L / imp.flyer_nx, g.L / g.nx, rel_tol=1e-9):
            problems.append("flyer element width must equal the domain element width")
        offset = 0.5 * (1.0 - imp.flyer_length) * g.nx
        if imp.flyer_length > 1.0 or not math.isclose(offset, round(offset), abs_tol=1e-9):
            problems.append("flyer edges must land on domain node columns")
    if not problems:
        limit = cfl_limit(cfg)
        units = resolve_units(cfg)
        if units.dt > limit:
            problems.append(
                f"time step {units.dt:.6g} (end_time / n_steps) exceeds the CFL limit {limit:.6g}; "
                f"use at least {math.ceil(units.end_time / limit)} steps"
            )
    return problems


def parse_config_dict(data: Dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(["configuration must be a JSON object"])
    problems: List[str] = []
    cfg = _build(RunConfig, data, "", problems)
    if cfg is not None and not problems:
        problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Read, type-check and validate a scenario file, reporting every violation."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror or exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"]) from exc
    cfg = parse_config_dict(data)
    logger.debug("parsed %s (%s)", path, cfg.scenario)
    return cfg


def config_to_dict(cfg: RunConfig) -> Dict[str, Any]:
    return dataclasses.asdict(cfg)


def dump_config(cfg: RunConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


@dataclass(frozen=True)
class ResolvedUnits:
    wave_speed: float
    time_unit: float
    impulse_unit: float
    dt: float
    end_time: float
    impulse: float
    duration: float
    velocity: float
    filter_radius: float


def resolve_units(cfg: RunConfig) -> ResolvedUnits:
    mat = cfg.material
    L = cfg.geometry.L
    K, mu = young_to_bulk_shear(mat.E, mat.nu)
    c = longitudinal_wave_speed(K, mu, mat.rho)
    t_unit = L / c
    i_unit = L * L * math.sqrt(mat.E * mat.rho)
    end_time = cfg.time.end_time * t_unit
    return ResolvedUnits(
        wave_speed=c,
        time_unit=t_unit,
        impulse_unit=i_unit,
        dt=end_time / cfg.time.n_steps,
        end_time=end_time,
        impulse=cfg.load.impulse * i_unit,
        duration=cfg.load.duration * t_unit,
        velocity=(cfg.impact.velocity * c) if cfg.impact is not None else 0.0,
        filter_radius=cfg.design.filter_radius * L,
    )
