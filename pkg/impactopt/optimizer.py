"""Method of moving asymptotes with one linear constraint, continuation schedules and the design loop."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidArgumentError, SolverError
from .objective import ObjectiveValue, write_history

logger = logging.getLogger(__name__)

ASYMPTOTE_INIT = 0.5
ASYMPTOTE_INCREASE = 1.2
ASYMPTOTE_DECREASE = 0.7
ALBEFA = 0.1
RAA0 = 1e-5
# elastic variable y on the volume constraint, costed c y + d y^2 / 2
ELASTIC_C = 1000.0
ELASTIC_D = 1.0


@dataclass
class ScheduleParams:
    """Continuation schedules and loop controls; every value is a pure function of the iteration."""

    k1_start: float = 0.5
    k1_end: float = 0.125
    k2_start: float = 2.0
    k2_end: float = 8.0
    bezier_first: int = 1
    bezier_last: int = 50
    load_start: float = 0.7
    load_hold_until: int = 60
    load_full_at: int = 100
    p_start: float = 2.0
    p_end: float = 8.0
    p_full_at: int = 100
    fixed_at: Optional[int] = None
    conv_tol: float = 1e-3
    max_iters: int = 300
    move: float = 0.1

    def violations(self) -> List[str]:
        problems = []
        if not self.bezier_first < self.bezier_last:
            problems.append("bezier_first must precede bezier_last")
        if not self.load_hold_until < self.load_full_at:
            problems.append("load_hold_until must precede load_full_at")
        if not 0.0 < self.load_start <= 1.0:
            problems.append(f"load_start must lie in (0, 1], got {self.load_start}")
        if self.p_full_at < 1:
            problems.append("p_full_at must be >= 1")
        if not self.conv_tol > 0.0:
            problems.append("conv_tol must be positive")
        if self.max_iters < 1:
            problems.append("max_iters must be >= 1")
        if not 0.0 < self.move <= 1.0:
            problems.append(f"move limit must lie in (0, 1], got {self.move}")
        return problems


@dataclass(frozen=True)
class ScheduleValues:
    k1: float
    k2: float
    load_scale: float
    p: float


def _ramp(k: int, first: int, last: int) -> float:
    return float(np.clip((k - first) / (last - first), 0.0, 1.0))


def schedule_values(params: ScheduleParams, iteration: int) -> ScheduleValues:
    """Schedule values at a 1-based iteration number."""
    k = iteration if params.fixed_at is None else params.fixed_at
    t = _ramp(k, params.bezier_first, params.bezier_last)
    ramp = _ramp(k, params.load_hold_until, params.load_full_at)
    load = params.load_start + (1.0 - params.load_start) * ramp
    tp = _ramp(k, 1, params.p_full_at) if params.p_full_at > 1 else 1.0
    return ScheduleValues(
        k1=params.k1_start + t * (params.k1_end - params.k1_start),
        k2=params.k2_start + t * (params.k2_end - params.k2_start),
        load_scale=load,
        p=params.p_start + tp * (params.p_end - params.p_start),
    )


# -------------------------------------------------------------------- MMA


@dataclass
class MMAState:
    low: Optional[np.ndarray] = None
    upp: Optional[np.ndarray] = None
    x_old1: Optional[np.ndarray] = None
    x_old2: Optional[np.ndarray] = None
    iteration: int = 0
    constraint: float = 0.0
    constraint_grad: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {"iteration": self.iteration, "constraint": self.constraint}
        for name in ("low", "upp", "x_old1", "x_old2", "constraint_grad"):
            value = getattr(self, name)
            out[name] = None if value is None else value.tolist()
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "MMAState":
        arrays = {
            name: None if data.get(name) is None else np.asarray(data[name], dtype=float)
            for name in ("low", "upp", "x_old1", "x_old2", "constraint_grad")
        }
        return cls(iteration=int(data["iteration"]), constraint=float(data["constraint"]), **arrays)


def _update_asymptotes(x: np.ndarray, state: MMAState, span: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if state.iteration < 2 or state.x_old1 is None or state.x_old2 is None or state.low is None:
        return x - ASYMPTOTE_INIT * span, x + ASYMPTOTE_INIT * span
    trend = (x - state.x_old1) * (state.x_old1 - state.x_old2)
    factor = np.ones_like(x)
    factor[trend > 0.0] = ASYMPTOTE_INCREASE
    factor[trend < 0.0] = ASYMPTOTE_DECREASE
    low = x - factor * (state.x_old1 - state.low)
    upp = x + factor * (state.upp - state.x_old1)
    low = np.clip(low, x - 10.0 * span, x - 0.01 * span)
    upp = np.clip(upp, x + 0.01 * span, x + 10.0 * span)
    return low, upp


def _approximation(grad: np.ndarray, x: np.ndarray, low: np.ndarray, upp: np.ndarray, span: np.ndarray):
    pos = np.maximum(grad, 0.0)
    neg = np.maximum(-grad, 0.0)
    reg = 0.001 * (pos + neg) + RAA0 / span
    return (pos + reg) * (upp - x) ** 2, (neg + reg) * (x - low) ** 2


def mma_step(
    x: np.ndarray,
    grad_objective: np.ndarray,
    constraint: float,
    grad_constraint: np.ndarray,
    state: MMAState,
    lower: float,
    upper: float,
    move: float = 0.1,
) -> np.ndarray:
    """One MMA update for ``min f(x)`` subject to ``c(x) <= 0`` and box bounds.

    The convex separable subproblem is solved through its one-dimensional
    dual; ``state`` is updated in place. An elastic variable relaxes the
    constraint, so when it cannot be met inside the move limits the step goes
    as far towards feasibility as they allow.
    """
    x = np.asarray(x, dtype=float)
    grad_objective = np.asarray(grad_objective, dtype=float)
    grad_constraint = np.asarray(grad_constraint, dtype=float)
    if not (x.shape == grad_objective.shape == grad_constraint.shape):
        raise InvalidArgumentError("design, objective gradient and constraint gradient must have one shape")
    span = np.full_like(x, max(upper - lower, 1e-5))
    low, upp = _update_asymptotes(x, state, span)
    alfa = np.maximum.reduce([low + ALBEFA * (x - low), x - move * span, np.full_like(x, lower)])
    beta = np.minimum.reduce([upp - ALBEFA * (upp - x), x + move * span, np.full_like(x, upper)])

    p0, q0 = _approximation(grad_objective, x, low, upp, span)
    p1, q1 = _approximation(grad_constraint, x, low, upp, span)
    rhs = float(np.sum(p1 / (upp - x) + q1 / (x - low))) - constraint

    def primal(lam: float) -> np.ndarray:
        P = np.sqrt(p0 + lam * p1)
        Q = np.sqrt(q0 + lam * q1)
        return np.clip((P * low + Q * upp) / (P + Q), alfa, beta)

    def dual_slope(lam: float) -> float:
        xs = primal(lam)
        elastic = max(0.0, (lam - ELASTIC_C) / ELASTIC_D)
        return float(np.sum(p1 / (upp - xs) + q1 / (xs - low))) - rhs - elastic

    lam = 0.0
    if dual_slope(0.0) > 0.0:
        hi = 1.0
        while dual_slope(hi) > 0.0:
            hi *= 10.0
        lam = brentq(dual_slope, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    x_new = primal(lam)

    state.x_old2 = state.x_old1
    state.x_old1 = x.copy()
    state.low, state.upp = low, upp
    state.iteration += 1
    state.constraint = constraint
    state.constraint_grad = grad_constraint.copy()
    return x_new


# ------------------------------------------------------------------ design loop


class DesignProblem(Protocol):
    """What the loop needs from a scenario."""

    n_design: int
    lower: float
    upper: float

    def apply_schedule(self, values: ScheduleValues) -> None: ...

    def value_and_gradient(self, eta_raw: np.ndarray) -> Tuple[ObjectiveValue, np.ndarray]: ...

    def volume(self, eta_raw: np.ndarray) -> Tuple[float, np.ndarray, float]: ...


@dataclass
class OptimizationResult:
    eta: np.ndarray
    iterations: int
    converged: bool
    history: List[Dict[str, float]] = field(default_factory=list)


CHECKPOINT = "checkpoint.json"


def _write_checkpoint(out_dir: Path, iteration: int, eta: np.ndarray, state: MMAState,
                      history: List[Dict[str, float]], scale: float) -> None:
    payload = {
        "iteration": iteration,
        "eta": eta.tolist(),
        "mma": state.to_dict(),
        "history": history,
        "objective_scale": scale,
    }
    tmp = out_dir / (CHECKPOINT + ".tmp")
    tmp.write_text(json.dumps(payload))
    tmp.replace(out_dir / CHECKPOINT)


def run_optimization(
    problem: DesignProblem,
    eta0: np.ndarray,
    schedule: ScheduleParams,
    output_dir: Path,
    resume: bool = False,
) -> OptimizationResult:
    """Schedule, forward, adjoint, filter transpose and MMA, repeated until ``max|d eta| < conv_tol``.

    Iterations are numbered from one. Each iteration writes
    ``designs/iter_XXXX.npy`` and the objective history; the JSON checkpoint
    is refreshed after every accepted update and before re-raising a solver
    failure.
    """
    out_dir = Path(output_dir)
    designs = out_dir / "designs"
    designs.mkdir(parents=True, exist_ok=True)
    eta = np.asarray(eta0, dtype=float).copy()
    state = MMAState()
    history: List[Dict[str, float]] = []
    first = 1
    scale = 0.0
    if resume:
        path = out_dir / CHECKPOINT
        if not path.exists():
            raise InvalidArgumentError(f"no checkpoint to resume from at {path}")
        saved = json.loads(path.read_text())
        eta = np.asarray(saved["eta"], dtype=float)
        state = MMAState.from_dict(saved["mma"])
        history = list(saved["history"])
        first = int(saved["iteration"]) + 1
        scale = float(saved["objective_scale"])
        logger.info("resuming from iteration %d", first)
    if eta.shape != (problem.n_design,):
        raise InvalidArgumentError(f"design has shape {eta.shape}, expected ({problem.n_design},)")

    converged = False
    k = first - 1
    for k in range(first, schedule.max_iters + 1):
        values = schedule_values(schedule, k)
        problem.apply_schedule(values)
        try:
            value, grad = problem.value_and_gradient(eta)
        except SolverError:
            logger.error("solver failure at iteration %d; checkpoint kept", k)
            _write_checkpoint(out_dir, k - 1, eta, state, history, scale)
            raise
        vol, vol_grad, fraction = problem.volume(eta)
        if scale == 0.0:
            scale = 10.0 / abs(value.total) if value.total != 0.0 else 1.0
        np.save(designs / f"iter_{k:04d}.npy", eta)
        row = {"iter": k, **value.as_dict(), "volume": fraction}
        history.append(row)
        write_history(out_dir / "history.csv", history)

        eta_new = mma_step(
            eta, scale * grad, vol, vol_grad, state, problem.lower, problem.upper, schedule.move
        )
        change = float(np.max(np.abs(eta_new - eta)))
        eta = eta_new
        _write_checkpoint(out_dir, k, eta, state, history, scale)
        logger.info(
            "iter %d: O=%.6e (disp %.3e, D_p %.3e, D_a %.3e) vol=%.4f change=%.2e",
            k, value.total, value.disp, value.D_p, value.D_a, fraction, change,
        )
        if change < schedule.conv_tol:
            converged = True
            break
    np.save(out_dir / "final_design.npy", eta)
    return OptimizationResult(eta, k, converged, history)


