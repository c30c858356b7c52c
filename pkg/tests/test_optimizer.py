from __future__ import annotations

import json

import numpy as np
import pytest

from impactopt.errors import InvalidArgumentError, SolverError
from impactopt.objective import ObjectiveValue
from impactopt.optimizer import (
    MMAState,
    ScheduleParams,
    mma_step,
    run_optimization,
    schedule_values,
)


class QuadraticProblem:
    """``sum (x - target)^2`` under a mean-volume limit."""

    def __init__(self, n: int = 6, target: float = 0.3, limit: float = 1.0, fail_at=None) -> None:
        self.n_design = n
        self.lower = 0.0
        self.upper = 1.0
        self.target = target
        self.limit = limit
        self.fail_at = fail_at
        self.calls = 0
        self.schedules = []

    def apply_schedule(self, values) -> None:
        self.schedules.append(values)

    def value_and_gradient(self, eta):
        self.calls += 1
        if self.fail_at is not None and self.calls == self.fail_at:
            raise SolverError("synthetic failure", step=7)
        diff = eta - self.target
        total = float(diff @ diff)
        return ObjectiveValue(total, total, 0.0, 0.0), 2.0 * diff

    def volume(self, eta):
        fraction = float(eta.mean())
        return fraction - self.limit, np.full(self.n_design, 1.0 / self.n_design), fraction


def test_schedule_ramps() -> None:
    params = ScheduleParams()

    first = schedule_values(params, 1)
    assert (first.k1, first.k2, first.load_scale, first.p) == (0.5, 2.0, 0.7, 2.0)
    late = schedule_values(params, 50)
    assert late.k1 == pytest.approx(0.125)
    assert late.k2 == pytest.approx(8.0)
    assert schedule_values(params, 80).load_scale == pytest.approx(0.85)
    assert schedule_values(params, 60).load_scale == pytest.approx(0.7)
    assert schedule_values(params, 300).load_scale == 1.0
    assert schedule_values(params, 100).p == pytest.approx(8.0)


def test_fixed_schedule_ignores_iteration() -> None:
    params = ScheduleParams(fixed_at=1)

    assert schedule_values(params, 250) == schedule_values(params, 1)


def test_schedule_violations() -> None:
    assert ScheduleParams().violations() == []
    bad = ScheduleParams(bezier_first=50, bezier_last=10, move=0.0, max_iters=0)
    assert len(bad.violations()) == 3


def test_zero_gradient_leaves_design_unchanged() -> None:
    x = np.array([0.2, 0.5, 0.9])

    x_new = mma_step(x, np.zeros(3), -0.1, np.full(3, 1.0 / 3.0), MMAState(), 0.0, 1.0)

    np.testing.assert_allclose(x_new, x, atol=1e-12)


def test_move_limit_and_bounds_are_respected() -> None:
    x = np.array([0.05, 0.5, 0.95])

    grad = np.array([1.0, -1.0, -1.0])
    x_new = mma_step(x, grad, -1.0, np.full(3, 1.0 / 3.0), MMAState(), 0.0, 1.0, move=0.1)

    assert np.all(np.abs(x_new - x) <= 0.1 + 1e-12)
    assert np.all((x_new >= 0.0) & (x_new <= 1.0))
    assert x_new[0] < x[0] and x_new[1] > x[1]


def test_active_volume_limit_saturates() -> None:
    n = 8
    x = np.full(n, 0.5)
    state = MMAState()
    for _ in range(60):
        x = mma_step(x, -np.ones(n), float(x.mean()) - 0.4, np.full(n, 1.0 / n), state, 0.0, 1.0)

    assert x.mean() == pytest.approx(0.4, abs=5e-3)
    assert x.mean() <= 0.4 + 1e-6
    assert state.iteration == 60


def test_volume_far_above_the_limit_steps_by_the_move_limit() -> None:
    x = np.full(4, 0.9)

    x_new = mma_step(x, np.zeros(4), float(x.mean()) - 0.4, np.full(4, 0.25), MMAState(), 0.0, 1.0)

    np.testing.assert_allclose(x_new, 0.8, atol=1e-9)


def test_volume_above_the_limit_at_the_lower_bound_holds_still() -> None:
    x = np.full(4, 0.1)

    x_new = mma_step(x, np.ones(4), 0.05, np.full(4, 0.25), MMAState(), 0.1, 1.0)

    np.testing.assert_allclose(x_new, 0.1, atol=1e-12)


def test_mismatched_shapes_are_rejected() -> None:
    with pytest.raises(InvalidArgumentError):
        mma_step(np.ones(3), np.ones(2), 0.0, np.ones(3), MMAState(), 0.0, 1.0)


def test_mma_state_round_trips_through_json() -> None:
    state = MMAState()
    x = np.array([0.3, 0.6])
    for _ in range(3):
        x = mma_step(x, np.array([1.0, -2.0]), -0.2, np.array([0.5, 0.5]), state, 0.0, 1.0)

    restored = MMAState.from_dict(json.loads(json.dumps(state.to_dict())))

    assert restored.iteration == 3
    np.testing.assert_array_equal(restored.low, state.low)
    np.testing.assert_array_equal(restored.x_old2, state.x_old2)


def test_loop_converges_on_a_quadratic(tmp_path) -> None:
    problem = QuadraticProblem()

    result = run_optimization(problem, np.full(6, 0.5), ScheduleParams(max_iters=100), tmp_path)

    assert result.converged
    np.testing.assert_allclose(result.eta, 0.3, atol=1e-2)
    assert [row["iter"] for row in result.history] == list(range(1, result.iterations + 1))
    assert (tmp_path / "designs" / "iter_0001.npy").is_file()
    assert (tmp_path / "history.csv").is_file()
    np.testing.assert_array_equal(np.load(tmp_path / "final_design.npy"), result.eta)
    assert len(problem.schedules) == result.iterations


def test_resume_continues_exactly(tmp_path) -> None:
    schedule = ScheduleParams(max_iters=6, conv_tol=1e-12)
    straight = run_optimization(QuadraticProblem(), np.full(6, 0.5), schedule, tmp_path / "straight")

    short = ScheduleParams(max_iters=3, conv_tol=1e-12)
    run_optimization(QuadraticProblem(), np.full(6, 0.5), short, tmp_path / "split")
    resumed = run_optimization(QuadraticProblem(), np.full(6, 0.5), schedule, tmp_path / "split", resume=True)

    np.testing.assert_array_equal(resumed.eta, straight.eta)
    assert resumed.iterations == 6
    assert [row["iter"] for row in resumed.history] == [1, 2, 3, 4, 5, 6]


def test_solver_failure_keeps_a_checkpoint(tmp_path) -> None:
    with pytest.raises(SolverError):
        run_optimization(QuadraticProblem(fail_at=3), np.full(6, 0.5), ScheduleParams(max_iters=10), tmp_path)

    saved = json.loads((tmp_path / "checkpoint.json").read_text())
    assert saved["iteration"] == 2
    assert len(saved["history"]) == 2


def test_resume_needs_a_checkpoint(tmp_path) -> None:
    with pytest.raises(InvalidArgumentError):
        run_optimization(QuadraticProblem(), np.full(6, 0.5), ScheduleParams(), tmp_path, resume=True)
    with pytest.raises(InvalidArgumentError):
        run_optimization(QuadraticProblem(), np.full(5, 0.5), ScheduleParams(), tmp_path)
