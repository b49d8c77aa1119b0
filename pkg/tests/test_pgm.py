"""Inner solver: step-size rule, line search, and solve-level guarantees."""

import numpy as np
import numpy.testing as npt
import pytest

from orthopt.penalty import Objective
from orthopt.pgm import (
    LineSearchError,
    PgmConfig,
    bb_stepsize,
    pgm_solve,
    pgm_step,
)
from orthopt.problems import ProjectionObjective, random_stiefel_start
from orthopt.stiefel import StiefelPoint, orthogonality_residual


class TestBbStepsize:
    def test_equal_differences_give_one(self):
        d = np.array([1.0, 2.0, -1.0])
        assert bb_stepsize(d, d, 1e-12, 1e12, fallback=7.0) == 1.0

    def test_hand_example(self):
        assert bb_stepsize(np.array([1.0, 0.0]), np.array([2.0, 0.0]), 1e-12, 1e12, 1.0) == 0.5

    def test_orthogonal_differences_fall_back(self):
        t = bb_stepsize(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 1e-12, 1e12, fallback=1.0)
        assert t == 1.0

    def test_zero_differences_fall_back(self):
        assert bb_stepsize(np.zeros(3), np.ones(3), 1e-12, 1e12, fallback=0.25) == 0.25
        assert bb_stepsize(np.ones(3), np.zeros(3), 1e-12, 1e12, fallback=0.25) == 0.25

    def test_clamping(self):
        d = np.array([1.0])
        assert bb_stepsize(d, 100.0 * d, 0.1, 10.0, 1.0) == 0.1
        assert bb_stepsize(d, 0.0001 * d, 0.1, 10.0, 1.0) == 10.0
        # fallback is clamped too
        assert bb_stepsize(np.zeros(1), np.zeros(1), 0.1, 10.0, 99.0) == 10.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bb_stepsize(np.zeros(2), np.zeros(3), 1e-12, 1e12, 1.0)


class TestPgmStep:
    def test_zero_gradient_immediate_accept(self):
        x = random_stiefel_start(4, 2, 0)
        obj = ProjectionObjective(x.mat)
        step = pgm_step(x, obj.gradient, obj.value, 1.0, obj.value(x.mat), PgmConfig())
        assert step.point is x
        assert step.backtracks == 0
        npt.assert_array_equal(step.direction, np.zeros((4, 2)))

    def test_accepted_step_satisfies_decrease(self):
        x = random_stiefel_start(5, 2, 1)
        obj = ProjectionObjective(np.eye(5)[:, :2])
        cfg = PgmConfig()
        wmax = obj.value(x.mat)
        step = pgm_step(x, obj.gradient, obj.value, 1.0, wmax, cfg)
        bound = wmax - cfg.alpha / (2.0 * step.step) * np.sum(step.direction**2)
        assert step.value <= bound

    def test_t_init_out_of_range(self):
        x = random_stiefel_start(4, 2, 2)
        obj = ProjectionObjective(x.mat)
        with pytest.raises(ValueError):
            pgm_step(x, obj.gradient, obj.value, 1e13, 0.0, PgmConfig())

    def test_wrong_gradient_exhausts_backtracks(self):
        x = random_stiefel_start(5, 3, 3)

        class Ascent(Objective):
            def __init__(self):
                self.inner = ProjectionObjective(np.eye(5)[:, :3])

            def value(self, z):
                return self.inner.value(z)

            def gradient(self, z):
                return -self.inner.gradient(z)  # wrong sign: ascent direction

        obj = Ascent()
        # small backtrack budget: the step cannot shrink to roundoff level
        with pytest.raises(LineSearchError) as exc:
            pgm_solve(obj, x, PgmConfig(max_iters=5, max_backtracks=8))
        assert exc.value.trace is not None


class RecordingObjective(Objective):
    """Wraps an objective and records every gradient-evaluation point."""

    def __init__(self, inner):
        self.inner = inner
        self.grad_points = []

    def value(self, x):
        return self.inner.value(x)

    def gradient(self, x):
        self.grad_points.append(np.array(x))
        return self.inner.gradient(x)


class TestPgmSolve:
    def test_stationary_start_returns_immediately(self):
        c = np.eye(4)[:, :2]
        obj = ProjectionObjective(c)
        x0 = StiefelPoint(c)
        x, trace = pgm_solve(obj, x0, PgmConfig(grad_tol=1e-8))
        assert x is x0
        assert trace.iterations == 0
        assert trace.converged

    def test_projection_converges(self):
        obj = ProjectionObjective(np.eye(4)[:, :2])
        x0 = random_stiefel_start(4, 2, 4)
        x, trace = pgm_solve(obj, x0, PgmConfig(grad_tol=1e-8))
        assert trace.converged
        assert trace.iterations < 200
        assert trace.grad_norms[-1] <= 1e-8

    def test_objective_decreases_over_accepted_steps(self):
        obj = ProjectionObjective(np.eye(6)[:, :3])
        x0 = random_stiefel_start(6, 3, 5)
        _, trace = pgm_solve(obj, x0, PgmConfig(grad_tol=1e-8, memory=0))
        values = np.asarray(trace.values)
        assert np.all(np.diff(values) < 0)

    def test_monotone_window_with_zero_memory(self):
        obj = ProjectionObjective(np.eye(5)[:, :2])
        x0 = random_stiefel_start(5, 2, 6)
        cfg = PgmConfig(grad_tol=1e-8, memory=0)
        _, trace = pgm_solve(obj, x0, cfg)
        for k in range(trace.iterations):
            bound = trace.values[k] - cfg.alpha / (2.0 * trace.step_sizes[k]) * trace.v_norms[k] ** 2
            assert trace.values[k + 1] <= bound + 1e-15

    def test_window_max_nonincreasing(self):
        obj = ProjectionObjective(np.eye(6)[:, :3])
        x0 = random_stiefel_start(6, 3, 7)
        _, trace = pgm_solve(obj, x0, PgmConfig(grad_tol=1e-8, memory=5))
        wmax = trace.window_max_values()
        assert all(b <= a + 1e-15 for a, b in zip(wmax, wmax[1:]))

    def test_no_value_exceeds_start(self):
        obj = ProjectionObjective(np.eye(6)[:, :3])
        x0 = random_stiefel_start(6, 3, 8)
        _, trace = pgm_solve(obj, x0, PgmConfig(grad_tol=1e-8))
        assert max(trace.values) <= trace.values[0] + 1e-15

    def test_first_step_within_bounds(self):
        cfg = PgmConfig(grad_tol=1e-8)
        obj = ProjectionObjective(np.eye(5)[:, :2])
        _, trace = pgm_solve(obj, random_stiefel_start(5, 2, 9), cfg)
        assert cfg.t_min <= trace.step_sizes[0] <= cfg.t_max

    def test_iterates_stay_orthonormal(self):
        obj = RecordingObjective(ProjectionObjective(np.eye(6)[:, :3]))
        pgm_solve(obj, random_stiefel_start(6, 3, 10), PgmConfig(grad_tol=1e-8))
        for mat in obj.grad_points:
            assert orthogonality_residual(mat) <= 1e-10

    def test_final_direction_small_at_stationarity(self):
        cfg = PgmConfig(grad_tol=1e-8)
        obj = ProjectionObjective(np.eye(4)[:, :2])
        x, trace = pgm_solve(obj, random_stiefel_start(4, 2, 11), cfg)
        assert trace.converged
        # the direction the next step would take vanishes with the gradient
        assert trace.step_sizes[-1] * trace.grad_norms[-1] <= 1e-6

    def test_exhaustion_returns_best_window_point(self):
        obj = ProjectionObjective(np.eye(6)[:, :3])
        x0 = random_stiefel_start(6, 3, 12)
        cfg = PgmConfig(grad_tol=1e-14, max_iters=10)
        x, trace = pgm_solve(obj, x0, cfg)
        assert not trace.converged
        assert obj.value(x.mat) <= min(trace.values[-(cfg.memory + 1):]) + 1e-15

    def test_nonmonotone_gaps_recorded(self):
        obj = ProjectionObjective(np.eye(6)[:, :3])
        _, trace = pgm_solve(obj, random_stiefel_start(6, 3, 13), PgmConfig(grad_tol=1e-8))
        gaps = trace.nonmonotone_gaps()
        assert len(gaps) == trace.iterations
        assert all(g >= 0.0 for g in gaps)


class TestPgmConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            PgmConfig(eta=1.0)
        with pytest.raises(ValueError):
            PgmConfig(t_min=1.0, t_max=0.5)
        with pytest.raises(ValueError):
            PgmConfig(memory=-1)
        with pytest.raises(ValueError):
            PgmConfig(grad_tol=0.0)
