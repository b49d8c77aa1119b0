"""Nonmonotone line-search proximal gradient iteration on the Stiefel manifold.

Each step retracts a multiple of the negative projected gradient back onto the
manifold. The trial step size starts from a Barzilai-Borwein estimate and is
shrunk geometrically until the new value drops below the maximum objective
over a sliding window of past iterates minus a sufficient-decrease margin.
With window memory zero the method is strictly monotone.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .penalty import Objective
from .stiefel import StiefelPoint, proj_tangent, qr_orthonormalize

_BB_DEGENERACY = 1e-16


class LineSearchError(RuntimeError):
    """Backtracking exhausted its budget without an acceptable step.

    The acceptance test is guaranteed to pass once the step is small enough,
    so hitting the budget usually means the supplied gradient is wrong. When
    raised from ``pgm_solve`` the partial trace is attached as ``trace``.
    """

    def __init__(self, msg: str, trace: "PgmTrace | None" = None):
        super().__init__(msg)
        self.trace = trace


@dataclass
class PgmConfig:
    """Tunables for the line-search iteration.

    Attributes:
        eta: backtracking shrink factor in (0, 1).
        alpha: sufficient-decrease weight.
        memory: the acceptance window covers the last memory + 1 values;
            0 gives a monotone method.
        t_min, t_max: clamp range for the Barzilai-Borwein step.
        grad_tol: stop once the projected-gradient norm falls below this.
        max_iters: iteration cap per solve.
        max_backtracks: shrink budget per step; exceeding it raises
            LineSearchError.
    """

    eta: float = 0.1
    alpha: float = 1e-4
    memory: int = 5
    t_min: float = 1e-12
    t_max: float = 1e12
    grad_tol: float = 1e-6
    max_iters: int = 5000
    max_backtracks: int = 50

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.memory < 0:
            raise ValueError(f"memory must be nonnegative, got {self.memory}")
        if not 0.0 < self.t_min <= self.t_max:
            raise ValueError(f"need 0 < t_min <= t_max, got ({self.t_min}, {self.t_max})")
        if self.grad_tol <= 0:
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.max_iters < 1 or self.max_backtracks < 1:
            raise ValueError("max_iters and max_backtracks must be at least 1")


@dataclass
class PgmTrace:
    """Per-iteration record of a solve.

    ``values`` and ``grad_norms`` cover every iterate including the start;
    the remaining lists have one entry per accepted step.
    """

    memory: int
    grad_tol: float = float("nan")
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    v_norms: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.step_sizes)

    def window_max_values(self) -> list:
        """Running maximum of the trailing memory + 1 objective values.

        This sequence is nonincreasing for any run produced by the iteration.
        """
        out = []
        for k in range(len(self.values)):
            lo = max(0, k - self.memory)
            out.append(max(self.values[lo : k + 1]))
        return out

    def nonmonotone_gaps(self) -> list:
        """sqrt(window_max[k+1] - value[k+1]) per step, recorded for inspection.

        Summability of this series is a hypothesis about generated sequences
        in whole-sequence convergence analyses; it is reported, not enforced.
        """
        wmax = self.window_max_values()
        return [
            float(np.sqrt(max(0.0, wmax[k + 1] - self.values[k + 1])))
            for k in range(len(self.values) - 1)
        ]


def bb_stepsize(dx, dy, t_min: float, t_max: float, fallback: float) -> float:
    """Barzilai-Borwein step from iterate and gradient differences.

    Returns max(min(||dx||^2/|<dx,dy>|, |<dx,dy>|/||dy||^2, t_max), t_min).
    When the curvature inner product is negligible relative to the norms, or
    either difference vanishes, the (clamped) fallback is returned instead.
    """
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    if dx.shape != dy.shape:
        raise ValueError(f"shape mismatch: {dx.shape} vs {dy.shape}")
    nx2 = float(np.sum(dx * dx))
    ny2 = float(np.sum(dy * dy))
    ip = abs(float(np.sum(dx * dy)))
    if nx2 == 0.0 or ny2 == 0.0 or ip <= _BB_DEGENERACY * np.sqrt(nx2 * ny2):
        t = fallback
    else:
        t = min(nx2 / ip, ip / ny2, t_max)
    return float(min(max(t, t_min), t_max))


class PgmStep(NamedTuple):
    point: StiefelPoint
    step: float
    direction: np.ndarray
    value: float
    backtracks: int
    stalled: bool = False


def pgm_step(
    x: StiefelPoint,
    grad_fn: Callable[[np.ndarray], np.ndarray],
    value_fn: Callable[[np.ndarray], float],
    t_init: float,
    window_max: float,
    cfg: PgmConfig,
    _rgrad: np.ndarray | None = None,
) -> PgmStep:
    """One retraction step with nonmonotone backtracking.

    Sets V = -t * (projected gradient of the objective at x) and retracts,
    multiplying t by eta and recomputing V until

        value(X+) <= window_max - alpha / (2 t) * ||V||^2

    or the backtrack budget is exhausted. A zero gradient returns x
    unchanged with an immediate accept.

    When the demanded decrease falls below the float resolution of the window
    maximum and the trial value sits within rounding of it, no representable
    progress exists at this scale: the step returns the current point with
    ``stalled`` set instead of failing, so outer loops can recover (for
    example by growing the penalty weight). A genuine persistent increase at
    representable scales still raises LineSearchError.
    """
    if not cfg.t_min <= t_init <= cfg.t_max:
        raise ValueError(f"t_init {t_init} outside [{cfg.t_min}, {cfg.t_max}]")
    g = _rgrad if _rgrad is not None else proj_tangent(x, grad_fn(x.mat)).dir
    if not np.any(g):
        return PgmStep(x, t_init, np.zeros_like(g), value_fn(x.mat), 0)
    resolution = np.finfo(float).eps * (1.0 + abs(window_max))
    t = float(t_init)
    for bt in range(cfg.max_backtracks + 1):
        v = -t * g
        candidate = StiefelPoint(qr_orthonormalize(x.mat + v))
        val = float(value_fn(candidate.mat))
        demand = (cfg.alpha / (2.0 * t)) * float(np.sum(v * v))
        if val <= window_max - demand:
            return PgmStep(candidate, t, v, val, bt)
        if demand <= resolution and val <= window_max + 4.0 * resolution:
            return PgmStep(x, t, np.zeros_like(g), float(value_fn(x.mat)), bt, True)
        t *= cfg.eta
    raise LineSearchError(
        f"no acceptable step after {cfg.max_backtracks} backtracks (last t={t:.3e})"
    )


def pgm_solve(
    obj: Objective, x0: StiefelPoint, cfg: PgmConfig
) -> tuple[StiefelPoint, PgmTrace]:
    """Run the iteration from x0 until stationarity or the iteration cap.

    Returns the first iterate whose projected-gradient norm is at most
    ``cfg.grad_tol`` (``trace.converged`` is then True), or the lowest-value
    iterate of the trailing window once ``max_iters`` is exhausted. The final
    objective value never exceeds the initial one.

    The first step uses t = 1 / ||grad|| clamped to [t_min, t_max]; later
    steps use the Barzilai-Borwein estimate with the previously accepted step
    as fallback.
    """
    x = x0
    val = float(obj.value(x.mat))
    rgrad = proj_tangent(x, obj.gradient(x.mat)).dir
    gnorm = float(np.linalg.norm(rgrad))

    trace = PgmTrace(memory=cfg.memory, grad_tol=cfg.grad_tol)
    trace.values.append(val)
    trace.grad_norms.append(gnorm)

    window: deque = deque([(val, x)], maxlen=cfg.memory + 1)
    prev_t = 1.0
    prev_mat: np.ndarray | None = None
    prev_rgrad: np.ndarray | None = None

    for k in range(cfg.max_iters):
        if gnorm <= cfg.grad_tol:
            trace.converged = True
            return x, trace
        if k == 0:
            t_init = float(min(max(1.0 / gnorm, cfg.t_min), cfg.t_max))
        else:
            t_init = bb_stepsize(
                x.mat - prev_mat, rgrad - prev_rgrad, cfg.t_min, cfg.t_max, prev_t
            )
        window_max = max(v for v, _ in window)
        try:
            step = pgm_step(
                x, obj.gradient, obj.value, t_init, window_max, cfg, _rgrad=rgrad
            )
        except LineSearchError as err:
            err.trace = trace
            raise
        prev_mat, prev_rgrad, prev_t = x.mat, rgrad, step.step
        x, val = step.point, step.value
        rgrad = proj_tangent(x, obj.gradient(x.mat)).dir
        gnorm = float(np.linalg.norm(rgrad))
        trace.values.append(val)
        trace.grad_norms.append(gnorm)
        trace.step_sizes.append(step.step)
        trace.v_norms.append(float(np.linalg.norm(step.direction)))
        trace.backtracks.append(step.backtracks)
        window.append((val, x))

    if gnorm <= cfg.grad_tol:
        trace.converged = True
        return x, trace
    _, best_x = min(window, key=lambda pair: pair[0])
    return best_x, trace
