"""Objective implementations for the benchmark problem families.

Quadratic assignment in its lifted form, graph matching over a vectorized
affinity matrix, projection onto the nonnegative orthogonal set, and
orthogonal nonnegative matrix factorization via alternating minimization.
Instances are immutable and objective evaluations are pure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .driver import PenaltyConfig, penalty_solve, round_to_feasible
from .penalty import Objective
from .stiefel import StiefelPoint, check_matrix, qr_orthonormalize


@dataclass(frozen=True)
class QapInstance:
    """Quadratic assignment data: n x n weight matrices A and B.

    ``best_known`` optionally carries the best published bound for gap
    reporting.
    """

    a: np.ndarray
    b: np.ndarray
    best_known: float | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"A must be square, got shape {a.shape}")
        if b.shape != a.shape:
            raise ValueError(f"B shape {b.shape} does not match A shape {a.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]


class QapLiftedObjective(Objective):
    """<A, W B W^T> with W = X o X (entrywise square).

    On binary feasible points W coincides with X, so this agrees with the
    classical assignment objective on permutation matrices while staying
    nonnegative everywhere for nonnegative data.

    gradient(X) = 2 X o (A W B^T + A^T W B), validated against finite
    differences in the test suite.
    """

    def __init__(self, inst: QapInstance):
        self.inst = inst

    def value(self, x: np.ndarray) -> float:
        w = x * x
        return float(np.sum(self.inst.a * (w @ self.inst.b @ w.T)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        a, b = self.inst.a, self.inst.b
        w = x * x
        return 2.0 * x * (a @ w @ b.T + a.T @ w @ b)


def qap_permutation_value(inst: QapInstance, perm) -> float:
    """Classical assignment objective sum_ij A_ij B_{p(i) p(j)}."""
    perm = np.asarray(perm, dtype=int)
    return float(np.sum(inst.a * inst.b[np.ix_(perm, perm)]))


def brute_force_qap(inst: QapInstance, max_n: int = 9) -> tuple[float, np.ndarray]:
    """Exhaustive minimum of the assignment objective over all permutations."""
    n = inst.n
    if n > max_n:
        raise ValueError(f"brute force limited to n <= {max_n}, got {n}")
    best_val, best_perm = np.inf, None
    for perm in itertools.permutations(range(n)):
        val = qap_permutation_value(inst, perm)
        if val < best_val:
            best_val, best_perm = val, perm
    return float(best_val), np.asarray(best_perm, dtype=int)


def permutation_matrix(perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=int)
    out = np.zeros((perm.size, perm.size))
    out[np.arange(perm.size), perm] = 1.0
    return out


@dataclass(frozen=True)
class AffinityInstance:
    """Graph-matching affinity: a symmetric nonnegative n^2 x n^2 matrix.

    The constructor symmetrizes the input; the gradient formula relies on
    symmetry, which affinity constructions guarantee up to rounding.
    """

    k: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError(f"affinity matrix must be square, got shape {k.shape}")
        n = int(round(np.sqrt(k.shape[0])))
        if n * n != k.shape[0]:
            raise ValueError(f"affinity size {k.shape[0]} is not a perfect square")
        object.__setattr__(self, "k", 0.5 * (k + k.T))
        object.__setattr__(self, "n", n)


class GraphMatchingObjective(Objective):
    """Maximize vec(X)^T K vec(X), implemented as its negation for minimizers.

    vec stacks columns. With K symmetric the gradient is -2 unvec(K vec(X)).
    """

    def __init__(self, inst: AffinityInstance):
        self.inst = inst

    def _vec(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(-1, order="F")

    def value(self, x: np.ndarray) -> float:
        v = self._vec(x)
        return -float(v @ (self.inst.k @ v))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        v = self._vec(x)
        return -2.0 * (self.inst.k @ v).reshape(x.shape, order="F")


class ProjectionObjective(Objective):
    """||X - C||_F^2 for a fixed target C; the canonical projection problem."""

    def __init__(self, target):
        self.target = check_matrix(target, "target")

    def value(self, x: np.ndarray) -> float:
        d = x - self.target
        return float(np.sum(d * d))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (x - self.target)

    def hessian_vec(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        return 2.0 * np.asarray(h, dtype=float)


class LinearObjective(Objective):
    """<G, X> for a fixed coefficient matrix G."""

    def __init__(self, coeff):
        self.coeff = check_matrix(coeff, "coeff")

    def value(self, x: np.ndarray) -> float:
        return float(np.sum(self.coeff * x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.coeff.copy()

    def hessian_vec(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        return np.zeros_like(self.coeff)


@dataclass(frozen=True)
class OnmfInstance:
    """Orthogonal NMF data: nonnegative n x p matrix and cluster count r."""

    a: np.ndarray
    r: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 2:
            raise ValueError(f"data matrix must be 2-dimensional, got {a.shape}")
        if np.any(a < 0):
            raise ValueError("data matrix must be entrywise nonnegative")
        if not 1 <= self.r <= a.shape[0]:
            raise ValueError(f"cluster count {self.r} out of range for {a.shape[0]} rows")
        object.__setattr__(self, "a", a)


class OnmfFactorObjective(Objective):
    """||A - X Y^T||_F^2 in X for a fixed nonnegative factor Y."""

    def __init__(self, a: np.ndarray, y: np.ndarray):
        self.a = np.asarray(a, dtype=float)
        self.y = np.asarray(y, dtype=float)

    def value(self, x: np.ndarray) -> float:
        d = self.a - x @ self.y.T
        return float(np.sum(d * d))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (x @ self.y.T - self.a) @ self.y


def onmf_y_update(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Nonnegative least-squares surrogate max(0, A^T X (X^T X)^{-1}).

    For orthonormal X the Gram matrix is the identity and this reduces to
    max(0, A^T X), the exact minimizer over nonnegative Y.
    """
    gram = x.T @ x
    try:
        sol = np.linalg.solve(gram, (a.T @ x).T).T
    except np.linalg.LinAlgError:
        sol = (a.T @ x) @ np.linalg.pinv(gram)
    return np.maximum(0.0, sol)


def onmf_alternate(
    inst: OnmfInstance,
    x0: StiefelPoint,
    cfg: PenaltyConfig | None = None,
    solve=None,
    *,
    max_rounds: int = 100,
    rel_tol: float = 1e-6,
) -> tuple[StiefelPoint, np.ndarray, list]:
    """Alternating minimization for orthogonal NMF.

    Each round updates Y by the nonnegative least-squares surrogate, then X by
    an outer solve of the factor objective from the current X. Stops when the
    relative change of the residual drops below ``rel_tol`` or after
    ``max_rounds``. Returns the final factors and the residual history, one
    value per round.

    ``solve`` may override the X-update; it receives (objective, x) and must
    return a SolveReport.
    """
    if cfg is None:
        cfg = PenaltyConfig(rho0=1.0 / max(np.linalg.norm(inst.a, 2), 1e-12))
    if solve is None:
        def solve(obj, x):
            return penalty_solve(obj, x, cfg)

    x = x0
    y = onmf_y_update(inst.a, x.mat)
    history: list[float] = []
    prev = np.inf
    for _ in range(max_rounds):
        obj = OnmfFactorObjective(inst.a, y)
        report = solve(obj, x)
        x = report.x_final
        y = onmf_y_update(inst.a, x.mat)
        resid = OnmfFactorObjective(inst.a, y).value(x.mat)
        history.append(resid)
        if abs(prev - resid) <= rel_tol * (1.0 + abs(resid)):
            break
        prev = resid
    return x, y, history


def cluster_labels(x: np.ndarray) -> np.ndarray:
    """1-based cluster assignment of each row by its largest entry."""
    return np.argmax(np.asarray(x), axis=1) + 1


def random_stiefel_start(n: int, r: int, seed: int) -> StiefelPoint:
    """Orthonormalized standard Gaussian draw; deterministic per seed."""
    rng = np.random.default_rng(seed)
    return StiefelPoint(qr_orthonormalize(rng.standard_normal((n, r))))


def nonneg_start(n: int, r: int, seed: int) -> np.ndarray:
    """Entrywise absolute Gaussian draw with unit columns.

    Nonnegative by construction but orthonormal only when the column supports
    happen to be disjoint (always for r = 1), so it is returned as a plain
    matrix; orthonormalize before handing it to manifold solvers.
    """
    rng = np.random.default_rng(seed)
    g = np.abs(rng.standard_normal((n, r)))
    norms = np.linalg.norm(g, axis=0)
    norms[norms == 0] = 1.0
    return g / norms


def svd_start(a: np.ndarray, r: int) -> StiefelPoint:
    """Feasible start from the dominant left singular subspace.

    Rounds the entrywise absolute value of the top-r left singular vectors
    onto the nonnegative orthogonal set.
    """
    u, _, _ = np.linalg.svd(np.asarray(a, dtype=float), full_matrices=False)
    return round_to_feasible(np.abs(u[:, :r]))


def planted_onmf_instance(
    n: int, p: int, r: int, noise: float, seed: int
) -> tuple[OnmfInstance, np.ndarray, np.ndarray, np.ndarray]:
    """Synthetic ONMF data with r planted row clusters.

    Rows are split into r contiguous balanced groups; group j follows the
    nonnegative template row j of Y* scaled by the row's entry in X*, plus
    additive uniform noise of amplitude ``noise``. Templates have disjoint
    dominant blocks so clusters are separated at low noise. Returns the
    instance, the 1-based truth labels, and the planted factors.
    """
    if not 1 <= r <= min(n, p):
        raise ValueError(f"need 1 <= r <= min(n, p), got r={r}")
    rng = np.random.default_rng(seed)
    labels = 1 + (np.arange(n) % r)
    x_true = np.zeros((n, r))
    for j in range(r):
        rows = np.flatnonzero(labels == j + 1)
        weights = 0.5 + rng.random(rows.size)
        x_true[rows, j] = weights / np.linalg.norm(weights)
    y_true = 0.1 * rng.random((p, r))
    block = max(1, p // r)
    for j in range(r):
        lo = j * block
        hi = p if j == r - 1 else (j + 1) * block
        y_true[lo:hi, j] += 1.0 + rng.random(hi - lo)
    a = x_true @ y_true.T + noise * rng.random((n, p))
    return OnmfInstance(a=a, r=r), labels, x_true, y_true


def noisy_projection_target(
    n: int, r: int, xi: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic projection target: a feasible point plus Gaussian noise.

    Returns (C, X*) with C = X* + xi * N for a random feasible X* and a
    standard Gaussian N. A deliberately simple, documented generator; at
    moderate xi the feasible X* remains the unique projection.
    """
    rng = np.random.default_rng(seed)
    assign = rng.integers(0, r, size=n)
    # guarantee every column at least one row
    assign[:r] = np.arange(r)
    vals = 0.5 + rng.random(n)
    x_true = np.zeros((n, r))
    x_true[np.arange(n), assign] = vals
    x_true /= np.linalg.norm(x_true, axis=0)
    c = x_true + xi * rng.standard_normal((n, r))
    return c, x_true
