"""Nonnegativity penalties and penalized composite objectives.

The infeasibility measure is the elementwise l1 distance to the nonnegative
cone. Its proximal map and Moreau envelope have entrywise closed forms, which
gives a smooth penalty; the squared Frobenius distance to the cone is the
alternative quadratic penalty. ``gamma == 0`` is the sentinel that selects the
quadratic penalty throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def nonneg_violation(x) -> float:
    """Sum of negative parts: the elementwise l1 distance to the nonnegative cone."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(np.maximum(0.0, -x)))


def _check_gamma(gamma: float) -> None:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")


def prox_nonneg_violation(x, gamma: float) -> np.ndarray:
    """Proximal map of the l1 violation: entrywise min(x + gamma, max(x, 0)).

    Entries in [-gamma, 0] snap to zero, entries below -gamma shift up by
    gamma, nonnegative entries are fixed. 1-Lipschitz in Frobenius norm.
    """
    _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    return np.minimum(x + gamma, np.maximum(x, 0.0))


def nonneg_violation_envelope(x, gamma: float) -> float:
    """Moreau envelope of the l1 violation.

    Entries in [-gamma, 0] contribute x^2 / (2 gamma), entries below -gamma
    contribute -x - gamma/2, nonnegative entries contribute nothing. The
    envelope is C^1, minorizes the violation, and shares its zero set.
    """
    _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    quad = x * x / (2.0 * gamma)
    lin = -x - 0.5 * gamma
    per_entry = np.where(x < -gamma, lin, np.where(x < 0.0, quad, 0.0))
    return float(np.sum(per_entry))


def nonneg_violation_envelope_grad(x, gamma: float) -> np.ndarray:
    """Gradient of the envelope: (x - prox(x)) / gamma, entrywise in [-1, 0]."""
    _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    return (x - prox_nonneg_violation(x, gamma)) / gamma


def quad_penalty(x) -> float:
    """Squared Frobenius distance to the nonnegative cone."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(np.minimum(x, 0.0) ** 2))


def quad_penalty_grad(x) -> np.ndarray:
    """Gradient of the quadratic penalty: entrywise 2 min(x, 0)."""
    x = np.asarray(x, dtype=float)
    return 2.0 * np.minimum(x, 0.0)


class Objective:
    """A smooth objective over n x r matrices: value plus Euclidean gradient.

    Lipschitz constants are never required; the solvers use line searches
    instead. ``hessian_vec`` defaults to a forward difference of the gradient
    and is consumed only by diagnostics; subclasses override it where an exact
    form is cheap.
    """

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_and_gradient(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return self.value(x), self.gradient(x)

    def hessian_vec(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        step = 1e-5 * (1.0 + float(np.linalg.norm(x)))
        return (self.gradient(x + step * h) - self.gradient(x)) / step


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty weight and smoothing width.

    ``gamma > 0`` selects the Moreau-envelope penalty, ``gamma == 0`` the
    quadratic penalty. ``rho == 0`` is allowed and reduces the composite to
    the bare objective.
    """

    rho: float
    gamma: float = 0.05

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")


def penalty_terms(x, gamma: float) -> tuple[float, np.ndarray]:
    """Value and gradient of the bare penalty term selected by gamma."""
    if gamma > 0:
        return (
            nonneg_violation_envelope(x, gamma),
            nonneg_violation_envelope_grad(x, gamma),
        )
    return quad_penalty(x), quad_penalty_grad(x)


def penalty_value_and_grad(
    f: Objective, x: np.ndarray, params: PenaltyParams
) -> tuple[float, np.ndarray]:
    """Value and Euclidean gradient of f + rho * penalty at x."""
    pv, pg = penalty_terms(x, params.gamma)
    fv, fg = f.value_and_gradient(x)
    return fv + params.rho * pv, fg + params.rho * pg


class PenaltyObjective(Objective):
    """The composite f + rho * penalty as a plain smooth objective."""

    def __init__(self, f: Objective, params: PenaltyParams):
        self.f = f
        self.params = params

    def value(self, x: np.ndarray) -> float:
        p = self.params
        if p.gamma > 0:
            pv = nonneg_violation_envelope(x, p.gamma)
        else:
            pv = quad_penalty(x)
        return self.f.value(x) + p.rho * pv

    def gradient(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        if p.gamma > 0:
            pg = nonneg_violation_envelope_grad(x, p.gamma)
        else:
            pg = quad_penalty_grad(x)
        return self.f.gradient(x) + p.rho * pg
