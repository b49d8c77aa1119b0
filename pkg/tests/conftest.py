import numpy as np
import pytest


def central_difference_gradient(value_fn, x, h=1e-6):
    """Coordinate-wise central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (value_fn(xp) - value_fn(xm)) / (2.0 * h)
    return grad


@pytest.fixture
def fd_grad():
    return central_difference_gradient


def relative_gradient_error(analytic, numeric):
    scale = max(np.linalg.norm(analytic), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


@pytest.fixture
def fd_check(fd_grad):
    """Assert an objective's gradient against central differences."""

    def check(obj, x, tol=1e-5, h=1e-6):
        numeric = fd_grad(obj.value, x, h=h)
        analytic = obj.gradient(np.asarray(x, dtype=float))
        err = relative_gradient_error(analytic, numeric)
        assert err <= tol, f"gradient mismatch: relative error {err:.3e}"
        return err

    return check
