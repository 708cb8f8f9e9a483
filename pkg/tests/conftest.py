import numpy as np
import pytest


def numeric_grad(f, x, h=1e-3):
    """Central finite differences of scalar ``f()`` w.r.t. array ``x`` (mutated in place, restored)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


def rel_error(analytic, numeric, floor=1e-7):
    """Largest elementwise relative error; near-zero pairs fall back to absolute error."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale)) if a.size else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
