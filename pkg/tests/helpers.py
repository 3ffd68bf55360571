import numpy as np

GRAD_RTOL = 1e-4
GRAD_ATOL = 1e-8


def grad_mismatch(analytic, numeric):
    """Entries failing the relative check (small entries compared absolutely)."""
    a, f = np.asarray(analytic), np.asarray(numeric)
    scale = np.maximum(np.abs(a), np.abs(f))
    small = scale < GRAD_ATOL
    rel = np.abs(a - f) / np.where(small, 1.0, scale)
    bad = np.where(small, np.abs(a - f) >= GRAD_ATOL, rel >= GRAD_RTOL)
    return int(bad.sum()), float(np.max(np.where(small, 0.0, rel), initial=0.0))


def assert_grad_close(analytic, numeric):
    a = analytic.flat() if hasattr(analytic, "flat") and callable(analytic.flat) else analytic
    f = numeric.flat() if hasattr(numeric, "flat") and callable(numeric.flat) else numeric
    n_bad, worst = grad_mismatch(a, f)
    assert n_bad == 0, f"{n_bad} gradient entries disagree, worst relative error {worst:.3g}"
