"""Probability-vector primitives on the (K-1)-simplex."""

import numpy as np

from .errors import DimensionError, NotOnSimplex

SIMPLEX_TOL = 1e-9
KL_EPS = 1e-12


class ProbVector:
    """Immutable probability vector with at least two entries.

    Construct through :func:`validate_simplex` unless the values are already
    known to be valid; the constructor itself only freezes the array.
    """

    __slots__ = ("_values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64)
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self):
        return self._values

    @property
    def K(self):
        return self._values.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._values
        return self._values.astype(dtype)

    def __len__(self):
        return self.K

    def __getitem__(self, i):
        return self._values[i]

    def __iter__(self):
        return iter(self._values)

    def __eq__(self, other):
        if not isinstance(other, ProbVector):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self):
        return f"ProbVector({', '.join(repr(float(v)) for v in self._values)})"

    @classmethod
    def one_hot(cls, i, K):
        """Standard basis vector e_i (0-indexed)."""
        e = np.zeros(K)
        e[i] = 1.0
        return cls(e)

    @classmethod
    def uniform(cls, K):
        return cls(np.full(K, 1.0 / K))


def validate_simplex(raw, tol=SIMPLEX_TOL):
    """Check that ``raw`` lies on the simplex and return it as a ProbVector.

    Entries in ``[-tol, 0)`` are clamped to zero and the vector is
    renormalized; a vector that is already valid is returned unchanged.
    """
    arr = np.array(raw, dtype=np.float64).ravel()
    if arr.shape[0] < 2:
        raise DimensionError(f"need K >= 2 entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise NotOnSimplex("non-finite entry")
    if np.any(arr < -tol):
        raise NotOnSimplex(f"entry {arr.min()!r} below -{tol}")
    total = arr.sum()
    if abs(total - 1.0) > tol:
        raise NotOnSimplex(f"entries sum to {total!r}")
    if np.any(arr < 0):
        arr = np.clip(arr, 0.0, None)
        arr /= arr.sum()
    return ProbVector(arr)


def _pair(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return p, q


def tv_distance(p, q):
    """Total variation distance: half the l1 norm of ``p - q``."""
    p, q = _pair(p, q)
    return 0.5 * float(np.abs(p - q).sum())


def kl_divergence(p, q, eps=KL_EPS):
    """KL(p || q) with ``q`` floored at ``eps`` and 0 log 0 = 0."""
    p, q = _pair(p, q)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(np.maximum(q[mask], eps)))))


def argmax_class(p):
    """1-indexed class of the largest entry, lowest index on ties."""
    return int(np.argmax(np.asarray(p))) + 1
