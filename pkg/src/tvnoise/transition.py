"""Transition-matrix algebra, noise generators and the Dirichlet posterior.

Row ``i`` of a transition matrix holds p(noisy = j | clean = i); all class
indices in this module are 0-based.
"""

import json

import numpy as np

from ._rng import make_rng
from .errors import (
    DegeneratePosterior,
    DimensionError,
    InvalidRate,
    NoStochasticSolution,
    NotEquivalent,
    RankError,
)
from .simplex import SIMPLEX_TOL, ProbVector, tv_distance, validate_simplex

RANK_TOL = 1e-10
SOLUTION_TOL = 1e-8
EQUIV_TOL = 1e-8
CONTRACTION_SLACK = 1e-12
NOISE_KINDS = ("clean", "symmetric", "pair", "pair2", "tridiagonal", "random")


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def is_full_rank(m, tol=RANK_TOL):
    # smallest singular value rather than |det|: det underflows for large K
    return bool(np.linalg.svd(m, compute_uv=False)[-1] > tol)


class TransitionMatrix:
    """Full-rank row-stochastic K x K matrix, immutable."""

    __slots__ = ("_m",)

    def __init__(self, rows, tol=SIMPLEX_TOL, check_rank=True):
        m = np.array(rows, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        m = np.vstack([validate_simplex(r, tol).values for r in m])
        if check_rank and not is_full_rank(m):
            raise RankError("transition matrix is numerically singular")
        self._m = _frozen(m)

    @classmethod
    def _trusted(cls, m):
        obj = cls.__new__(cls)
        obj._m = _frozen(m)
        return obj

    @classmethod
    def identity(cls, K):
        return cls._trusted(np.eye(K))

    @property
    def matrix(self):
        return self._m

    @property
    def K(self):
        return self._m.shape[0]

    @property
    def T(self):
        """Transpose as a raw array (not necessarily row-stochastic)."""
        return self._m.T

    def row(self, i):
        return ProbVector(self._m[i])

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._m
        return self._m.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return np.array_equal(self._m, other._m)

    def __hash__(self):
        return hash(self._m.tobytes())

    def __repr__(self):
        return f"TransitionMatrix({self._m.tolist()!r})"

    def to_dict(self):
        return {"K": self.K, "rows": self._m.tolist()}

    @classmethod
    def from_dict(cls, d):
        rows = d["rows"]
        if int(d["K"]) != len(rows):
            raise DimensionError(f"K={d['K']} but {len(rows)} rows")
        return cls(rows)

    def to_json(self, **extra):
        return json.dumps({**self.to_dict(), **extra})

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _as_matrix(T):
    return T.matrix if isinstance(T, TransitionMatrix) else np.asarray(T, dtype=np.float64)


def _same_k(*mats):
    ks = {m.shape for m in mats}
    if len(ks) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(ks)}")


# ---------------------------------------------------------------------------
# noise generators


def _symmetric(K, rate):
    m = np.full((K, K), rate / (K - 1))
    np.fill_diagonal(m, 1.0 - rate)
    return m


def _pair(K, rate):
    m = np.eye(K) * (1.0 - rate)
    idx = np.arange(K)
    m[idx, (idx + 1) % K] += rate
    return m


def _check_rate(rate, name="rate"):
    if rate is None:
        raise InvalidRate(f"{name} is required")
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"{name}={rate!r} outside [0, 1)")


def _diagonally_dominant(m):
    off = m - np.diag(np.diag(m))
    return bool(np.all(np.diag(m) > off.max(axis=1)))


def _random_noise(K, concentration, rate, seed, max_attempts=100):
    if concentration is None or concentration <= 0:
        raise InvalidRate(f"concentration={concentration!r} must be positive")
    rng = make_rng(seed)
    for _ in range(max_attempts):
        d = rng.gamma(concentration, size=(K, K))
        sums = d.sum(axis=1, keepdims=True)
        if np.any(sums == 0):
            continue
        d /= sums
        mean_diag = np.trace(d) / K
        if mean_diag >= 1.0:
            continue
        lam = (1.0 - rate - mean_diag) / (1.0 - mean_diag)
        if not 0.0 <= lam <= 1.0:
            raise InvalidRate(
                f"rate={rate!r} not reachable: sampled mean diagonal {mean_diag:.4f} "
                "already exceeds 1 - rate"
            )
        m = lam * np.eye(K) + (1.0 - lam) * d
        if _diagonally_dominant(m) and is_full_rank(m):
            return m
    raise InvalidRate(
        f"no diagonally dominant random matrix after {max_attempts} draws "
        f"(concentration={concentration}, rate={rate})"
    )


def make_noise(kind, K, rate=None, rate2=None, concentration=None, seed=0):
    """Build one of the six synthetic noise transition matrices.

    ``pair`` flips class i to class (i + 1) mod K. ``pair2`` is the product
    pair(rate) @ pair(rate2), ``tridiagonal`` is pair(rate) @ pair(rate).T,
    and ``random`` mixes Dirichlet(concentration) rows with the identity so
    that the mean diagonal equals ``1 - rate`` (redrawn while the result is
    not diagonally dominant).
    """
    if K < 2:
        raise DimensionError(f"K must be >= 2, got {K}")
    if kind == "clean":
        m = np.eye(K)
    elif kind == "symmetric":
        _check_rate(rate)
        m = _symmetric(K, rate)
    elif kind == "pair":
        _check_rate(rate)
        m = _pair(K, rate)
    elif kind == "pair2":
        _check_rate(rate)
        _check_rate(rate2, "rate2")
        m = _pair(K, rate) @ _pair(K, rate2)
    elif kind == "tridiagonal":
        _check_rate(rate)
        p = _pair(K, rate)
        m = p @ p.T
    elif kind == "random":
        _check_rate(rate)
        m = _random_noise(K, concentration, rate, seed)
    else:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
    if not _diagonally_dominant(m):
        raise InvalidRate(f"{kind} noise with rate={rate!r} is not diagonally dominant")
    if not is_full_rank(m):
        raise InvalidRate(f"{kind} noise with rate={rate!r} is singular")
    return TransitionMatrix._trusted(m)


# ---------------------------------------------------------------------------
# algebra


def apply(T, p):
    """Push a clean posterior through the noise: T^T p."""
    m = _as_matrix(T)
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (m.shape[0],):
        raise DimensionError(f"vector of length {p.shape} vs K={m.shape[0]}")
    return validate_simplex(m.T @ p)


def compose(A, B):
    """Matrix product A B: corruption by A followed by B."""
    a, b = _as_matrix(A), _as_matrix(B)
    _same_k(a, b)
    prod = a @ b
    if not is_full_rank(prod):
        raise RankError("product is numerically singular")
    return TransitionMatrix(prod)


def transpose(T):
    """Transpose, valid as a transition matrix only when T is doubly stochastic."""
    return TransitionMatrix(_as_matrix(T).T)


def equivalent(pair1, pair2, tol=EQUIV_TOL):
    (u1, v1), (u2, v2) = pair1, pair2
    w1 = _as_matrix(u1) @ _as_matrix(v1)
    w2 = _as_matrix(u2) @ _as_matrix(v2)
    _same_k(w1, w2)
    return bool(np.max(np.abs(w1 - w2)) <= tol)


def decompose(W, V, tol=SOLUTION_TOL):
    """Find a row-stochastic U with U V = W.

    Row i of U solves V^T q_i = W_i. Raises NoStochasticSolution when some
    q_i leaves the simplex by more than ``tol``.
    """
    w, v = _as_matrix(W), _as_matrix(V)
    _same_k(w, v)
    try:
        ut = np.linalg.solve(v.T, w.T)
    except np.linalg.LinAlgError as exc:
        raise RankError("V is singular") from exc
    u = ut.T
    if np.any(u < -tol) or np.any(np.abs(u.sum(axis=1) - 1.0) > tol):
        bad = int(np.argmin(u.min(axis=1)))
        raise NoStochasticSolution(
            f"row {bad} of U has entry {u[bad].min()!r}; W is not U V for stochastic U"
        )
    u = np.clip(u, 0.0, None)
    u /= u.sum(axis=1, keepdims=True)
    if np.max(np.abs(u @ v - w)) > tol:
        raise NoStochasticSolution("reconstruction U V differs from W")
    return TransitionMatrix(u, tol=tol)


def hull_membership(T, p, tol=SIMPLEX_TOL):
    """Test whether p lies in the convex hull of T's rows.

    Returns ``(is_member, preimage)`` where ``preimage`` is the barycentric
    coordinate vector q with T^T q = p, or None if p is outside the hull.
    """
    m = _as_matrix(T)
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (m.shape[0],):
        raise DimensionError(f"vector of length {p.shape} vs K={m.shape[0]}")
    q = np.linalg.solve(m.T, p)
    if np.any(q < -tol):
        return False, None
    q = np.clip(q, 0.0, None)
    return True, ProbVector(q / q.sum())


def average_tv(T, That):
    """Mean row-wise total variation distance between two transition matrices."""
    a, b = _as_matrix(T), _as_matrix(That)
    _same_k(a, b)
    return float(0.5 * np.abs(a - b).sum() / a.shape[0])


def check_contraction(U, p, q):
    """Return ``(lhs, rhs, holds)`` for d_TV(U^T p, U^T q) <= d_TV(p, q)."""
    u = _as_matrix(U)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != (u.shape[0],) or q.shape != p.shape:
        raise DimensionError("vector and matrix dimensions differ")
    lhs = tv_distance(u.T @ p, u.T @ q)
    rhs = tv_distance(p, q)
    return lhs, rhs, lhs <= rhs + CONTRACTION_SLACK


def compare_partial_order(pair1, pair2, samples=1000, seed=0):
    """Sampled comparison of two equivalent decompositions.

    Returns ``"precedes"`` if U1 contracted no less than U2 on every sampled
    (p, q), ``"succeeds"`` for the reverse, else ``"incomparable-evidence"``.
    Sampling can only refute the universal ordering, never prove it. When
    both directions hold (e.g. identical pairs) ``"precedes"`` is reported.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not equivalent(pair1, pair2):
        raise NotEquivalent("pairs have different products")
    u1, u2 = _as_matrix(pair1[0]), _as_matrix(pair2[0])
    K = u1.shape[0]
    rng = make_rng(seed)
    p = rng.dirichlet(np.ones(K), size=samples)
    q = rng.dirichlet(np.ones(K), size=samples)
    d1 = 0.5 * np.abs((p - q) @ u1).sum(axis=1)
    d2 = 0.5 * np.abs((p - q) @ u2).sum(axis=1)
    if np.all(d1 <= d2 + CONTRACTION_SLACK):
        return "precedes"
    if np.all(d2 <= d1 + CONTRACTION_SLACK):
        return "succeeds"
    return "incomparable-evidence"


def overall_noise_rate(T, prior=None):
    """Probability that the noisy label differs from the clean one."""
    m = _as_matrix(T)
    K = m.shape[0]
    prior = np.full(K, 1.0 / K) if prior is None else np.asarray(prior, dtype=np.float64)
    if prior.shape != (K,):
        raise DimensionError(f"prior of length {prior.shape} vs K={K}")
    return float(1.0 - prior @ np.diag(m))


# ---------------------------------------------------------------------------
# Dirichlet posterior over transition matrices


class ConfusionMatrix:
    """Counts C[i, j] of (predicted class i, noisy label j) pairs."""

    __slots__ = ("_c",)

    def __init__(self, counts):
        c = np.array(counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {c.shape}")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        c.setflags(write=False)
        self._c = c

    @property
    def counts(self):
        return self._c

    @property
    def K(self):
        return self._c.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._c if dtype is None else self._c.astype(dtype)

    def __add__(self, other):
        return ConfusionMatrix(self._c + other.counts)

    def __repr__(self):
        return f"ConfusionMatrix({self._c.tolist()!r})"


class DirichletPosterior:
    """One Dirichlet per row of the transition matrix, concentration ``alpha``."""

    __slots__ = ("_alpha",)

    def __init__(self, alpha):
        a = np.array(alpha, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(a > 0):
            raise ValueError("concentration parameters must be strictly positive")
        a.setflags(write=False)
        self._alpha = a

    @classmethod
    def diagonal_prior(cls, K, diag=10.0, off=1e-3):
        a = np.full((K, K), off)
        np.fill_diagonal(a, diag)
        return cls(a)

    @property
    def alpha(self):
        return self._alpha

    @property
    def K(self):
        return self._alpha.shape[0]

    def to_dict(self):
        return {"K": self.K, "alpha": self._alpha.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["alpha"])

    def __repr__(self):
        return f"DirichletPosterior({self._alpha.tolist()!r})"


def dirichlet_update(post, C, beta=(0.999, 0.01)):
    """Discounted conjugate update: alpha <- beta1 * alpha + beta2 * C."""
    b1, b2 = beta
    if not 0.0 < b1 <= 1.0:
        raise ValueError(f"beta1={b1!r} outside (0, 1]")
    if b2 <= 0.0:
        raise ValueError(f"beta2={b2!r} must be positive")
    c = np.asarray(C.counts if isinstance(C, ConfusionMatrix) else C, dtype=np.float64)
    if c.shape != post.alpha.shape:
        raise DimensionError(f"confusion {c.shape} vs posterior {post.alpha.shape}")
    return DirichletPosterior(b1 * post.alpha + b2 * c)


def dirichlet_sample(post, seed, stream=(), max_attempts=100):
    """Draw a transition matrix with row i ~ Dirichlet(alpha_i).

    Rows are normalized Gamma variates. Rank-deficient draws are redrawn from
    the same stream, so the result is a deterministic function of ``seed``
    and ``stream``.
    """
    rng = make_rng(seed, *stream)
    alpha = post.alpha
    for _ in range(max_attempts):
        g = rng.gamma(alpha)
        sums = g.sum(axis=1, keepdims=True)
        if np.any(sums == 0):
            continue
        m = g / sums
        if is_full_rank(m):
            return TransitionMatrix._trusted(m)
    raise DegeneratePosterior(f"{max_attempts} rank-deficient draws from the posterior")


def dirichlet_mean(post):
    a = post.alpha
    return TransitionMatrix(a / a.sum(axis=1, keepdims=True), check_rank=False)
