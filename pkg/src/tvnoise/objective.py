"""Training objectives: forward-corrected NLL, pairwise TV regularizer, Lagrangian.

Every objective returns an :class:`ObjectiveValue` with the scalar loss and
exact gradients w.r.t. the classifier parameters, plus gradients w.r.t. the
unconstrained transition logits when those are supplied.
"""

from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .datagen import GaussianMixtureSpec, clean_posterior_batch
from .errors import DimensionError, EmptyBatch, NotSynthetic, RankError
from .model import GradientSet, softmax, softmax_backward
from .transition import TransitionMatrix, _as_matrix, is_full_rank

PROB_FLOOR = 1e-12


@dataclass
class ObjectiveValue:
    loss: float
    model_grads: GradientSet = None
    t_logit_grads: np.ndarray = None
    nll: float = None
    reg: float = None


# ---------------------------------------------------------------------------
# transition logits


def init_t_logits(K, diag=0.5):
    """Logits whose row softmax has ``diag`` on the diagonal, the rest spread evenly."""
    z = np.full((K, K), np.log((1.0 - diag) / (K - 1)))
    np.fill_diagonal(z, np.log(diag))
    return z


def realize_t(logits, check_rank=True):
    m = softmax(np.asarray(logits, dtype=np.float64))
    if check_rank and not is_full_rank(m):
        raise RankError("realized transition matrix is numerically singular")
    return TransitionMatrix._trusted(m)


def t_grad(chain, logits):
    """Map dL/dT (upstream, K x K) to dL/dlogits through the row softmax."""
    return softmax_backward(softmax(np.asarray(logits, dtype=np.float64)), np.asarray(chain))


# ---------------------------------------------------------------------------


def _forward(model, X):
    if hasattr(model, "forward_cached"):
        return model.forward_cached(X)
    return model.forward_batch(X), None


def _check_labels(P, y):
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (P.shape[0],):
        raise DimensionError(f"{y.shape[0]} labels for {P.shape[0]} examples")
    return y


def nll_loss(model, That, X, y_noisy, t_logits=None, with_grads=True):
    """Mean of -log(sum_i That[i, y] * p_hat_i) over the batch.

    When ``t_logits`` is given, the transition matrix is their row softmax
    (``That`` is ignored) and logit gradients are returned too.
    """
    P, cache = _forward(model, X)
    if P.shape[0] == 0:
        raise EmptyBatch("nll_loss on an empty batch")
    y = _check_labels(P, y_noisy)
    T = softmax(np.asarray(t_logits, dtype=np.float64)) if t_logits is not None else _as_matrix(That)
    if T.shape != (P.shape[1], P.shape[1]):
        raise DimensionError(f"T is {T.shape} but model has K={P.shape[1]}")
    cols = T[:, y].T
    q = (P * cols).sum(axis=1)
    floored = q <= PROB_FLOOR
    loss = float(np.mean(-np.log(np.maximum(q, PROB_FLOOR))))
    if not with_grads:
        return ObjectiveValue(loss)
    inv = np.where(floored, 0.0, 1.0 / np.maximum(q, PROB_FLOOR))
    model_grads = None
    if cache is not None:
        model_grads = model.backward_cached(cache, -cols * inv[:, None])
    tg = None
    if t_logits is not None:
        onehot = np.zeros_like(P)
        onehot[np.arange(P.shape[0]), y] = 1.0
        dT = -(P.T @ (onehot * inv[:, None])) / P.shape[0]
        tg = t_grad(dT, t_logits)
    return ObjectiveValue(loss, model_grads, tg)


def pairwise_tv(P, first, second):
    """Mean TV distance between rows ``P[first]`` and ``P[second]``."""
    return float(np.mean(0.5 * np.abs(P[first] - P[second]).sum(axis=1)))


def sample_pairs(n, num_pairs, seed, stream=()):
    rng = make_rng(seed, *stream)
    return rng.integers(0, n, size=num_pairs), rng.integers(0, n, size=num_pairs)


def tv_regularizer(model, X, num_pairs=None, seed=0, stream=(), pairs=None, with_grads=True):
    """Empirical expected pairwise TV distance of the model's predictions.

    Pairs are drawn uniformly with replacement (self-pairs included), or
    passed explicitly as ``(first, second)`` index arrays. The subgradient
    uses sign(p1 - p2) / 2, zero on ties.
    """
    P, cache = _forward(model, X)
    n = P.shape[0]
    if n == 0:
        raise EmptyBatch("tv_regularizer on an empty batch")
    if pairs is None:
        num_pairs = n if num_pairs is None else num_pairs
        if num_pairs < 1:
            raise ValueError("num_pairs must be >= 1")
        first, second = sample_pairs(n, num_pairs, seed, stream)
    else:
        first, second = (np.asarray(a, dtype=np.int64) for a in pairs)
    diff = P[first] - P[second]
    value = float(np.mean(0.5 * np.abs(diff).sum(axis=1)))
    if not with_grads or cache is None:
        return ObjectiveValue(value)
    m = first.shape[0]
    s = 0.5 * np.sign(diff) / m
    dP = np.zeros_like(P)
    np.add.at(dP, first, s)
    np.add.at(dP, second, -s)
    # backward averages over examples, so undo the 1/n
    return ObjectiveValue(value, model.backward_cached(cache, dP * n))


def lagrangian(model, That, X, y_noisy, gamma, num_pairs=None, seed=0, stream=(),
               t_logits=None, pairs=None):
    """NLL minus ``gamma`` times the TV regularizer.

    ``loss`` is the combined value; ``nll`` and ``reg`` hold the two parts.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    nll = nll_loss(model, That, X, y_noisy, t_logits=t_logits)
    reg = tv_regularizer(model, X, num_pairs, seed, stream, pairs, with_grads=gamma != 0)
    if gamma == 0:
        return ObjectiveValue(nll.loss, nll.model_grads, nll.t_logit_grads, nll.loss, reg.loss)
    grads = None
    if nll.model_grads is not None:
        grads = nll.model_grads + reg.model_grads * (-gamma)
    return ObjectiveValue(nll.loss - gamma * reg.loss, grads, nll.t_logit_grads,
                          nll.loss, reg.loss)


# ---------------------------------------------------------------------------
# diagnostics on synthetic data


def noisy_posterior_batch(spec, T, X):
    return clean_posterior_batch(spec, X) @ _as_matrix(T)


def _row_kl(p, q):
    q = np.maximum(q, PROB_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=1)


def kl_objective(model, That, spec, T_true, X):
    """Monte-Carlo estimate of E_x KL(T^T p(Y|x) || That^T p_hat(Y|x))."""
    if not isinstance(spec, GaussianMixtureSpec):
        raise NotSynthetic("kl_objective needs an analytic mixture spec")
    target = noisy_posterior_batch(spec, T_true, X)
    pred = model.forward_batch(X) @ _as_matrix(That)
    return float(np.mean(_row_kl(target, pred)))


def conditional_entropy(spec, T_true, X):
    """Sample mean of H(noisy label | x) from the analytic noisy posterior."""
    if not isinstance(spec, GaussianMixtureSpec):
        raise NotSynthetic("conditional_entropy needs an analytic mixture spec")
    p = noisy_posterior_batch(spec, T_true, X)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
    return float(np.mean(h))
