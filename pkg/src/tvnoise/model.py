"""Softmax classifiers with hand-written backprop.

Two architectures: ``linear`` (softmax regression) and ``hidden`` (one ReLU
hidden layer). Parameters are stored as a list of arrays,
``[W, b]`` or ``[W1, b1, W2, b2]`` with ``W`` shaped (fan_in, fan_out).
"""

import json

import numpy as np

from ._rng import make_rng
from .errors import DimensionError, InvalidArchitecture
from .simplex import ProbVector


class GradientSet:
    """Per-parameter gradients, congruent with a classifier's parameters."""

    __slots__ = ("arrays",)

    def __init__(self, arrays):
        self.arrays = [np.asarray(a, dtype=np.float64) for a in arrays]

    def __iter__(self):
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def __getitem__(self, i):
        return self.arrays[i]

    def __add__(self, other):
        return GradientSet([a + b for a, b in zip(self.arrays, other.arrays)])

    def __mul__(self, s):
        return GradientSet([a * s for a in self.arrays])

    __rmul__ = __mul__

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays])

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params])


def _affine(X, W, b):
    # einsum keeps a fixed per-row summation order, so a row computed alone
    # matches the same row inside a batch bit for bit (BLAS does not promise this)
    return np.einsum("nd,dk->nk", X, W) + b


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(p, g):
    """Vector-Jacobian product of softmax: given dL/dp, return dL/dz."""
    return p * (g - (g * p).sum(axis=-1, keepdims=True))


class MlpClassifier:
    def __init__(self, arch, d, K, params, hidden=None):
        if arch not in ("linear", "hidden"):
            raise InvalidArchitecture(f"unknown architecture {arch!r}")
        self.arch = arch
        self.d = int(d)
        self.K = int(K)
        self.hidden = None if arch == "linear" else int(hidden)
        self.params = [np.array(p, dtype=np.float64) for p in params]
        expected = self.param_shapes()
        got = [p.shape for p in self.params]
        if got != expected:
            raise InvalidArchitecture(f"parameter shapes {got} do not match {expected}")

    def param_shapes(self):
        if self.arch == "linear":
            return [(self.d, self.K), (self.K,)]
        h = self.hidden
        return [(self.d, h), (h,), (h, self.K), (self.K,)]

    @property
    def num_params(self):
        return sum(p.size for p in self.params)

    def with_params(self, params):
        return MlpClassifier(self.arch, self.d, self.K, params, self.hidden)

    def copy(self):
        return self.with_params([p.copy() for p in self.params])

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DimensionError(f"input of shape {X.shape}, model expects d={self.d}")
        return X

    def logits(self, X):
        return self._forward(self._check(X))[1]

    def _forward(self, X):
        if self.arch == "linear":
            W, b = self.params
            z = _affine(X, W, b)
            return None, z, softmax(z)
        W1, b1, W2, b2 = self.params
        a = _affine(X, W1, b1)
        hid = np.maximum(a, 0.0)
        z = _affine(hid, W2, b2)
        return (a, hid), z, softmax(z)

    def forward_batch(self, X):
        return self._forward(self._check(X))[2]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise DimensionError(f"input of shape {x.shape}, model expects ({self.d},)")
        return ProbVector(self.forward_batch(x[None, :])[0])

    def forward_cached(self, X):
        """Forward pass that also returns the cache consumed by ``backward_cached``."""
        X = self._check(X)
        hidden, z, p = self._forward(X)
        return p, (X, hidden, p)

    def backward_cached(self, cache, output_grads):
        X, hidden, p = cache
        g = np.asarray(output_grads, dtype=np.float64)
        if g.shape != p.shape:
            raise DimensionError(f"output grads of shape {g.shape}, expected {p.shape}")
        n = X.shape[0]
        dz = softmax_backward(p, g) / n
        if self.arch == "linear":
            return GradientSet([X.T @ dz, dz.sum(axis=0)])
        a, hid = hidden
        W2 = self.params[2]
        dW2 = hid.T @ dz
        db2 = dz.sum(axis=0)
        da = (dz @ W2.T) * (a > 0)
        return GradientSet([X.T @ da, da.sum(axis=0), dW2, db2])

    def to_dict(self):
        return {
            "arch": self.arch,
            "d": self.d,
            "K": self.K,
            "hidden": self.hidden,
            "params": [p.ravel().tolist() for p in self.params],
        }

    @classmethod
    def from_dict(cls, d):
        tmpl = cls(d["arch"], d["d"], d["K"],
                   [np.zeros(s) for s in _shapes(d["arch"], d["d"], d["K"], d.get("hidden"))],
                   d.get("hidden"))
        params = [np.array(flat, dtype=np.float64).reshape(s)
                  for flat, s in zip(d["params"], tmpl.param_shapes())]
        return tmpl.with_params(params)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _shapes(arch, d, K, hidden):
    if arch == "linear":
        return [(d, K), (K,)]
    if arch == "hidden":
        return [(d, hidden), (hidden,), (hidden, K), (K,)]
    raise InvalidArchitecture(f"unknown architecture {arch!r}")


def init(arch, d, K, seed, hidden=32, scale=1.0):
    """Gaussian weights with std ``scale / sqrt(fan_in)``, zero biases."""
    if d < 1 or K < 1:
        raise InvalidArchitecture(f"d and K must be >= 1, got d={d}, K={K}")
    if arch == "hidden" and (hidden is None or hidden < 1):
        raise InvalidArchitecture(f"hidden width must be >= 1, got {hidden}")
    rng = make_rng(seed)
    params = []
    for shape in _shapes(arch, d, K, hidden):
        if len(shape) == 2:
            params.append(rng.standard_normal(shape) * (scale / np.sqrt(shape[0])))
        else:
            params.append(np.zeros(shape))
    return MlpClassifier(arch, d, K, params, hidden if arch == "hidden" else None)


def forward(model, x):
    return model.forward(x)


def forward_batch(model, X):
    return model.forward_batch(X)


def backward(model, X, output_grads):
    """Batch-averaged parameter gradients given dloss_n/dp_n for each example."""
    _, cache = model.forward_cached(X)
    return model.backward_cached(cache, output_grads)


def finite_diff_grad(loss_fn, model, rel_h=1e-5):
    """Central-difference gradient of ``loss_fn(model)`` for every parameter.

    Step per coordinate is ``rel_h * max(1, |theta|)``.
    """
    work = model.copy()
    grads = []
    for p in work.params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            h = rel_h * max(1.0, abs(orig))
            flat[i] = orig + h
            fp = loss_fn(work)
            flat[i] = orig - h
            fm = loss_fn(work)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return GradientSet(grads)
