"""Training loops for the supported methods.

* ``TVG``  - TV-regularized Lagrangian, transition matrix as row-softmax of
  logits trained by its own Adam optimizer.
* ``TVD``  - TV-regularized Lagrangian, transition matrix sampled every batch
  from a Dirichlet posterior that is updated from the sampled confusion matrix.
* ``Forward`` - NLL with a fixed, given transition matrix.
* ``CCE`` - plain cross-entropy (identity transition matrix).
* ``AnchorTwoStep`` - CCE, anchor-point read-off of the transition matrix,
  then Forward with the estimate.
"""

import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model as model_mod
from ._rng import make_rng
from .errors import ConfigError, DimensionError
from .objective import init_t_logits, lagrangian, pairwise_tv, realize_t, sample_pairs
from .optim import init_state, learning_rate, optimizer_step, resolve_optimizer
from .transition import (
    ConfusionMatrix,
    DirichletPosterior,
    TransitionMatrix,
    _as_matrix,
    average_tv,
    dirichlet_mean,
    dirichlet_sample,
    dirichlet_update,
)

METHODS = ("TVG", "TVD", "Forward", "CCE", "AnchorTwoStep")

# stream ids keep each random consumer independent of the others
_S_SHUFFLE, _S_PAIRS, _S_DIRICHLET, _S_CONFUSION, _S_INIT, _S_FINAL = 1, 2, 3, 4, 5, 6


@dataclass
class TrainConfig:
    method: str
    batch_size: int = 512
    iterations: int = 2000
    gamma: float = 0.1
    beta: tuple = (0.999, 0.01)
    num_pairs: int = None
    t_init: dict = field(default_factory=lambda: {
        "logit_diag": 0.5, "prior_diag": 10.0, "prior_off": 1e-3})
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 1e-3})
    lr_schedule: dict = field(default_factory=lambda: {"kind": "exponential", "final": 1e-4})
    t_optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 5e-3})
    t_lr_schedule: dict = field(default_factory=lambda: {
        "kind": "linear_warmup_decay", "warmup_iters": 400})
    model: dict = field(default_factory=lambda: {"arch": "hidden", "hidden": 32})
    fixed_t: list = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        self.beta = tuple(float(b) for b in self.beta)
        if len(self.beta) != 2 or not 0 < self.beta[0] <= 1 or self.beta[1] <= 0:
            raise ConfigError(f"beta must satisfy 0 < beta1 <= 1 and beta2 > 0, got {self.beta}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        self.optimizer = resolve_optimizer(self.optimizer)
        self.t_optimizer = resolve_optimizer(self.t_optimizer)
        self.t_init = {"logit_diag": 0.5, "prior_diag": 10.0, "prior_off": 1e-3, **self.t_init}

    def to_dict(self):
        d = asdict(self)
        d["beta"] = list(self.beta)
        return d

    @classmethod
    def from_dict(cls, d):
        if "method" not in d:
            raise ConfigError("missing required field 'method'")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class TrainReport:
    iterations: np.ndarray
    loss: np.ndarray
    reg: np.ndarray
    avg_tv: np.ndarray
    model: model_mod.MlpClassifier
    t_hat: TransitionMatrix
    posterior: DirichletPosterior = None
    final_reg: float = None

    def records_csv(self):
        out = io.StringIO()
        out.write("iter,loss,reg,avg_tv\n")
        for it, lo, rg, tv in zip(self.iterations, self.loss, self.reg, self.avg_tv):
            tv_cell = "" if np.isnan(tv) else repr(float(tv))
            out.write(f"{int(it)},{float(lo)!r},{float(rg)!r},{tv_cell}\n")
        return out.getvalue()

    @property
    def final_avg_tv(self):
        v = self.avg_tv[-1]
        return None if np.isnan(v) else float(v)

    def artifact(self):
        return {
            "model": self.model.to_dict(),
            "t_hat": self.t_hat.to_dict(),
            "alpha": None if self.posterior is None else self.posterior.to_dict(),
            "final_reg": self.final_reg,
            "final_avg_tv": self.final_avg_tv,
        }


def accumulate_confusion(model, X, y_noisy, seed, stream=()):
    """Sample a prediction from the model per example and count it against the noisy label."""
    P = model.forward_batch(X)
    return ConfusionMatrix(_confusion_from_probs(P, y_noisy, make_rng(seed, *stream)))


def _confusion_from_probs(P, y, rng):
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (P.shape[0],):
        raise DimensionError(f"{y.shape[0]} labels for {P.shape[0]} examples")
    K = P.shape[1]
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(P.shape[0])
    pred = np.minimum((u[:, None] >= cdf).sum(axis=1), K - 1)
    return np.bincount(pred * K + y, minlength=K * K).reshape(K, K)


def _batches(N, batch_size, seed):
    epoch = 0
    while True:
        perm = make_rng(seed, _S_SHUFFLE, epoch).permutation(N)
        for start in range(0, N, batch_size):
            yield perm[start:start + batch_size]
        epoch += 1


def _init_model(config, d, K, seed):
    spec = dict(config.model)
    arch = spec.pop("arch", "hidden")
    return model_mod.init(arch, d, K, seed, **spec)


def _fit(config, X, y, K, model, t_true, method, fixed_t=None, seed=None):
    """Run one training phase. ``method`` is one of TVG, TVD or NLL (fixed T)."""
    seed = config.seed if seed is None else seed
    n_it = config.iterations
    num_pairs = config.num_pairs
    gamma = config.gamma if method in ("TVG", "TVD") else 0.0
    t_true_m = None if t_true is None else _as_matrix(t_true)

    opt_state = init_state(model.params, config.optimizer)
    t_logits = t_state = None
    posterior = None
    if method == "TVG":
        t_logits = init_t_logits(K, config.t_init["logit_diag"])
        t_state = init_state([t_logits], config.t_optimizer)
    elif method == "TVD":
        posterior = DirichletPosterior.diagonal_prior(
            K, config.t_init["prior_diag"], config.t_init["prior_off"])
    else:
        fixed = _as_matrix(fixed_t)

    loss = np.empty(n_it)
    reg = np.empty(n_it)
    tv = np.full(n_it, np.nan)
    batches = _batches(X.shape[0], config.batch_size, seed)
    conf_rng = make_rng(seed, _S_CONFUSION)

    for it in range(n_it):
        idx = next(batches)
        xb, yb = X[idx], y[idx]
        stream = (_S_PAIRS, it)
        if method == "TVD":
            that = dirichlet_sample(posterior, seed, (_S_DIRICHLET, it)).matrix
        elif method == "TVG":
            that = None
        else:
            that = fixed
        obj = lagrangian(model, that, xb, yb, gamma, num_pairs, seed, stream, t_logits=t_logits)
        lr = learning_rate(config.lr_schedule, config.optimizer["lr"], it, n_it)
        new_params, opt_state = optimizer_step(model.params, obj.model_grads, opt_state,
                                               config.optimizer, lr)
        model = model.with_params(new_params)
        if method == "TVG":
            t_lr = learning_rate(config.t_lr_schedule, config.t_optimizer["lr"], it, n_it)
            (t_logits,), t_state = optimizer_step([t_logits], [obj.t_logit_grads], t_state,
                                                  config.t_optimizer, t_lr)
            estimate = realize_t(t_logits, check_rank=False).matrix
        elif method == "TVD":
            C = _confusion_from_probs(model.forward_batch(xb), yb, conf_rng)
            posterior = dirichlet_update(posterior, C, config.beta)
            estimate = None
        else:
            estimate = fixed
        loss[it] = obj.loss
        reg[it] = obj.reg
        if t_true_m is not None:
            if estimate is None:
                a = posterior.alpha
                estimate = a / a.sum(axis=1, keepdims=True)
            tv[it] = average_tv(t_true_m, estimate)

    if method == "TVG":
        t_hat = realize_t(t_logits, check_rank=False)
    elif method == "TVD":
        t_hat = dirichlet_mean(posterior)
    else:
        t_hat = TransitionMatrix._trusted(fixed)
    return model, t_hat, posterior, loss, reg, tv


def final_regularizer(model, X, seed, num_pairs=None):
    """Pairwise TV of the model's predictions over a whole feature matrix."""
    P = model.forward_batch(X)
    n = P.shape[0]
    first, second = sample_pairs(n, num_pairs or n, seed, (_S_FINAL,))
    return pairwise_tv(P, first, second)


def anchor_estimate(noisy_probs):
    """Transition matrix read off at the points most confidently predicted per class.

    ``noisy_probs`` is an N x K matrix of estimated noisy posteriors; row i
    of the result is the estimate at argmax_x p(noisy = i | x).
    """
    P = np.asarray(noisy_probs, dtype=np.float64)
    return P[np.argmax(P, axis=0)]


def train(config, train_ds, model=None, t_true=None, fixed_t=None):
    """Train ``config.method`` on the noisy labels of ``train_ds``.

    ``fixed_t`` (or ``config.fixed_t``) supplies the matrix for Forward.
    ``t_true`` is only used to log the per-iteration estimation error.
    """
    if train_ds.noisy_labels is None:
        raise ConfigError("training needs noisy labels")
    X, y, K = train_ds.features, train_ds.noisy_labels, train_ds.K
    if model is None:
        model = _init_model(config, train_ds.d, K, make_rng(config.seed, _S_INIT).integers(2**63))
    if model.K != K or model.d != train_ds.d:
        raise DimensionError(f"model is d={model.d}, K={model.K}; data is d={train_ds.d}, K={K}")
    posterior = None
    method = config.method
    if method in ("TVG", "TVD"):
        model, t_hat, posterior, loss, reg, tv = _fit(config, X, y, K, model, t_true, method)
    elif method == "CCE":
        model, t_hat, _, loss, reg, tv = _fit(config, X, y, K, model, t_true, "NLL",
                                              fixed_t=np.eye(K))
    elif method == "Forward":
        given = fixed_t if fixed_t is not None else config.fixed_t
        if given is None:
            raise ConfigError("Forward needs a fixed transition matrix")
        given = _as_matrix(given)
        if given.shape != (K, K):
            raise DimensionError(f"fixed_t is {given.shape}, data has K={K}")
        model, t_hat, _, loss, reg, tv = _fit(config, X, y, K, model, t_true, "NLL",
                                              fixed_t=given)
    else:
        # phase 1: noisy-posterior estimate with a separate model
        cce_model = _init_model(config, train_ds.d, K,
                                make_rng(config.seed, _S_INIT, 1).integers(2**63))
        cce_model = _fit(config, X, y, K, cce_model, None, "NLL", fixed_t=np.eye(K),
                         seed=config.seed + 1)[0]
        estimate = anchor_estimate(cce_model.forward_batch(X))
        model, t_hat, _, loss, reg, tv = _fit(config, X, y, K, model, t_true, "NLL",
                                              fixed_t=estimate)
    return TrainReport(
        iterations=np.arange(1, config.iterations + 1),
        loss=loss,
        reg=reg,
        avg_tv=tv,
        model=model,
        t_hat=t_hat,
        posterior=posterior,
        final_reg=final_regularizer(model, X, config.seed),
    )
