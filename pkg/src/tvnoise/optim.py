"""Adam and SGD-with-momentum update rules plus learning-rate schedules.

Both optimizers are written functionally: ``optimizer_step`` takes the
current parameters and state and returns new ones without mutating inputs.
"""

import math

import numpy as np

from .errors import ConfigError, ShapeMismatch

DEFAULT_ADAM = {"kind": "adam", "lr": 1e-3, "beta_m": 0.9, "beta_v": 0.999, "eps": 1e-8}
DEFAULT_SGD = {"kind": "sgd_momentum", "lr": 0.1, "momentum": 0.9, "weight_decay": 1e-4}


def resolve_optimizer(spec):
    spec = dict(spec or {})
    kind = spec.get("kind", "adam")
    if kind == "adam":
        base = DEFAULT_ADAM
    elif kind == "sgd_momentum":
        base = DEFAULT_SGD
    else:
        raise ConfigError(f"unknown optimizer kind {kind!r}")
    unknown = set(spec) - set(base)
    if unknown:
        raise ConfigError(f"unknown {kind} options: {sorted(unknown)}")
    return {**base, **spec}


def init_state(params, spec):
    spec = resolve_optimizer(spec)
    zeros = [np.zeros_like(p) for p in params]
    if spec["kind"] == "adam":
        return {"t": 0, "m": zeros, "v": [np.zeros_like(p) for p in params]}
    return {"v": zeros}


def optimizer_step(params, grads, state, spec, lr):
    """One update. Returns ``(new_params, new_state)``.

    Adam uses bias-corrected moments; SGD uses v <- mu v + g + wd theta,
    theta <- theta - lr v.
    """
    spec = resolve_optimizer(spec)
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeMismatch("gradients are not congruent with parameters")
    if state is None:
        state = init_state(params, spec)
    if spec["kind"] == "adam":
        b1, b2, eps = spec["beta_m"], spec["beta_v"], spec["eps"]
        t = state["t"] + 1
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        new_p, new_m, new_v = [], [], []
        for p, g, m, v in zip(params, grads, state["m"], state["v"]):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
            new_m.append(m)
            new_v.append(v)
        return new_p, {"t": t, "m": new_m, "v": new_v}
    mu, wd = spec["momentum"], spec["weight_decay"]
    new_p, new_v = [], []
    for p, g, v in zip(params, grads, state["v"]):
        v = mu * v + g + wd * p
        new_p.append(p - lr * v)
        new_v.append(v)
    return new_p, {"v": new_v}


def learning_rate(schedule, base_lr, it, total):
    """Learning rate for 0-based iteration ``it`` of ``total``.

    ``exponential`` decays from ``base_lr`` to ``final`` at the last
    iteration; ``linear_warmup_decay`` ramps up over ``warmup_iters`` and
    then down towards zero.
    """
    schedule = dict(schedule or {"kind": "constant"})
    kind = schedule.get("kind", "constant")
    if kind == "constant":
        return base_lr
    if kind == "exponential":
        final = schedule["final"]
        if total <= 1:
            return base_lr
        return base_lr * math.exp(math.log(final / base_lr) * it / (total - 1))
    if kind == "linear_warmup_decay":
        warm = int(schedule["warmup_iters"])
        if it < warm:
            return base_lr * (it + 1) / warm
        rest = max(total - warm, 1)
        return base_lr * (total - it) / rest
    raise ConfigError(f"unknown lr schedule {kind!r}")
