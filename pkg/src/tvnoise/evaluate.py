"""Evaluation metrics and analysis experiments."""

import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._rng import derive_seed
from .datagen import corrupt_labels, sample_mixture
from .errors import DimensionError, MissingCleanLabels
from .trainer import train
from .transition import _as_matrix
from .transition import average_tv as average_tv  # re-exported: one implementation

_DATA, _NOISE = 11, 12


@dataclass
class EvalReport:
    accuracy: float
    avg_tv: float = None
    hull_violation_rate: float = None
    mean_hull_distance: float = None

    def metrics_csv(self):
        tv = "" if self.avg_tv is None else repr(float(self.avg_tv))
        return f"accuracy,avg_tv\n{float(self.accuracy)!r},{tv}\n"

    def hull_csv(self):
        return (f"violation_rate,mean_distance\n"
                f"{float(self.hull_violation_rate)!r},{float(self.mean_hull_distance)!r}\n")


def accuracy(model, test_ds):
    """Fraction of test points whose argmax prediction equals the clean label."""
    if test_ds.clean_labels is None:
        raise MissingCleanLabels("accuracy needs clean test labels")
    if test_ds.N == 0:
        raise ValueError("accuracy on an empty test set")
    P = model.forward_batch(test_ds.features)
    return float(np.mean(np.argmax(P, axis=1) == test_ds.clean_labels))


def hull_coordinates(T, P):
    """Barycentric coordinates Q with Q @ T = P, one row per prediction."""
    m = _as_matrix(T)
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if P.shape[1] != m.shape[0]:
        raise DimensionError(f"predictions have K={P.shape[1]}, T has K={m.shape[0]}")
    return np.linalg.solve(m.T, P.T).T


def overconfidence_report(model, t_true, X, tol=1e-9):
    """How often predicted noisy posteriors escape the convex hull of T's rows.

    Returns ``(violation_rate, mean_distance)``. The distance of a point is
    the TV distance to T^T q', where q' is its barycentric coordinate vector
    with negative entries clamped to zero and renormalized; members have
    distance zero.
    """
    P = model.forward_batch(X) if hasattr(model, "forward_batch") else np.asarray(model)
    m = _as_matrix(t_true)
    Q = hull_coordinates(m, P)
    outside = np.any(Q < -tol, axis=1)
    Qc = np.clip(Q, 0.0, None)
    Qc /= Qc.sum(axis=1, keepdims=True)
    dist = 0.5 * np.abs(P - Qc @ m).sum(axis=1)
    dist[~outside] = 0.0
    return float(np.mean(outside)), float(np.mean(dist))


def _threads():
    n = int(os.environ.get("TVNOISE_THREADS", "0") or 0)
    if n > 0:
        return n
    if hasattr(os, "sched_getaffinity"):
        return len(os.sched_getaffinity(0))
    return os.cpu_count() or 1


def _sweep_cell(args):
    config, spec, T, N, seed = args
    data_seed = derive_seed(seed, N, _DATA)
    noise_seed = derive_seed(seed, N, _NOISE)
    ds = corrupt_labels(sample_mixture(spec, N, data_seed), T, noise_seed)
    report = train(replace(config, seed=seed), ds, t_true=T)
    return report.final_avg_tv


def consistency_sweep(config, spec, T, n_list, seeds=3):
    """Median final avg-TV of ``config.method`` per training-set size.

    ``seeds`` is either a count (seeds 0..seeds-1) or an explicit sequence.
    Returns ``(rows, per_seed)`` where ``rows`` is a list of ``(N, median)``
    and ``per_seed`` maps N to the list of per-seed values.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    seeds = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    jobs = [(config, spec, T, N, s) for N in n_list for s in seeds]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            values = list(ex.map(_sweep_cell, jobs))
    else:
        values = [_sweep_cell(j) for j in jobs]
    per_seed = {N: values[i * len(seeds):(i + 1) * len(seeds)] for i, N in enumerate(n_list)}
    rows = [(N, float(np.median(per_seed[N]))) for N in n_list]
    return rows, per_seed


def sweep_csv(rows):
    out = io.StringIO()
    out.write("N,median_avg_tv\n")
    for N, med in rows:
        out.write(f"{int(N)},{float(med)!r}\n")
    return out.getvalue()
