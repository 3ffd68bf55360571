"""Synthetic Gaussian-mixture data, label corruption and dataset I/O.

Labels are 0-indexed in memory. CSV files store them 1-indexed; IDX label
bytes are stored as-is (digit d is class d).
"""

import csv
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import make_rng
from .errors import (
    BadMagic,
    CountMismatch,
    DimensionError,
    InvalidSpec,
    MissingCleanLabels,
    ParseError,
    TruncatedFile,
)
from .simplex import ProbVector
from .transition import _as_matrix

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class GaussianMixtureSpec:
    """K isotropic Gaussians sharing one standard deviation."""

    def __init__(self, means, sigma=1.0, weights=None):
        means = np.array(means, dtype=np.float64)
        if means.ndim != 2 or means.shape[0] < 2:
            raise InvalidSpec(f"means must be a K x d array with K >= 2, got {means.shape}")
        if not sigma > 0:
            raise InvalidSpec(f"sigma must be positive, got {sigma!r}")
        K = means.shape[0]
        if weights is None:
            weights = np.full(K, 1.0 / K)
        weights = np.array(weights, dtype=np.float64)
        if weights.shape != (K,) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidSpec("weights must be a probability vector with one entry per mean")
        # coincident means are accepted: the fully-overlapping mixture is a useful degenerate case
        means.setflags(write=False)
        weights.setflags(write=False)
        self.means = means
        self.sigma = float(sigma)
        self.weights = weights

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    @classmethod
    def default(cls, sigma=1.0, side=6.0):
        """Three components on an equilateral triangle with side ``side * sigma``."""
        r = side * sigma / np.sqrt(3.0)
        angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
        means = r * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return cls(means, sigma)

    def to_dict(self):
        return {
            "means": self.means.tolist(),
            "sigma": self.sigma,
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["means"], d.get("sigma", 1.0), d.get("weights"))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    clean_labels: np.ndarray = None
    noisy_labels: np.ndarray = None
    K: int = None

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionError(f"features must be N x d, got shape {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        if self.clean_labels is None and self.noisy_labels is None:
            raise ValueError("dataset needs clean or noisy labels")
        K = self.K
        for name in ("clean_labels", "noisy_labels"):
            y = getattr(self, name)
            if y is None:
                continue
            y = np.array(y, dtype=np.int64)
            if y.shape != (x.shape[0],):
                raise DimensionError(f"{name} has shape {y.shape}, expected ({x.shape[0]},)")
            if y.size and y.min() < 0:
                raise ValueError(f"{name} contains a negative class index")
            y.setflags(write=False)
            object.__setattr__(self, name, y)
        if K is None:
            top = max(int(y.max()) for y in (self.clean_labels, self.noisy_labels)
                      if y is not None and y.size) if x.shape[0] else 0
            K = top + 1
        for y in (self.clean_labels, self.noisy_labels):
            if y is not None and y.size and y.max() >= K:
                raise ValueError(f"label {int(y.max())} out of range for K={K}")
        object.__setattr__(self, "K", int(K))

    @property
    def N(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, idx):
        return LabeledDataset(
            self.features[idx],
            None if self.clean_labels is None else self.clean_labels[idx],
            None if self.noisy_labels is None else self.noisy_labels[idx],
            self.K,
        )

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented

        def same(a, b):
            return (a is None and b is None) or (
                a is not None and b is not None and np.array_equal(a, b))

        return (self.K == other.K and np.array_equal(self.features, other.features)
                and same(self.clean_labels, other.clean_labels)
                and same(self.noisy_labels, other.noisy_labels))


def sample_mixture(spec, N, seed):
    if N < 1:
        raise InvalidSpec(f"N must be >= 1, got {N}")
    rng = make_rng(seed)
    y = rng.choice(spec.K, size=N, p=spec.weights)
    x = spec.means[y] + spec.sigma * rng.standard_normal((N, spec.d))
    return LabeledDataset(x, clean_labels=y, K=spec.K)


def clean_posterior_batch(spec, X):
    """Bayes posterior over components for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != spec.d:
        raise DimensionError(f"feature dimension {X.shape[1]} vs spec d={spec.d}")
    sq = ((X[:, None, :] - spec.means[None, :, :]) ** 2).sum(axis=2)
    with np.errstate(divide="ignore"):
        logits = np.log(spec.weights)[None, :] - sq / (2.0 * spec.sigma**2)
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


def clean_posterior(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.d,):
        raise DimensionError(f"feature vector of shape {x.shape} vs spec d={spec.d}")
    return ProbVector(clean_posterior_batch(spec, x[None, :])[0])


class AnalyticPosterior:
    """Model-like wrapper exposing x -> U^T p(Y|x) for a known mixture.

    With ``U`` omitted it is the exact clean posterior; with ``U = T`` it is
    the exact noisy posterior.
    """

    def __init__(self, spec, U=None):
        self.spec = spec
        self.U = None if U is None else _as_matrix(U)

    @property
    def K(self):
        return self.spec.K

    def forward_batch(self, X):
        p = clean_posterior_batch(self.spec, X)
        return p if self.U is None else p @ self.U

    def forward(self, x):
        return ProbVector(self.forward_batch(np.asarray(x)[None, :])[0])


def corrupt_labels(ds, T, seed):
    """Draw noisy labels row-wise from T given the clean labels."""
    if ds.clean_labels is None:
        raise MissingCleanLabels("corrupt_labels needs clean labels")
    m = _as_matrix(T)
    if m.shape[0] != ds.K:
        raise DimensionError(f"T is {m.shape[0]}x{m.shape[0]} but dataset has K={ds.K}")
    rng = make_rng(seed)
    cdf = np.cumsum(m, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(ds.N)
    noisy = (u[:, None] >= cdf[ds.clean_labels]).sum(axis=1)
    return LabeledDataset(ds.features, ds.clean_labels, noisy, ds.K)


def verify_anchor_existence(ds, spec, eps):
    """Per class, whether some sample point has clean posterior >= 1 - eps."""
    p = clean_posterior_batch(spec, ds.features)
    return [bool(v) for v in (p.max(axis=0) >= 1.0 - eps)]


# ---------------------------------------------------------------------------
# IDX (MNIST) files


def _read_exact(buf, offset, n, path):
    if offset + n > len(buf):
        raise TruncatedFile(f"{path}: expected {n} bytes at offset {offset}, file has {len(buf)}")
    return buf[offset:offset + n]


def load_idx(images_path, labels_path):
    """Parse big-endian IDX image and label files into a dataset.

    Pixels are scaled to [0, 1] and each image is flattened row-major.
    """
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()

    (magic,) = struct.unpack(">I", _read_exact(img, 0, 4, images_path))
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagic(f"{images_path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    n, rows, cols = struct.unpack(">III", _read_exact(img, 4, 12, images_path))
    pixels = _read_exact(img, 16, n * rows * cols, images_path)

    (magic,) = struct.unpack(">I", _read_exact(lab, 0, 4, labels_path))
    if magic != IDX_LABELS_MAGIC:
        raise BadMagic(f"{labels_path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    (m,) = struct.unpack(">I", _read_exact(lab, 4, 4, labels_path))
    if m != n:
        raise CountMismatch(f"{n} images but {m} labels")
    labels = _read_exact(lab, 8, m, labels_path)

    x = np.frombuffer(pixels, dtype=np.uint8).reshape(n, rows * cols) / 255.0
    y = np.frombuffer(labels, dtype=np.uint8).astype(np.int64)
    return LabeledDataset(x, clean_labels=y, K=max(int(y.max()) + 1, 2) if n else 2)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images (N x rows x cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(
        struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(
        struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes())


# ---------------------------------------------------------------------------
# CSV


def dataset_to_csv(ds):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"f{j}" for j in range(ds.d)] + ["y", "y_noisy"])
    for n in range(ds.N):
        row = [repr(float(v)) for v in ds.features[n]]
        row.append("" if ds.clean_labels is None else str(int(ds.clean_labels[n]) + 1))
        row.append("" if ds.noisy_labels is None else str(int(ds.noisy_labels[n]) + 1))
        w.writerow(row)
    return out.getvalue()


def save_csv(ds, path):
    Path(path).write_text(dataset_to_csv(ds))


def _parse_label(cell, lineno):
    try:
        v = int(cell)
    except ValueError:
        raise ParseError(f"label {cell!r} is not an integer", lineno) from None
    if v < 1:
        raise ParseError(f"label {v} < 1 (labels are 1-indexed)", lineno)
    return v - 1


def load_csv(path, K=None):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if len(header) < 2 or header[-2:] != ["y", "y_noisy"]:
            raise ParseError("header must end with y,y_noisy", 1)
        d = len(header) - 2
        if header[:d] != [f"f{j}" for j in range(d)]:
            raise ParseError("feature columns must be named f0..f{d-1}", 1)
        feats, clean, noisy = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise ParseError(f"expected {d + 2} cells, got {len(row)}", lineno)
            try:
                feats.append([float(c) for c in row[:d]])
            except ValueError:
                raise ParseError("non-numeric feature cell", lineno) from None
            clean.append(None if row[d] == "" else _parse_label(row[d], lineno))
            noisy.append(None if row[d + 1] == "" else _parse_label(row[d + 1], lineno))

    def column(vals, name):
        present = [v is not None for v in vals]
        if not any(present):
            return None
        if not all(present):
            raise ParseError(f"column {name} is partially empty")
        return np.array(vals, dtype=np.int64)

    x = np.array(feats, dtype=np.float64).reshape(len(feats), d)
    return LabeledDataset(x, column(clean, "y"), column(noisy, "y_noisy"), K)
