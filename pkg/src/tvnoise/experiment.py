"""Config-driven experiment pipeline: data -> corruption -> training -> metrics.

An experiment config is a JSON object::

    {
      "data":  {"source": "mixture", "mixture": null, "n": 10000, "n_test": 20000, "seed": 0},
      "noise": {"kind": "pair", "rate": 0.4, "seed": 1},
      "train": {"method": "TVD", "iterations": 4000, "seed": 0},
      "output_dir": "runs/tvd_pair40"
    }

``data.mixture`` may hold a Gaussian-mixture spec (``null`` = default
three-component mixture). ``data.source = "idx"`` reads ``train_images``,
``train_labels``, ``test_images`` and ``test_labels`` IDX files instead.
For ``Forward`` without ``train.fixed_t`` the true noise matrix is used.
"""

import json
from pathlib import Path

import numpy as np

from .datagen import GaussianMixtureSpec, corrupt_labels, load_idx, sample_mixture
from .errors import ConfigError
from .evaluate import EvalReport, accuracy
from .trainer import TrainConfig, train
from .transition import average_tv, make_noise, overall_noise_rate

DATA_DEFAULTS = {"source": "mixture", "mixture": None, "n": 10000, "n_test": 20000, "seed": 0}
NOISE_DEFAULTS = {"kind": "clean", "rate": None, "rate2": None, "concentration": None, "seed": 1}


def _require(d, key, where):
    if not isinstance(d, dict):
        raise ConfigError(f"'{where}' must be an object")
    if key not in d:
        raise ConfigError(f"missing required field '{key}' in '{where}'")
    return d[key]


def resolve_config(raw):
    """Fill defaults and validate; the result is what ``report.json`` records."""
    if not isinstance(raw, dict):
        raise ConfigError("experiment config must be a JSON object")
    train_raw = _require(raw, "train", "config")
    _require(train_raw, "method", "train")
    data = {**DATA_DEFAULTS, **raw.get("data", {})}
    noise = {**NOISE_DEFAULTS, **raw.get("noise", {})}
    if data["source"] not in ("mixture", "idx"):
        raise ConfigError(f"data.source must be 'mixture' or 'idx', got {data['source']!r}")
    if data["source"] == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            _require(data, key, "data")
    return {
        "data": data,
        "noise": noise,
        "train": TrainConfig.from_dict(train_raw).to_dict(),
        "output_dir": raw.get("output_dir"),
    }


def load_config(path):
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return raw


def build_data(cfg):
    """Return ``(train_ds, test_ds, T, spec)``; ``spec`` is None for IDX data."""
    data, noise = cfg["data"], cfg["noise"]
    spec = None
    if data["source"] == "mixture":
        spec = (GaussianMixtureSpec.default() if data["mixture"] is None
                else GaussianMixtureSpec.from_dict(data["mixture"]))
        clean = sample_mixture(spec, int(data["n"]), int(data["seed"]))
        test = sample_mixture(spec, int(data["n_test"]), int(data["seed"]) + 1)
    else:
        clean = load_idx(data["train_images"], data["train_labels"])
        test = load_idx(data["test_images"], data["test_labels"])
        if data.get("n"):
            clean = clean.subset(np.arange(min(int(data["n"]), clean.N)))
    T = make_noise(noise["kind"], clean.K, rate=noise["rate"], rate2=noise["rate2"],
                   concentration=noise["concentration"], seed=int(noise["seed"]))
    train_ds = corrupt_labels(clean, T, int(noise["seed"]))
    return train_ds, test, T, spec


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_experiment(cfg, out_dir=None):
    """Run a resolved experiment config and write its outputs.

    Writes ``metrics.csv``, ``train_log.csv``, ``report.json``,
    ``t_hat.json`` and, for TVD, ``alpha.json``. Returns the report dict.
    """
    out = Path(out_dir or cfg.get("output_dir") or ".")
    train_ds, test_ds, T, _ = build_data(cfg)
    tdict = dict(cfg["train"])
    if tdict["method"] == "Forward" and tdict.get("fixed_t") is None:
        tdict["fixed_t"] = T.matrix.tolist()
    config = TrainConfig.from_dict(tdict)
    report = train(config, train_ds, t_true=T)

    ev = EvalReport(accuracy(report.model, test_ds), average_tv(T, report.t_hat))
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(ev.metrics_csv())
    (out / "train_log.csv").write_text(report.records_csv())
    (out / "t_hat.json").write_text(_dump(report.t_hat.to_dict()))
    if report.posterior is not None:
        (out / "alpha.json").write_text(_dump(report.posterior.to_dict()))
    doc = {
        "config": {**cfg, "output_dir": str(out)},
        "seeds": {
            "data": cfg["data"].get("seed"),
            "noise": cfg["noise"]["seed"],
            "train": config.seed,
        },
        "t_true": {**T.to_dict(), "overall_noise_rate": overall_noise_rate(T)},
        "metrics": {"accuracy": ev.accuracy, "avg_tv": ev.avg_tv,
                    "final_reg": report.final_reg},
        **report.artifact(),
    }
    (out / "report.json").write_text(_dump(doc))
    return doc
