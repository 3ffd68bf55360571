"""Command-line entry point: ``tvnoise <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import sys
from pathlib import Path

from .datagen import GaussianMixtureSpec, corrupt_labels, load_csv, sample_mixture, save_csv
from .errors import ConfigError, InvalidRate, TVNoiseError
from .evaluate import EvalReport, accuracy, consistency_sweep, overconfidence_report, sweep_csv
from .experiment import build_data, load_config, resolve_config, run_experiment
from .model import MlpClassifier
from .trainer import METHODS, TrainConfig
from .transition import NOISE_KINDS, TransitionMatrix, average_tv, make_noise, overall_noise_rate


class UsageError(Exception):
    pass


def _rate(flag):
    def parse(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} must be a number, got {text!r}") from None
        if not 0.0 <= v < 1.0:
            raise argparse.ArgumentTypeError(f"{flag} must be in [0, 1), got {v}")
        return v
    return parse


def _n_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--n-list must be comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
        raise argparse.ArgumentTypeError("--n-list must be strictly increasing positive integers")
    return vals


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_matrix(path):
    return TransitionMatrix.from_dict(json.loads(Path(path).read_text()))


def _load_model(path):
    doc = json.loads(Path(path).read_text())
    return MlpClassifier.from_dict(doc["model"] if "model" in doc else doc)


# ---------------------------------------------------------------------------


def cmd_gen_noise(args):
    if args.k < 2:
        raise UsageError(f"--k must be >= 2, got {args.k}")
    rate = args.r1 if args.kind == "pair2" else args.rate
    if args.kind not in ("clean",) and rate is None:
        raise UsageError("--r1 is required for pair2" if args.kind == "pair2"
                         else f"--rate is required for {args.kind}")
    if args.kind == "pair2" and args.r2 is None:
        raise UsageError("--r2 is required for pair2")
    if args.kind == "random" and args.concentration is None:
        raise UsageError("--concentration is required for random")
    try:
        T = make_noise(args.kind, args.k, rate=rate, rate2=args.r2,
                       concentration=args.concentration, seed=args.seed)
    except InvalidRate as exc:
        flag = "--r1/--r2" if args.kind == "pair2" else "--rate"
        raise UsageError(f"{flag}: {exc}") from None
    doc = {**T.to_dict(), "kind": args.kind, "overall_noise_rate": overall_noise_rate(T)}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_data(args):
    if args.mixture:
        spec = GaussianMixtureSpec.from_json(Path(args.mixture).read_text())
    else:
        spec = GaussianMixtureSpec.default(sigma=args.sigma, side=args.side)
    ds = sample_mixture(spec, args.n, args.seed)
    save_csv(ds, args.out)
    if args.spec_out:
        _write(args.spec_out, spec.to_json() + "\n")
    return 0


def cmd_corrupt(args):
    ds = load_csv(args.data)
    T = _load_matrix(args.t)
    if ds.K < T.K:
        ds = type(ds)(ds.features, ds.clean_labels, ds.noisy_labels, T.K)
    save_csv(corrupt_labels(ds, T, args.seed), args.out)
    return 0


def cmd_train(args):
    raw = load_config(args.config)
    train_raw = raw.setdefault("train", {})
    for flag, key in (("method", "method"), ("iterations", "iterations"),
                      ("seed", "seed"), ("gamma", "gamma")):
        v = getattr(args, flag)
        if v is not None:
            train_raw[key] = v
    cfg = resolve_config(raw)
    out = args.out or cfg["output_dir"]
    if not out:
        raise ConfigError("no output directory: set 'output_dir' or pass --out")
    doc = run_experiment(cfg, out)
    m = doc["metrics"]
    print(f"accuracy={m['accuracy']:.4f} avg_tv={m['avg_tv']:.4f} -> {out}")
    return 0


def cmd_sweep(args):
    raw = load_config(args.config)
    cfg = resolve_config(raw)
    if cfg["data"]["source"] != "mixture":
        raise ConfigError("sweep needs a synthetic mixture data source")
    _, _, T, spec = build_data({**cfg, "data": {**cfg["data"], "n": 1, "n_test": 1}})
    tdict = dict(cfg["train"])
    if tdict["method"] == "Forward" and tdict.get("fixed_t") is None:
        tdict["fixed_t"] = T.matrix.tolist()
    config = TrainConfig.from_dict(tdict)
    rows, per_seed = consistency_sweep(config, spec, T, args.n_list, args.seeds)
    out = Path(args.out or cfg["output_dir"] or ".")
    _write(out / "sweep.csv", sweep_csv(rows))
    lines = ["N,seed,avg_tv"] + [f"{N},{s},{v!r}" for N, vals in per_seed.items()
                                 for s, v in enumerate(vals)]
    _write(out / "sweep_per_seed.csv", "\n".join(lines) + "\n")
    for N, med in rows:
        print(f"N={N} median_avg_tv={med:.4f}")
    return 0


def cmd_eval(args):
    model = _load_model(args.report)
    ds = load_csv(args.data, K=model.K)
    avg = None
    if args.t:
        doc = json.loads(Path(args.report).read_text())
        avg = average_tv(_load_matrix(args.t), TransitionMatrix.from_dict(doc["t_hat"]))
    ev = EvalReport(accuracy(model, ds), avg)
    _write(args.out, ev.metrics_csv())
    return 0


def cmd_hull_report(args):
    model = _load_model(args.report)
    ds = load_csv(args.data, K=model.K)
    rate, dist = overconfidence_report(model, _load_matrix(args.t), ds.features, args.tol)
    ev = EvalReport(float("nan"), hull_violation_rate=rate, mean_hull_distance=dist)
    _write(args.out, ev.hull_csv())
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="tvnoise", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-noise", help="write a noise transition matrix as JSON")
    g.add_argument("--kind", required=True, choices=NOISE_KINDS, help="noise family")
    g.add_argument("--k", type=int, required=True, help="number of classes K (>= 2)")
    g.add_argument("--rate", type=_rate("--rate"), help="noise rate for symmetric/pair/tridiagonal/random")
    g.add_argument("--r1", type=_rate("--r1"), help="first pair-flip rate for pair2")
    g.add_argument("--r2", type=_rate("--r2"), help="second pair-flip rate for pair2")
    g.add_argument("--concentration", type=float, help="Dirichlet concentration for random noise")
    g.add_argument("--seed", type=int, default=0, help="seed for random noise")
    g.add_argument("--out", help="output JSON path (default: stdout)")
    g.set_defaults(func=cmd_gen_noise)

    g = sub.add_parser("gen-data", help="sample a Gaussian-mixture dataset to CSV")
    g.add_argument("--n", type=int, required=True, help="number of samples")
    g.add_argument("--seed", type=int, default=0, help="sampling seed")
    g.add_argument("--mixture", help="mixture spec JSON (default: 3-component triangle)")
    g.add_argument("--sigma", type=float, default=1.0, help="component std for the default mixture")
    g.add_argument("--side", type=float, default=6.0, help="triangle side in units of sigma")
    g.add_argument("--spec-out", help="also write the mixture spec JSON here")
    g.add_argument("--out", required=True, help="output CSV path")
    g.set_defaults(func=cmd_gen_data)

    g = sub.add_parser("corrupt", help="add class-conditional noisy labels to a CSV dataset")
    g.add_argument("--data", required=True, help="input CSV with clean labels")
    g.add_argument("--t", required=True, help="transition matrix JSON")
    g.add_argument("--seed", type=int, default=0, help="corruption seed")
    g.add_argument("--out", required=True, help="output CSV path")
    g.set_defaults(func=cmd_corrupt)

    for name in ("train", "run"):
        g = sub.add_parser(name, help="run an experiment config end to end")
        g.add_argument("config", help="experiment config JSON")
        g.add_argument("--out", help="output directory (overrides output_dir)")
        g.add_argument("--method", choices=METHODS, help="override train.method")
        g.add_argument("--iterations", type=int, help="override train.iterations")
        g.add_argument("--seed", type=int, help="override train.seed")
        g.add_argument("--gamma", type=float, help="override train.gamma")
        g.set_defaults(func=cmd_train)

    g = sub.add_parser("sweep", help="median avg-TV across training-set sizes")
    g.add_argument("config", help="experiment config JSON (mixture data)")
    g.add_argument("--n-list", type=_n_list, required=True, help="comma-separated sizes, increasing")
    g.add_argument("--seeds", type=int, default=3, help="number of seeds per size")
    g.add_argument("--out", help="output directory for sweep.csv")
    g.set_defaults(func=cmd_sweep)

    g = sub.add_parser("eval", help="accuracy (and avg-TV) of a trained report on a CSV test set")
    g.add_argument("--report", required=True, help="report.json from train")
    g.add_argument("--data", required=True, help="CSV test set with clean labels")
    g.add_argument("--t", help="true transition matrix JSON, for avg_tv")
    g.add_argument("--out", required=True, help="output metrics.csv path")
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("hull-report", help="overconfidence: predictions outside Conv(T)")
    g.add_argument("--report", required=True, help="report.json whose model predicts noisy posteriors")
    g.add_argument("--t", required=True, help="true transition matrix JSON")
    g.add_argument("--data", required=True, help="CSV with the evaluation features")
    g.add_argument("--tol", type=float, default=1e-9, help="membership tolerance")
    g.add_argument("--out", required=True, help="output hull.csv path")
    g.set_defaults(func=cmd_hull_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seeds", 1) is not None and getattr(args, "seeds", 1) < 1:
        parser.error("--seeds must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (TVNoiseError, OSError, KeyError, ValueError) as exc:
        kind = type(exc).__name__
        print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
