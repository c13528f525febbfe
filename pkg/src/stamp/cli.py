"""Command-line entry points.

Subcommands: train, evaluate, ablate, gradcheck, generate-synthetic,
param-count, inspect. Runs are driven by a flat key=value config file
with flag overrides (flags win); every run directory receives the fully
resolved configuration so a run can be reproduced from it alone.

Exit codes: 0 success; 1 a check ran and failed (gradcheck); 2 bad usage
or configuration; 3 missing or malformed data; 4 training aborted on a
non-finite loss or gradient.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import data as D
from . import metrics as M
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    StampError,
    TrainingAbort,
    UsageError,
)
from .gradcheck import TINY_CONFIG, gradcheck_model
from .model import StampConfig, StampModel, param_count, table_specs
from .training import SEEDS, fit, predict_probs

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_ABORTED = 4

# training + model defaults; the published hyperparameter set
DEFAULTS = {
    "D": 128, "L": 8, "h": 256, "A": 4, "Q": 8,
    "pe_mode": "NST", "mixer": "cc_gmlp", "aggregator": "mhap",
    "lambda_mix": 0.5, "dropout": 0.3,
    "epochs": 50, "batch_size": 64,
    "initial_lr": 5e-5, "max_lr": 3e-4, "pct_start": 0.3,
    "weight_decay": 0.05,
    "seeds": list(SEEDS),
    "zscore": False,
}

_COERCE = {
    "D": int, "L": int, "h": int, "A": int, "Q": int,
    "epochs": int, "batch_size": int,
    "lambda_mix": float, "dropout": float, "initial_lr": float,
    "max_lr": float, "pct_start": float, "weight_decay": float,
    "pe_mode": str, "mixer": str, "aggregator": str,
}

AXIS_VARIANTS = {
    "pe": [("pe_mode", v) for v in ("none", "N", "ST", "NST")],
    "mixer": [("mixer", v) for v in ("b_gmlp", "cc_gmlp")],
    "aggregator": [("aggregator", v) for v in ("mean", "mhap")],
    "D": [("D", v) for v in (8, 16, 32, 64, 128)],
}


def _parse_seeds(text):
    try:
        return [int(s) for s in str(text).replace(",", " ").split()]
    except ValueError as e:
        raise UsageError(f"bad seed list {text!r}: {e}") from e


def _coerce(key, raw):
    if key == "seeds":
        return _parse_seeds(raw)
    if key == "zscore":
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"bad boolean for zscore: {raw!r}")
    if key not in _COERCE:
        raise UsageError(f"unknown config key {key!r}")
    try:
        return _COERCE[key](raw)
    except ValueError as e:
        raise UsageError(f"bad value for {key}: {raw!r}") from e


def _read_config_file(path):
    out = {}
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, raw = (part.strip() for part in line.split("=", 1))
                out[key] = _coerce(key, raw)
    except OSError as e:
        raise DataError(f"cannot read config file {path}: {e}") from e
    return out


def _resolve(args, overrides=None):
    """defaults < command overrides < config file < explicit flags."""
    resolved = dict(DEFAULTS)
    if overrides:
        resolved.update(overrides)
    if getattr(args, "config", None):
        resolved.update(_read_config_file(args.config))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def _echo_config(resolved, extra, path):
    with open(path, "w", encoding="utf-8") as f:
        for key in sorted({**resolved, **extra}):
            value = {**resolved, **extra}[key]
            if key == "seeds":
                value = ",".join(str(s) for s in value)
            f.write(f"{key}={value}\n")


def _model_config(resolved, dims, n_classes):
    s, t, ell = (int(v) for v in dims)
    return StampConfig(
        S=s, T=t, ell=ell, n_classes=int(n_classes),
        D=resolved["D"], L=resolved["L"], h=resolved["h"],
        A=resolved["A"], Q=resolved["Q"], pe_mode=resolved["pe_mode"],
        mixer=resolved["mixer"], aggregator=resolved["aggregator"],
        lambda_mix=resolved["lambda_mix"], dropout=resolved["dropout"],
    )


def _load_splits(args, resolved):
    dataset = D.read_dataset(args.dataset, zscore=resolved["zscore"])
    manifest_path = args.manifest or args.dataset + ".manifest.json"
    if not os.path.exists(manifest_path):
        raise DataError(
            f"no split manifest: pass --manifest or provide {manifest_path}"
        )
    manifest = D.SplitManifest.load(manifest_path)
    return dataset, manifest_path, manifest.apply(dataset)


def _report_json(report):
    return {
        "task": report.task,
        "n_samples": report.n_samples,
        "metrics": report.metrics,
        "confusion": report.confusion.tolist(),
    }


def _aggregate_json(agg):
    return {
        "task": agg.task,
        "n_reports": agg.n_reports,
        "metrics": {k: {"mean": m, "std": s} for k, (m, s) in agg.stats.items()},
    }


def _train_seeds(resolved, splits, out_dir, seeds, verbose=False):
    """One full run per seed; returns (reports, states)."""
    train, val, test = splits
    cfg = _model_config(resolved, train.dims, train.n_classes)
    reports, states = [], []
    for seed in seeds:
        seed_dir = os.path.join(out_dir, f"seed{seed}")
        os.makedirs(seed_dir, exist_ok=True)
        model = StampModel(cfg, seed=seed)
        lines = []

        def log(line, _lines=lines):
            _lines.append(line)
            if verbose:
                print(line)

        state = fit(
            model, train, val, seed=seed,
            epochs=resolved["epochs"], batch_size=resolved["batch_size"],
            initial_lr=resolved["initial_lr"], max_lr=resolved["max_lr"],
            pct_start=resolved["pct_start"],
            weight_decay=resolved["weight_decay"], log_fn=log,
        )
        with open(os.path.join(seed_dir, "train.log"), "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        model.save(os.path.join(seed_dir, "checkpoint.stmp"))
        report = M.evaluate(test.labels, predict_probs(model, test.embeddings))
        with open(os.path.join(seed_dir, "report.txt"), "w", encoding="utf-8") as f:
            f.write(report.to_text() + "\n")
        with open(os.path.join(seed_dir, "report.json"), "w", encoding="utf-8") as f:
            json.dump(_report_json(report), f, indent=2)
        reports.append(report)
        states.append(state)
        if state.aborted:
            raise TrainingAbort(f"seed {seed}: {state.aborted}")
    return reports, states


def cmd_train(args):
    resolved = _resolve(args)
    dataset, manifest_path, splits = _load_splits(args, resolved)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    _echo_config(
        resolved,
        {"dataset": args.dataset, "manifest": manifest_path, "out": out_dir},
        os.path.join(out_dir, "config.txt"),
    )
    seeds = resolved["seeds"]
    reports, _ = _train_seeds(resolved, splits, out_dir, seeds, args.verbose)
    agg = M.aggregate_seeds(reports)
    with open(os.path.join(out_dir, "aggregate.txt"), "w", encoding="utf-8") as f:
        f.write(agg.to_text() + "\n")
    with open(os.path.join(out_dir, "aggregate.json"), "w", encoding="utf-8") as f:
        json.dump(_aggregate_json(agg), f, indent=2)
    print(agg.to_text())
    return EXIT_OK


def cmd_evaluate(args):
    resolved = _resolve(args)
    model = StampModel.load(args.checkpoint)
    dataset = D.read_dataset(args.dataset, zscore=resolved["zscore"])
    if args.manifest:
        manifest = D.SplitManifest.load(args.manifest)
        split = dict(zip(("train", "val", "test"), manifest.apply(dataset)))[args.split]
    else:
        split = dataset
    c = model.config
    if split.dims != (c.S, c.T, c.ell) or split.n_classes != c.n_classes:
        raise DataError(
            f"dataset dims {split.dims} x {split.n_classes} classes do not match "
            f"checkpoint ({c.S}, {c.T}, {c.ell}) x {c.n_classes}"
        )
    report = M.evaluate(split.labels, predict_probs(model, split.embeddings))
    print(report.to_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(_report_json(report), f, indent=2)
    return EXIT_OK


def cmd_ablate(args):
    # ablations default to three seeds; a config file or flag still wins
    resolved = _resolve(args, overrides={"seeds": list(SEEDS[:3])})
    if args.axis not in AXIS_VARIANTS:
        raise UsageError(f"unknown axis {args.axis!r}; choose from {sorted(AXIS_VARIANTS)}")
    dataset, manifest_path, splits = _load_splits(args, resolved)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    seeds = resolved["seeds"]
    rows = []
    for key, value in AXIS_VARIANTS[args.axis]:
        variant = dict(resolved)
        variant[key] = value
        variant_dir = os.path.join(out_dir, f"{args.axis}_{value}")
        os.makedirs(variant_dir, exist_ok=True)
        _echo_config(
            variant,
            {"dataset": args.dataset, "manifest": manifest_path, "out": variant_dir},
            os.path.join(variant_dir, "config.txt"),
        )
        reports, _ = _train_seeds(variant, splits, variant_dir, seeds, args.verbose)
        agg = M.aggregate_seeds(reports)
        cfg = _model_config(variant, splits[0].dims, splits[0].n_classes)
        rows.append({"variant": str(value), "params": param_count(cfg),
                     "metrics": _aggregate_json(agg)["metrics"]})
    names = list(rows[0]["metrics"])
    header = ["variant", "params"] + [f"{n}(mean+/-std)" for n in names]
    lines = ["\t".join(header)]
    for row in rows:
        cells = [row["variant"], str(row["params"])]
        cells += [f"{row['metrics'][n]['mean']:.4f}+/-{row['metrics'][n]['std']:.4f}"
                  for n in names]
        lines.append("\t".join(cells))
    table = "\n".join(lines)
    print(table)
    with open(os.path.join(out_dir, "ablation.txt"), "w", encoding="utf-8") as f:
        f.write(table + "\n")
    with open(os.path.join(out_dir, "ablation.json"), "w", encoding="utf-8") as f:
        json.dump({"axis": args.axis, "seeds": seeds, "rows": rows}, f, indent=2)
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = dataclasses.replace(
        TINY_CONFIG,
        pe_mode=args.pe_mode or TINY_CONFIG.pe_mode,
        mixer=args.mixer or TINY_CONFIG.mixer,
        aggregator=args.aggregator or TINY_CONFIG.aggregator,
    )
    report = gradcheck_model(cfg, seed=args.seed, step=args.step, tol=args.tol)
    print(report.to_text())
    if report.passed:
        return EXIT_OK
    print(
        f"FAILED: worst coordinate {report.worst_table}{list(report.worst_index)} "
        f"rel err {report.worst_rel:.3e} >= tol {report.tol:.1e}",
        file=sys.stderr,
    )
    return EXIT_CHECK_FAILED


def cmd_generate(args):
    common = dict(
        S=args.S, T=args.T, ell=args.ell, n_classes=args.classes,
        n_samples=args.samples, noise=args.noise, amplitude=args.amplitude,
        seed=args.seed, train_frac=args.train_frac, val_frac=args.val_frac,
    )
    if args.kind == "interaction":
        dataset, manifest = D.generate_interaction_dataset(
            distractors=not args.no_distractors, **common
        )
    else:
        dataset, manifest = D.generate_separable_dataset(**common)
    D.write_dataset(dataset, args.out)
    manifest_path = args.manifest_out or args.out + ".manifest.json"
    manifest.save(manifest_path)
    print(
        f"wrote {len(dataset)} samples "
        f"(S={args.S}, T={args.T}, ell={args.ell}, classes={args.classes}) "
        f"to {args.out}; manifest {manifest_path}"
    )
    return EXIT_OK


def cmd_param_count(args):
    resolved = _resolve(args)
    cfg = _model_config(resolved, (args.S, args.T, args.ell), args.classes)
    total = param_count(cfg)
    if args.per_table:
        for spec in table_specs(cfg):
            print(f"{spec.name}\t{int(np.prod(spec.shape))}")
    print(total)
    return EXIT_OK


def cmd_inspect(args):
    with open(args.dataset, "rb") as f:
        n, s, t, ell, n_classes, meta = D._read_header(f, args.dataset)
        header_end = f.tell()
        f.seek(0, os.SEEK_END)
        actual = f.tell() - header_end
    expected = n * (s * t * ell * 4 + 4)
    print(f"n_samples={n}")
    print(f"S={s}")
    print(f"T={t}")
    print(f"ell={ell}")
    print(f"n_classes={n_classes}")
    print(f"payload_bytes={actual} (expected {expected})")
    for key in sorted(set(meta) - {"sample_ids"}):
        print(f"meta.{key}={meta[key]}")
    if actual != expected:
        raise FormatError(
            f"{args.dataset}: payload length {actual} does not match "
            f"header ({expected} bytes for {n} samples)"
        )
    return EXIT_OK


def _add_model_flags(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--D", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--h", type=int)
    p.add_argument("--A", type=int)
    p.add_argument("--Q", type=int)
    p.add_argument("--pe-mode", dest="pe_mode", choices=("none", "N", "ST", "NST"))
    p.add_argument("--mixer", choices=("none", "b_gmlp", "cc_gmlp"))
    p.add_argument("--aggregator", choices=("mean", "mhap"))
    p.add_argument("--lambda-mix", dest="lambda_mix", type=float)
    p.add_argument("--dropout", type=float)


def _add_train_flags(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--initial-lr", dest="initial_lr", type=float)
    p.add_argument("--max-lr", dest="max_lr", type=float)
    p.add_argument("--pct-start", dest="pct_start", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--seeds", type=_parse_seeds)
    p.add_argument("--zscore", action="store_const", const=True, default=None)
    p.add_argument("--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stamp",
        description="Train and evaluate a spatial-temporal adapter on "
                    "frozen time-series-model EEG embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train over a seed list and aggregate reports")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", help="also write the report as JSON here")
    p.add_argument("--config")
    p.add_argument("--zscore", action="store_const", const=True, default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="train every variant along one axis")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--axis", required=True, choices=sorted(AXIS_VARIANTS))
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pe-mode", dest="pe_mode", choices=("none", "N", "ST", "NST"))
    p.add_argument("--mixer", choices=("none", "b_gmlp", "cc_gmlp"))
    p.add_argument("--aggregator", choices=("mean", "mhap"))
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("generate-synthetic", help="write a synthetic dataset + manifest")
    p.add_argument("--kind", choices=("interaction", "separable"), default="interaction")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest-out", dest="manifest_out")
    p.add_argument("--S", type=int, default=8)
    p.add_argument("--T", type=int, default=4)
    p.add_argument("--ell", type=int, default=32)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-frac", dest="train_frac", type=float, default=0.6)
    p.add_argument("--val-frac", dest="val_frac", type=float, default=0.2)
    p.add_argument("--no-distractors", action="store_true")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("param-count", help="closed-form trainable parameter count")
    p.add_argument("--S", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-table", dest="per_table", action="store_true")
    _add_model_flags(p)
    p.set_defaults(fn=cmd_param_count)

    p = sub.add_parser("inspect", help="print a dataset file's header")
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_inspect)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:   # raised by flag value parsers
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingAbort as e:
        print(f"error: training aborted: {e}", file=sys.stderr)
        return EXIT_ABORTED
    except StampError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
