"""Command-line entry points for the exporter.

Subcommands: export (recording archive -> STEB dataset + optional split
manifest), generate-raw (synthetic recording archive for demos and tests),
models (list the frozen encoder registry).

Exit codes: 0 success; 2 bad usage or options; 3 missing or malformed data.
"""

import argparse
import sys

from tsfm_exporter.embedder import AGGREGATIONS, MODEL_WIDTHS
from tsfm_exporter.errors import DataError, ModelError, UsageError
from tsfm_exporter.export import ExportSpec, export
from tsfm_exporter.signals import TARGET_FS, TOKEN_LEN, generate_raw, save_raw

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


def cmd_export(args) -> int:
    spec = ExportSpec(
        input_path=args.input,
        output_path=args.out,
        model=args.model,
        aggregation=args.aggregation,
        token_len=args.token_len,
        target_fs=args.target_fs,
        manifest_path=args.manifest_out,
        train_frac=args.train_frac,
        val_frac=args.val_frac,
        split_seed=args.split_seed,
    )
    summary = export(spec)
    for key in ("n_samples", "S", "T", "ell", "n_classes", "output", "manifest"):
        if key in summary:
            print(f"{key}={summary[key]}")
    if "split_sizes" in summary:
        sizes = summary["split_sizes"]
        print(f"split_sizes=train:{sizes['train']} val:{sizes['val']} test:{sizes['test']}")
    return EXIT_OK


def cmd_generate_raw(args) -> int:
    rec = generate_raw(
        n_trials=args.trials,
        channels=args.channels,
        seconds=args.seconds,
        fs=args.fs,
        n_classes=args.classes,
        noise=args.noise,
        seed=args.seed,
    )
    save_raw(rec, args.out)
    print(f"n_trials={rec.signals.shape[0]}")
    print(f"channels={rec.signals.shape[1]}")
    print(f"n_samples={rec.signals.shape[2]}")
    print(f"fs={rec.fs}")
    print(f"n_classes={rec.n_classes}")
    print(f"output={args.out}")
    return EXIT_OK


def cmd_models(args) -> int:
    for model_id in sorted(MODEL_WIDTHS):
        print(f"{model_id}\twidth={MODEL_WIDTHS[model_id]}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="stamp-export",
                                     description="Export frozen-encoder embeddings to STEB datasets")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="embed a recording archive and write a STEB dataset")
    p.add_argument("--input", required=True, help="recording archive (.npz)")
    p.add_argument("--out", required=True, help="output STEB path")
    p.add_argument("--model", default="rnn-small", help=f"encoder id, one of {sorted(MODEL_WIDTHS)}")
    p.add_argument("--aggregation", default="mean", choices=AGGREGATIONS,
                   help="per-token aggregation of encoder states")
    p.add_argument("--token-len", type=int, default=TOKEN_LEN)
    p.add_argument("--target-fs", type=float, default=TARGET_FS)
    p.add_argument("--manifest-out", default=None, help="also write a split manifest here")
    p.add_argument("--train-frac", type=float, default=0.6)
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("generate-raw", help="write a synthetic recording archive")
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=24)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--seconds", type=float, default=4.0)
    p.add_argument("--fs", type=float, default=200.0)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate_raw)

    p = sub.add_parser("models", help="list available encoder ids and widths")
    p.set_defaults(func=cmd_models)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
