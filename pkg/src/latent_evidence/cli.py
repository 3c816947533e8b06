"""``latent-evidence`` command line: generate, train, evaluate, sweep, gradcheck.

Exit codes: 0 success, 1 gradient check failure, 2 usage or configuration
error, 3 numerical failure (non-finite loss).
"""

import argparse
import os
import sys
from pathlib import Path

from . import gradcheck as gc
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import SPLITS, GenConfig, generate_corpus, read_jsonl, write_jsonl
from .errors import ConfigurationError, LatentEvidenceError, NumericalError
from .evaluation import budget_sweep, evaluate, metrics_csv, sweep_csv, write_csv
from .extractors import KINDS
from .io import atomic_write_text
from .plotting import plot_metrics, plot_sweep, plot_training, png_path
from .training import TrainConfig

DATA_ENV = "LATENT_EVIDENCE_DATA"
EXIT_OK, EXIT_GRADCHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _data_default():
    return os.environ.get(DATA_ENV, "data")


def _read_split(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"dataset file not found: {path}")
    return read_jsonl(path)


def _read_dir(root, splits=SPLITS):
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"data directory not found: {root}")
    return {name: _read_split(root / f"{name}.jsonl") for name in splits}


def cmd_generate(args):
    cfg = GenConfig(n_train=args.train, n_dev=args.dev, n_test=args.test,
                    docs_per_claim=args.docs_per_claim, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, items in generate_corpus(cfg).items():
        write_jsonl(out / f"{name}.jsonl", items)
        print(f"{name}: {len(items)}")
    return EXIT_OK


def _train_config(args):
    overrides = {"seed": args.seed}
    for flag, key in (("extractor", "extractor"), ("budget", "budget_k"), ("epochs", "epochs"),
                      ("lr", "learning_rate"), ("verifier", "verifier")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.freeze_r:
        overrides["freeze_r"] = True
    if args.config:
        if not Path(args.config).is_file():
            raise ConfigurationError(f"config file not found: {args.config}")
        return TrainConfig.from_file(args.config, overrides)
    return TrainConfig.from_mapping(overrides)


def cmd_train(args):
    config = _train_config(args)
    data = _read_dir(args.data, ("train", "dev"))
    from .training import joint_train

    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    params, report = joint_train(data, config, log=log)
    ckpt = Path(args.out)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, params)
    report_csv = ckpt.with_suffix(".report.csv")
    atomic_write_text(report_csv, report.to_csv())
    if report.train_loss:
        plot_training(report, png_path(report_csv))
    print(f"checkpoint: {ckpt}")
    print(f"report: {report_csv}")
    if report.dev_macro_f1:
        print(f"final dev macro-F1 {report.dev_macro_f1[-1]:.4f} evidence F1 {report.dev_evidence_f1[-1]:.4f}")
    return EXIT_OK


def cmd_evaluate(args):
    params = load_checkpoint(args.ckpt)
    items = _read_split(args.data)
    from .model import encode_all

    rep = evaluate(encode_all(items, params.config), params, args.verifier)
    print(f"macro-F1 {rep.macro_f1:.4f}")
    print(f"evidence F1 {rep.evidence_f1:.4f}")
    if args.out:
        write_csv(args.out, metrics_csv([rep]))
        plot_metrics(rep, png_path(args.out))
    return EXIT_OK


def _k_list(text):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError("K list must be nonempty and nonnegative")
    return values


def cmd_sweep(args):
    params = load_checkpoint(args.ckpt)
    items = _read_dir(args.data, (args.split,))[args.split]
    from .model import encode_all

    rows, claim_only = budget_sweep(encode_all(items, params.config), params, args.k_values, args.verifier)
    for row in rows:
        print(f"K={row[0]}: macro-F1 {row[1]:.4f} evidence F1 {row[2]:.4f} selected {row[3]:.2f}")
    print(f"claim only: macro-F1 {claim_only:.4f}")
    if args.out:
        write_csv(args.out, sweep_csv(rows))
        plot_sweep(rows, claim_only, png_path(args.out))
    return EXIT_OK


def cmd_gradcheck(args):
    results = gc.run_all(cases=args.cases, seed=args.seed, inject_bug=args.inject_bug)
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:15s} cases={r.cases} rejected={r.rejected} max_rel_error={r.max_error:.3e} {status}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_GRADCHECK


def build_parser():
    p = argparse.ArgumentParser(prog="latent-evidence", description="Latent evidence extraction for claim verification.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic corpus as train/dev/test JSONL")
    g.add_argument("--out", default=None, help=f"output directory (default ${DATA_ENV} or ./data)")
    g.add_argument("--train", type=int, default=2000)
    g.add_argument("--dev", type=int, default=200)
    g.add_argument("--test", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--docs-per-claim", type=int, default=3)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="jointly train an extractor and verifier")
    t.add_argument("--data", default=None, help=f"directory with train/dev JSONL (default ${DATA_ENV})")
    t.add_argument("--extractor", choices=None, default=None, help=f"one of: {', '.join(KINDS)}")
    t.add_argument("--budget", type=int, default=None, help="budget K for the SCALE extractor")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lr", type=float, default=None, help="initial learning rate")
    t.add_argument("--verifier", default=None, help="mlp, graph or both (default both)")
    t.add_argument("--freeze-r", action="store_true", help="keep the pair weight fixed")
    t.add_argument("--config", default=None, help="key = value config file")
    t.add_argument("--out", default="model.ckpt", help="checkpoint path")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on one JSONL split")
    e.add_argument("--data", required=True, help="JSONL file")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--verifier", choices=("mlp", "graph"), default=None)
    e.add_argument("--out", default=None, help="metrics CSV (a PNG is written beside it)")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="re-solve a checkpoint over several budgets")
    s.add_argument("--data", default=None, help=f"data directory (default ${DATA_ENV})")
    s.add_argument("--split", choices=SPLITS, default="test")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--k-values", type=_k_list, default=[0, 2, 4, 8, 16], help="comma-separated budgets")
    s.add_argument("--verifier", choices=("mlp", "graph"), default=None)
    s.add_argument("--out", default=None, help="sweep CSV (a PNG is written beside it)")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--cases", type=int, default=50)
    c.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("data", "out"):
        if hasattr(args, name) and getattr(args, name) is None and args.command in ("generate", "train", "sweep"):
            if name == "data" or args.command == "generate":
                setattr(args, name, _data_default())
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LatentEvidenceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
