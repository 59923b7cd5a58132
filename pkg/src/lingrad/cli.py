"""Command-line front end: ``lingrad {gen-data,train,verify,export-plots}``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from .checkpoint import save_network
from .data import (generate_teacher_dataset, load_dataset, load_mnist_idx,
                   rng_streams, save_dataset)
from .net import ConfigurationError, random_network
from .trainer import TrainerConfig, train
from .verify import FAULTS, run_suite

log = logging.getLogger("lingrad")

HISTORY_HEADER = ["epoch", "minibatch", "psi", "epsilon", "objective"]
EPOCHS_HEADER = ["epoch", "test_metric"]
VERIFY_HEADER = ["check_name", "residual", "tolerance", "pass"]

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _fmt(x) -> str:
    # repr gives the shortest string that round-trips exactly.
    return "" if x is None else repr(float(x))


def _widths(text):
    try:
        widths = [int(w) for w in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad widths {text!r}")
    if len(widths) < 2 or min(widths) < 1:
        raise argparse.ArgumentTypeError(f"bad widths {text!r}")
    return widths


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _limit_threads():
    n = os.environ.get("LINGRAD_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(int(n))


# ------------------------------------------------------------------ commands

def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set, test_set, teacher = generate_teacher_dataset(
        args.widths, args.n_train, args.n_test, args.seed)
    paths = {"train": out / "train.lrd", "test": out / "test.lrd",
             "teacher": out / "teacher.lrn"}
    save_dataset(paths["train"], train_set)
    save_dataset(paths["test"], test_set)
    save_network(paths["teacher"], teacher)
    print(f"seed {args.seed}")
    for name, path in paths.items():
        print(f"{name} {path}")
    return 0


def _load_data(args):
    if args.dataset == "mnist":
        if not args.mnist_dir:
            raise ConfigurationError("mnist_dir: required for --dataset mnist")
        root = Path(args.mnist_dir)

        def find(name):
            for cand in (root / name, root / (name + ".gz")):
                if cand.exists():
                    return cand
            raise FileNotFoundError(f"{root / name}[.gz] not found")

        return tuple(load_mnist_idx(find(img), find(lab))
                     for img, lab in (MNIST_FILES["train"], MNIST_FILES["test"]))
    if args.data_dir:
        root = Path(args.data_dir)
        return load_dataset(root / "train.lrd"), load_dataset(root / "test.lrd")
    train_set, test_set, _ = generate_teacher_dataset(
        args.widths or [50, 50, 50, 50], args.n_train, args.n_test, args.seed)
    return train_set, test_set


def _trainer_config(args) -> TrainerConfig:
    psi0 = args.psi if args.psi is not None else args.psi0
    metric = "classification" if args.dataset == "mnist" else "distance"
    return TrainerConfig(epsilon_star=args.epsilon_star, batch_size=args.batch_size,
                         n_lin=args.n_lin, n_hist=args.n_hist, psi0=psi0,
                         epochs=args.epochs, seed=args.seed, algorithm=args.algorithm,
                         tangent=args.tangent, metric=metric)


def write_record(out: Path, record) -> None:
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for epoch, b, psi, eps, obj in record.rows:
            w.writerow([epoch, b, _fmt(psi), _fmt(eps), _fmt(obj)])
    with open(out / "epochs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPOCHS_HEADER)
        for epoch, metric in record.epochs:
            w.writerow([epoch, _fmt(metric)])


def cmd_train(args) -> int:
    config = _trainer_config(args)
    train_set, test_set = _load_data(args)
    widths = args.widths
    if widths is None:
        widths = [784, 30, 10] if args.dataset == "mnist" else [50, 50, 50, 50]
    net = random_network(widths, rng_streams(args.seed)["init"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(epoch, record):
        log.info("epoch %d  test_metric %.6g  psi %.4g", epoch, record.epochs[-1][1],
                 record.rows[-1][2])

    record = train(config, train_set, test_set, net, progress)
    write_record(out, record)
    save_network(out / "network.lrn", record.net)
    if args.plots:
        from .plots import export_plots
        export_plots(out)
    print(f"wrote {out / 'history.csv'} and {out / 'epochs.csv'}")
    return 0


def cmd_verify(args) -> int:
    seeds = args.seed if args.seed else [0]
    rows = []
    for seed in seeds:
        for r in run_suite(seed, fault=args.inject_fault):
            name = r.name if len(seeds) == 1 else f"{r.name}[seed={seed}]"
            rows.append([name, _fmt(r.residual), _fmt(r.tolerance),
                         "true" if r.passed else "false"])
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VERIFY_HEADER)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return 0 if all(r[3] == "true" for r in rows) else 1


def cmd_export_plots(args) -> int:
    from .plots import export_plots
    for path in export_plots(args.run):
        print(path)
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lingrad", description=__doc__)
    p.add_argument("--config", help="flat key=value file; explicit flags win")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a teacher dataset")
    g.add_argument("--widths", type=_widths, default=[50, 50, 50, 50])
    g.add_argument("--n-train", type=int, default=50_000)
    g.add_argument("--n-test", type=int, default=10_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="data")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train with linGrad or fixed-stepsize SGD")
    t.add_argument("--dataset", choices=["teacher", "mnist"], default="teacher")
    t.add_argument("--data-dir", help="directory written by gen-data")
    t.add_argument("--mnist-dir", help="directory holding the four MNIST IDX files")
    t.add_argument("--widths", type=_widths, default=None)
    t.add_argument("--n-train", type=int, default=50_000)
    t.add_argument("--n-test", type=int, default=10_000)
    t.add_argument("--algorithm", choices=["lingrad", "sgd"], default="lingrad")
    t.add_argument("--epsilon-star", type=float, default=0.3)
    t.add_argument("--batch-size", type=int, default=10)
    t.add_argument("--n-lin", type=int, default=100)
    t.add_argument("--n-hist", type=int, default=None)
    t.add_argument("--psi0", type=float, default=0.1)
    t.add_argument("--psi", type=float, default=None, help="fixed stepsize for sgd")
    t.add_argument("--epochs", type=int, default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--tangent", choices=["exact", "fd"], default=None)
    t.add_argument("--plots", action="store_true", help="also write SVG charts")
    t.add_argument("--out", default="run")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="run the identity suite")
    v.add_argument("--seed", type=int, action="append",
                   help="repeat to sweep several seeds (default 0)")
    v.add_argument("--out", help="CSV path (default stdout)")
    v.add_argument("--inject-fault", choices=FAULTS, default=None,
                   help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export-plots", help="SVG charts from a run directory")
    e.add_argument("--run", default="run")
    e.set_defaults(func=cmd_export_plots)
    return p


def _apply_config_file(parser, argv):
    pre, _ = parser.parse_known_args(argv)
    if not pre.config:
        return parser.parse_args(argv)
    values = read_config_file(pre.config)
    sub = parser._subparsers._group_actions[0].choices[pre.command]
    actions = {a.dest: a for a in sub._actions}
    for key, raw in values.items():
        if key not in actions or key == "help":
            raise ConfigurationError(f"{key}: unknown config key")
        action = actions[key]
        try:
            if action.const is True and action.nargs == 0:
                value = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                value = action.type(raw)
            else:
                value = raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigurationError(f"{key}: {exc}")
        if isinstance(action, argparse._AppendAction):
            value = [value]
        if action.choices is not None and value not in action.choices:
            raise ConfigurationError(f"{key}: {raw!r} not in {sorted(action.choices)}")
        sub.set_defaults(**{key: value})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = _limit_threads()
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
