"""Static SVG charts of a training run."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed element ids and no timestamp keep the files byte-stable across runs.
_SVG_RC = {"svg.hashsalt": "lingrad", "svg.fonttype": "path"}


def read_history(path):
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append((int(r["epoch"]), int(r["minibatch"]), float(r["psi"]),
                         float(r["epsilon"]) if r["epsilon"] else None,
                         float(r["objective"])))
    return rows


def read_epochs(path):
    with open(path, newline="") as fh:
        return [(int(r["epoch"]), float(r["test_metric"])) for r in csv.DictReader(fh)]


def _save(fig, path):
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_objective(epochs, history, path, label="test metric"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([e for e, _ in epochs], [m for _, m in epochs], marker="o", label=label)
    if history:
        by_epoch = {}
        for e, _, _, _, obj in history:
            by_epoch.setdefault(e, []).append(obj)
        ax.plot(sorted(by_epoch), [sum(v) / len(v) for _, v in sorted(by_epoch.items())],
                label="mean minibatch objective")
    ax.set_xlabel("epoch")
    ax.set_yscale("log")
    ax.legend()
    _save(fig, path)


def plot_stepsize(history, path):
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    steps = range(len(history))
    top.plot(steps, [r[2] for r in history])
    top.set_yscale("log")
    top.set_ylabel("stepsize")
    measured = [(n, r[3]) for n, r in enumerate(history) if r[3] is not None]
    if measured:
        bottom.plot(*zip(*measured), ".", markersize=3)
    bottom.set_ylabel("nonlinear measurement")
    bottom.set_xlabel("minibatch")
    _save(fig, path)


def export_plots(run_dir) -> list:
    run_dir = Path(run_dir)
    history = read_history(run_dir / "history.csv")
    epochs = read_epochs(run_dir / "epochs.csv")
    out = [run_dir / "objective.svg", run_dir / "stepsize.svg"]
    plot_objective(epochs, history, out[0])
    plot_stepsize(history, out[1])
    return out
