"""SVG figures from metrics CSVs, with byte-stable output."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from psrolab.errors import ConfigError  # noqa: E402

SVG_SALT = "psrolab"


def _stable_svg(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def read_series(path, x: str = "iteration", y: str = "exploitability"):
    """(xs, ys) from a metrics CSV; raises ConfigError on a missing column or empty body."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (x, y):
            if col not in header:
                raise ConfigError(f"{path}: missing column {col!r} (have {', '.join(header)})")
        rows = [r for r in reader if r.get(y, "") != ""]
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return [float(r[x]) for r in rows], [float(r[y]) for r in rows]


def plot_curves(paths, out, y: str = "exploitability", title: str | None = None):
    """One line per CSV, legend from file stems in input order."""
    series = [(Path(p).stem, *read_series(p, y=y)) for p in paths]
    if not series:
        raise ConfigError("no input CSVs")
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, xs, ys in series:
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel(y)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _stable_svg(fig, out)
    return out


def plot_uplift(rows, out, title: str | None = None):
    """Utility against the opponent meta-strategy per population iteration.

    One panel per player and one line per method; ``rows`` are dicts with
    keys iteration, player, method, utility, stderr.
    """
    if not rows:
        raise ConfigError("no rows to plot")
    methods = list(dict.fromkeys(r["method"] for r in rows))
    players = sorted({int(r["player"]) for r in rows})
    fig, axes = plt.subplots(1, len(players), figsize=(5 * len(players), 4), squeeze=False)
    for ax, p in zip(axes[0], players):
        for m in methods:
            sel = sorted((int(r["iteration"]), float(r["utility"]), float(r["stderr"]))
                         for r in rows if r["method"] == m and int(r["player"]) == p)
            xs, ys, es = zip(*sel)
            ax.errorbar(xs, ys, yerr=es, marker="o", markersize=3, capsize=3, label=m)
        ax.set_xlabel("population iteration")
        ax.set_ylabel("utility vs meta-strategy")
        ax.set_title(f"player {p}")
        ax.grid(True, alpha=0.3)
        ax.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    _stable_svg(fig, out)
    return out
