"""Plot-ready series files and rendered loss-versus-size figures.

Series files are plain `x y` pairs, one file per solver and metric, so any
external plotter can consume them.  The rendered figures are written as
PNGs next to the delimited output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .fileio import format_float

METRICS = ("train", "test", "ge")

_METRIC_LABELS = {
    "train": "training loss",
    "test": "testing loss",
    "ge": "generalization error",
}

_SOLVER_LABELS = {"mc": "MC", "kmc": "KMC", "kkmcex": "KKMCEX"}

_STYLES = {
    "mc": {"color": "tab:blue", "marker": "x"},
    "kmc": {"color": "tab:red", "marker": "s"},
    "kkmcex": {"color": "tab:green", "marker": "D"},
}


def _series(rows, solver, metric):
    mean_attr = f"{metric}_mean"
    pts = [(r.n_rows, getattr(r, mean_attr)) for r in rows if r.solver == solver]
    return sorted(pts)


def write_series_files(rows, out_dir) -> list:
    """One `x y` file per (solver, metric); returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    solvers = sorted({r.solver for r in rows})
    paths = []
    for solver in solvers:
        for metric in METRICS:
            path = out_dir / f"series_{solver}_{metric}.dat"
            with open(path, "w") as handle:
                for x, y in _series(rows, solver, metric):
                    handle.write(f"{x} {format_float(y)}\n")
            paths.append(path)
    return paths


def render_figures(rows, out_dir, stem: str = "fig") -> list:
    """Render one PNG per metric with a curve per solver."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    solvers = sorted({r.solver for r in rows})
    paths = []
    for metric in METRICS:
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for solver in solvers:
            pts = _series(rows, solver, metric)
            if not pts:
                continue
            xs, ys = zip(*pts)
            style = _STYLES.get(solver, {})
            ax.plot(xs, ys, label=_SOLVER_LABELS.get(solver, solver), **style)
        if metric in ("train", "test"):
            ax.set_yscale("log")
        ax.set_xlabel("matrix size N")
        ax.set_ylabel(_METRIC_LABELS[metric])
        ax.grid(True, alpha=0.4)
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{stem}_{metric}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths
