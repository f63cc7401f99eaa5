"""Figure rendering for estimation-run artifacts.

Each figure kind reads one run (or ablation) directory through the loaders
in :mod:`switchsmooth_plots.io` and writes a single image file.  Rendering
never modifies the run directory, and identical inputs produce identical
output bytes (fixed dpi, no timestamps in the file metadata).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import PlotsError, SchemaMismatch
from .io import (
    Trajectory,
    load_ablation,
    load_convergence,
    load_trajectory,
    variant_run_dirs,
)
from .metrics import IMPACT_WINDOW, impact_samples

KINDS = ("states", "modes", "impact_window", "convergence", "ablation_table")

STATE_LABELS = ("body height q1", "foot height q2", "body velocity dq1", "foot velocity dq2")

MAX_IMPACT_PANELS = 6  # zoomed impact panels beyond this add nothing

# fix the id salt so SVG output does not vary run to run
matplotlib.rcParams["svg.hashsalt"] = "switchsmooth-plots"


@dataclass
class FigureSpec:
    """One figure request: which run, which figure kind, where to write it."""

    run: Path                  # run directory (ablation directory for the
    # ablation_table kind and for overlaid convergence curves)
    kind: str                  # one of KINDS
    out: Path                  # output image path
    image_format: str = ""     # png/svg/pdf; empty means take it from `out`
    dpi: int = 150

    def __post_init__(self):
        self.run = Path(self.run)
        self.out = Path(self.out)
        if self.kind not in KINDS:
            raise PlotsError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.image_format:
            self.image_format = self.out.suffix.lstrip(".").lower() or "png"


def _save(fig, spec: FigureSpec) -> Path:
    spec.out.parent.mkdir(parents=True, exist_ok=True)
    fmt = spec.image_format
    # strip the creation timestamp so repeated renders are byte-identical
    metadata = {"Date": None} if fmt == "svg" else {"CreationDate": None} if fmt == "pdf" else None
    fig.savefig(spec.out, format=fmt, dpi=spec.dpi, metadata=metadata)
    plt.close(fig)
    return spec.out


def _fig_states(traj: Trajectory):
    t = traj.time
    fig, axes = plt.subplots(4, 2, figsize=(11, 9), sharex=True)
    for k in range(4):
        ax = axes[k, 0]
        ax.plot(t, traj.truth[:, k], color="0.4", lw=1.8, label="truth")
        ax.plot(t, traj.estimate[:, k], color="tab:blue", lw=0.9, label="estimate")
        ax.set_ylabel(STATE_LABELS[k], fontsize=8)
        if k == 0:
            ax.legend(loc="upper right", fontsize=8)
            ax.set_title("state trajectories")
        axe = axes[k, 1]
        axe.plot(t, traj.estimate[:, k] - traj.truth[:, k], color="tab:red", lw=0.9)
        axe.axhline(0.0, color="0.7", lw=0.6)
        if k == 0:
            axe.set_title("estimate - truth")
    axes[-1, 0].set_xlabel("time [s]")
    axes[-1, 1].set_xlabel("time [s]")
    fig.tight_layout()
    return fig


def _fig_modes(traj: Trajectory):
    t = traj.time
    M = traj.M
    fig, axes = plt.subplots(M, 1, figsize=(11, 1.8 * M), sharex=True, squeeze=False)
    for m in range(M):
        ax = axes[m, 0]
        ax.fill_between(
            t,
            (traj.mode_true == m).astype(float),
            step="post",
            color="0.85",
            label="true mode",
        )
        ax.plot(t, traj.w_tilde[:, m], color="tab:blue", lw=0.9, label="relaxed weight")
        ax.plot(
            t,
            (traj.mode_est == m).astype(float),
            color="tab:red",
            lw=0.8,
            ls="--",
            label="rounded",
        )
        ax.set_ylim(-0.05, 1.05)
        ax.set_ylabel(f"mode {m}", fontsize=8)
        if m == 0:
            ax.legend(loc="center right", fontsize=8)
            ax.set_title("discrete mode: truth, relaxed weights, rounded estimate")
    axes[-1, 0].set_xlabel("time [s]")
    fig.tight_layout()
    return fig


def _fig_impact_window(traj: Trajectory):
    hits = impact_samples(traj.truth[:, 3])
    if hits.size == 0:
        raise SchemaMismatch("trajectory contains no impacts to zoom into")
    hits = hits[:MAX_IMPACT_PANELS]
    n = hits.size
    ncols = min(n, 3)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.6 * ncols, 2.8 * nrows), squeeze=False
    )
    for k, hit in enumerate(hits):
        ax = axes[k // ncols, k % ncols]
        lo = max(0, hit - IMPACT_WINDOW)
        hi = min(traj.T, hit + IMPACT_WINDOW + 1)
        sl = slice(lo, hi)
        ax.plot(traj.time[sl], traj.truth[sl, 3], color="0.4", lw=1.8, label="truth")
        ax.plot(
            traj.time[sl], traj.estimate[sl, 3], color="tab:blue", lw=1.0, label="estimate"
        )
        ax.axvline(traj.time[hit], color="tab:red", lw=0.7, ls=":")
        ax.set_title(f"impact at t = {traj.time[hit]:.3f} s", fontsize=9)
        if k == 0:
            ax.legend(fontsize=8)
    for k in range(n, nrows * ncols):
        axes[k // ncols, k % ncols].axis("off")
    fig.supylabel("foot velocity dq2")
    fig.supxlabel("time [s]")
    fig.tight_layout()
    return fig


def _convergence_curves(run_dir: Path):
    """(label, iters, losses) for a run directory, or one per variant when
    pointed at an ablation directory."""
    if (run_dir / "convergence.csv").exists():
        iters, losses = load_convergence(run_dir)
        return [(run_dir.name, iters, losses)]
    variants = variant_run_dirs(run_dir)
    if not variants:
        raise SchemaMismatch(f"{run_dir} holds neither convergence.csv nor variant runs")
    return [(v.name, *load_convergence(v)) for v in variants]


def _fig_convergence(run_dir: Path):
    curves = _convergence_curves(run_dir)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    floor = min(float(np.min(losses)) for _, _, losses in curves)
    plot = ax.semilogy if floor > 0 else ax.plot
    for label, iters, losses in curves:
        plot(iters, losses, lw=1.2, label=label)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("relaxed objective")
    ax.set_title("convergence")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, list):
        return "/".join(f"{float(u):.3g}" for u in v)
    return str(v)


def _fig_ablation_table(abl_dir: Path):
    table = load_ablation(abl_dir)
    rows = table["rows"]
    cols = list(rows[0].keys())
    cells = [[_cell(row.get(c)) for c in cols] for row in rows]

    fig, ax = plt.subplots(figsize=(1.4 * len(cols) + 1, 0.45 * len(rows) + 1.2))
    ax.axis("off")
    ax.set_title(f"ablation: {table['ablation']}", fontsize=10)
    mpl_table = ax.table(cellText=cells, colLabels=cols, loc="center", cellLoc="center")
    mpl_table.auto_set_font_size(False)
    mpl_table.set_fontsize(7)
    mpl_table.auto_set_column_width(list(range(len(cols))))
    mpl_table.scale(1.0, 1.3)
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> Path:
    """Render one figure and return the path written."""
    if spec.kind == "states":
        fig = _fig_states(load_trajectory(spec.run))
    elif spec.kind == "modes":
        fig = _fig_modes(load_trajectory(spec.run))
    elif spec.kind == "impact_window":
        fig = _fig_impact_window(load_trajectory(spec.run))
    elif spec.kind == "convergence":
        fig = _fig_convergence(spec.run)
    else:
        fig = _fig_ablation_table(spec.run)
    return _save(fig, spec)
