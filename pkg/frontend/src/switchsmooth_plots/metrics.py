"""Independent re-computation of run metrics from trajectory.csv.

The estimation harness writes ``report.json`` with metrics it computed from
in-memory arrays.  This module recomputes every metric that the trajectory
file determines — discrete accuracy, per-channel RMSE, switch counts and
the impact-window RMSE — using only the CSV columns, so a mismatch flags a
corrupted or mislabeled artifact.  ``iterations`` and ``wall_time_s`` live
only in the report and are not recomputable.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import SchemaMismatch
from .io import Trajectory, load_report, load_trajectory

IMPACT_WINDOW = 10  # samples on each side of an impact in the windowed metric

# metric keys whose values trajectory.csv fully determines
RECOMPUTABLE = (
    "discrete_accuracy",
    "rmse_per_channel",
    "switch_count_true",
    "switch_count_est",
    "impact_window_rmse",
)


def impact_samples(dq2_true) -> np.ndarray:
    """Sample indices right after a plastic impact.

    An impact sample has exactly-zero true foot velocity (the plastic reset
    writes an exact 0.0) preceded by a strictly negative sample.
    """
    v = np.asarray(dq2_true, dtype=float)
    return np.flatnonzero((v[1:] == 0.0) & (v[:-1] < 0.0)) + 1


def switch_count(modes) -> int:
    m = np.asarray(modes)
    return int(np.sum(m[1:] != m[:-1]))


def recompute_metrics(traj: Trajectory) -> dict:
    """Metrics derived from the trajectory file alone."""
    err = traj.estimate - traj.truth
    rmse = [float(v) for v in np.sqrt(np.mean(err**2, axis=0))]
    acc = float(np.mean(traj.mode_est == traj.mode_true))

    hits = impact_samples(traj.truth[:, 3])
    if hits.size:
        T = traj.T
        idx = np.unique(
            np.concatenate(
                [
                    np.arange(max(0, i - IMPACT_WINDOW), min(T, i + IMPACT_WINDOW + 1))
                    for i in hits
                ]
            )
        )
        window_rmse = float(np.sqrt(np.mean(err[idx, 3] ** 2)))
    else:
        window_rmse = None

    return {
        "discrete_accuracy": acc,
        "rmse_per_channel": rmse,
        "switch_count_true": switch_count(traj.mode_true),
        "switch_count_est": switch_count(traj.mode_est),
        "impact_window_rmse": window_rmse,
    }


def _values_match(a, b, tol: float) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, (list, tuple)) or isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_values_match(x, y, tol) for x, y in zip(a, b))
    return math.isfinite(float(a)) and math.isfinite(float(b)) and abs(float(a) - float(b)) <= tol


def check_report(run_dir, tol: float = 1e-9) -> dict:
    """Recompute metrics from trajectory.csv and compare with report.json.

    Returns the recomputed metrics; raises SchemaMismatch when any
    recomputable metric disagrees with the report by more than ``tol``.
    """
    traj = load_trajectory(run_dir)
    report = load_report(run_dir)
    reported = report["metrics"]
    recomputed = recompute_metrics(traj)
    for key in RECOMPUTABLE:
        if key not in reported:
            raise SchemaMismatch(f"report.json metrics lack key {key!r}")
        if not _values_match(recomputed[key], reported[key], tol):
            raise SchemaMismatch(
                f"metric {key!r} recomputed from trajectory.csv is "
                f"{recomputed[key]!r} but report.json says {reported[key]!r}"
            )
    return recomputed
