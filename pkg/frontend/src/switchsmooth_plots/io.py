"""Readers for the estimation harness's run artifacts.

A run directory contains ``trajectory.csv``, ``convergence.csv``,
``config.json`` and ``report.json``; an ablation directory contains
``ablation.json``, ``ablation.csv`` and one run directory per variant.
Everything here is read-only and validates against the documented schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MissingColumn, SchemaMismatch

Array = np.ndarray

# fixed leading columns of trajectory.csv; w_tilde_1..M follow
TRAJECTORY_COLUMNS = (
    "t", "time",
    "q1_true", "q2_true", "dq1_true", "dq2_true", "mode_true",
    "y1", "y2",
    "q1_est", "q2_est", "dq1_est", "dq2_est", "mode_est",
)

SIMPLEX_TOL = 1e-6


@dataclass
class Trajectory:
    """Parsed trajectory.csv with the relaxed weights split out."""

    time: Array          # (T,)
    truth: Array         # (T, 4) true states q1, q2, dq1, dq2
    mode_true: Array     # (T,) int
    measurements: Array  # (T, 2)
    estimate: Array      # (T, 4) estimated states
    mode_est: Array      # (T,) int
    w_tilde: Array       # (T, M) relaxed weights

    @property
    def T(self) -> int:
        return self.time.shape[0]

    @property
    def M(self) -> int:
        return self.w_tilde.shape[1]


def _read_csv(path: Path) -> np.ndarray:
    if not path.exists():
        raise SchemaMismatch(f"missing artifact file {path}")
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.dtype.names is None:
        raise SchemaMismatch(f"{path} has no header row")
    return np.atleast_1d(data)


def load_trajectory(run_dir) -> Trajectory:
    path = Path(run_dir) / "trajectory.csv"
    data = _read_csv(path)
    names = list(data.dtype.names)
    for col in TRAJECTORY_COLUMNS:
        if col not in names:
            raise MissingColumn(f"{path} lacks required column {col!r}")
    w_cols = [n for n in names if n.startswith("w_tilde_")]
    expected = [f"w_tilde_{m + 1}" for m in range(len(w_cols))]
    if not w_cols or w_cols != expected:
        raise MissingColumn(
            f"{path} must end with columns w_tilde_1..w_tilde_M, found {w_cols}"
        )

    w = np.column_stack([data[c] for c in w_cols])
    if w.min() < -SIMPLEX_TOL or w.max() > 1.0 + SIMPLEX_TOL:
        raise SchemaMismatch(
            f"{path}: relaxed weights leave [0, 1] (min {w.min():.3e}, "
            f"max {w.max():.3e})"
        )
    sums = w.sum(axis=1)
    if np.abs(sums - 1.0).max() > SIMPLEX_TOL:
        raise SchemaMismatch(
            f"{path}: relaxed weight rows sum to {sums[np.abs(sums - 1).argmax()]:.9f}"
        )

    t = data["t"]
    if not np.array_equal(t, np.arange(t.shape[0])):
        raise SchemaMismatch(f"{path}: sample index column must be 0..T-1")

    return Trajectory(
        time=np.asarray(data["time"], dtype=float),
        truth=np.column_stack(
            [data["q1_true"], data["q2_true"], data["dq1_true"], data["dq2_true"]]
        ),
        mode_true=np.asarray(data["mode_true"], dtype=int),
        measurements=np.column_stack([data["y1"], data["y2"]]),
        estimate=np.column_stack(
            [data["q1_est"], data["q2_est"], data["dq1_est"], data["dq2_est"]]
        ),
        mode_est=np.asarray(data["mode_est"], dtype=int),
        w_tilde=w,
    )


def load_convergence(run_dir):
    path = Path(run_dir) / "convergence.csv"
    data = _read_csv(path)
    for col in ("iter", "loss"):
        if col not in data.dtype.names:
            raise MissingColumn(f"{path} lacks required column {col!r}")
    return np.asarray(data["iter"], dtype=int), np.asarray(data["loss"], dtype=float)


def _load_json(path: Path) -> dict:
    if not path.exists():
        raise SchemaMismatch(f"missing artifact file {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise SchemaMismatch(f"{path} must hold a JSON object")
    return payload


def load_report(run_dir) -> dict:
    payload = _load_json(Path(run_dir) / "report.json")
    missing = {"metrics", "convergence", "config", "seed"} - set(payload)
    if missing:
        raise SchemaMismatch(f"report.json lacks keys {sorted(missing)}")
    return payload


def load_config(run_dir) -> dict:
    return _load_json(Path(run_dir) / "config.json")


def load_ablation(abl_dir) -> dict:
    payload = _load_json(Path(abl_dir) / "ablation.json")
    if "ablation" not in payload or "rows" not in payload:
        raise SchemaMismatch("ablation.json must hold keys 'ablation' and 'rows'")
    if not isinstance(payload["rows"], list) or not payload["rows"]:
        raise SchemaMismatch("ablation.json holds no result rows")
    return payload


def variant_run_dirs(abl_dir):
    """Run directories inside an ablation directory, sorted by name."""
    root = Path(abl_dir)
    return sorted(
        (p for p in root.iterdir() if (p / "convergence.csv").exists()),
        key=lambda p: p.name,
    )
