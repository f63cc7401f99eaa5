"""Plotting and artifact-inspection companion to the switchsmooth package.

Reads only the documented run artifacts (trajectory.csv, convergence.csv,
report.json, config.json, ablation.json) — it never imports the estimator.
"""

from .errors import MissingColumn, PlotsError, SchemaMismatch
from .figures import KINDS, FigureSpec, render
from .io import (
    Trajectory,
    load_ablation,
    load_config,
    load_convergence,
    load_report,
    load_trajectory,
    variant_run_dirs,
)
from .metrics import check_report, impact_samples, recompute_metrics, switch_count

__all__ = [
    "FigureSpec",
    "KINDS",
    "MissingColumn",
    "PlotsError",
    "SchemaMismatch",
    "Trajectory",
    "check_report",
    "impact_samples",
    "load_ablation",
    "load_config",
    "load_convergence",
    "load_report",
    "load_trajectory",
    "recompute_metrics",
    "render",
    "switch_count",
    "variant_run_dirs",
]

__version__ = "0.1.0"
