"""Fixtures: synthetic run artifacts plus one real run produced through the
estimator's command line.

The real-run fixtures shell out to ``python -m switchsmooth.cli`` so this
suite touches the estimator only through its documented external interface
(config in, CSV/JSON artifacts out) — never through its Python API.
"""

import json
import subprocess
import sys
from types import SimpleNamespace

import numpy as np
import pytest

pytest.importorskip("switchsmooth_plots")


def _fmt_row(values):
    return ",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in values)


def _write_synth_run(out_dir, T=30, M=2, dt=0.01):
    """Small handmade run directory with a plastic stop at sample 12.

    Returns the arrays used so tests can check loaders and recomputed
    metrics against known values.
    """
    rng = np.random.default_rng(7)
    time = dt * np.arange(T)
    truth = np.column_stack(
        [
            1.0 + 0.1 * np.sin(time),
            np.maximum(0.0, 0.5 - 3.0 * time),
            0.1 * np.cos(time),
            np.where(0.5 - 3.0 * time > 0.0, -3.0, 0.0),
        ]
    )
    # plastic stop: dq2 goes from a strictly negative value to an exact 0.0
    stop = int(np.flatnonzero(truth[:, 3] == 0.0)[0])
    assert truth[stop - 1, 3] < 0.0
    estimate = truth + 0.01 * rng.standard_normal(truth.shape)
    mode_true = np.zeros(T, dtype=int)
    mode_true[stop:] = 1
    mode_est = mode_true.copy()
    mode_est[:3] = 1  # three early mistakes -> accuracy (T-3)/T
    y = truth[:, :2] + 0.005 * rng.standard_normal((T, 2))
    w = rng.uniform(0.05, 1.0, size=(T, M))
    w /= w.sum(axis=1, keepdims=True)

    out_dir.mkdir(parents=True, exist_ok=True)
    header = (
        "t,time,q1_true,q2_true,dq1_true,dq2_true,mode_true,y1,y2,"
        "q1_est,q2_est,dq1_est,dq2_est,mode_est,"
        + ",".join(f"w_tilde_{m + 1}" for m in range(M))
    )
    lines = [header]
    for t in range(T):
        row = (
            [t, float(time[t])]
            + [float(v) for v in truth[t]]
            + [int(mode_true[t])]
            + [float(v) for v in y[t]]
            + [float(v) for v in estimate[t]]
            + [int(mode_est[t])]
            + [float(v) for v in w[t]]
        )
        lines.append(_fmt_row(row))
    (out_dir / "trajectory.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    losses = 100.0 * 0.5 ** np.arange(8) + 3.0
    conv = ["iter,loss"] + [f"{i},{v:.17g}" for i, v in enumerate(losses)]
    (out_dir / "convergence.csv").write_text("\n".join(conv) + "\n", encoding="utf-8")

    err = estimate - truth
    idx = np.unique(
        np.concatenate(
            [np.arange(max(0, i - 10), min(T, i + 11)) for i in (stop,)]
        )
    )
    metrics = {
        "discrete_accuracy": float(np.mean(mode_est == mode_true)),
        "rmse_per_channel": [float(v) for v in np.sqrt(np.mean(err**2, axis=0))],
        "rmse_unobservable": False,
        "switch_count_true": int(np.sum(mode_true[1:] != mode_true[:-1])),
        "switch_count_est": int(np.sum(mode_est[1:] != mode_est[:-1])),
        "impact_window_rmse": float(np.sqrt(np.mean(err[idx, 3] ** 2))),
        "iterations": len(losses) - 1,
        "wall_time_s": 0.25,
    }
    config = {"T": T, "seed": 7, "model": "linear", "measurement": "pos"}
    report = {
        "metrics": metrics,
        "convergence": {"iterations": len(losses) - 1, "stop": "converged"},
        "config": config,
        "seed": 7,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    (out_dir / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")

    return SimpleNamespace(
        path=out_dir,
        time=time,
        truth=truth,
        estimate=estimate,
        mode_true=mode_true,
        mode_est=mode_est,
        y=y,
        w=w,
        losses=losses,
        stop=stop,
        metrics=metrics,
    )


@pytest.fixture
def synth_run(tmp_path):
    """One synthetic run directory plus the arrays behind it."""
    return _write_synth_run(tmp_path / "run")


@pytest.fixture
def synth_run_factory(tmp_path):
    """Writer for synthetic run directories with chosen sizes."""

    def factory(name="run", **kwargs):
        return _write_synth_run(tmp_path / name, **kwargs)

    return factory


def _cli(args, cwd):
    proc = subprocess.run(
        [sys.executable, "-m", "switchsmooth.cli", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr + proc.stdout
    return proc


@pytest.fixture(scope="session")
def real_run(tmp_path_factory):
    """A genuine estimation run produced through the estimator CLI."""
    root = tmp_path_factory.mktemp("real_run")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps({"T": 400, "seed": 3}) + "\n", encoding="utf-8")
    out = root / "run"
    _cli(["estimate", "--config", str(cfg), "--out", str(out)], cwd=root)
    return out


@pytest.fixture(scope="session")
def real_ablation(tmp_path_factory):
    """A genuine ablation directory (two variants) through the CLI."""
    root = tmp_path_factory.mktemp("real_ablation")
    out = root / "abl"
    _cli(["ablation", "smoothing", "--out", str(out)], cwd=root)
    return out
