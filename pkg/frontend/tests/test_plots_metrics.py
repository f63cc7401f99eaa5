"""Independent metric recomputation from trajectory.csv."""

import json

import numpy as np
import pytest

from switchsmooth_plots import (
    SchemaMismatch,
    check_report,
    impact_samples,
    load_trajectory,
    recompute_metrics,
    switch_count,
)


def test_impact_samples_rule():
    v = np.array([-1.0, -0.5, 0.0, 0.2, 0.0, -0.3, 0.0, 0.0])
    assert impact_samples(v).tolist() == [2, 6]
    # a zero following a non-negative sample is not an impact
    assert impact_samples(np.array([0.0, 0.0, 0.1, 0.0])).size == 0
    # near-zero does not count: the reset writes an exact 0.0
    assert impact_samples(np.array([-1.0, 1e-12])).size == 0


def test_switch_count():
    assert switch_count(np.array([0, 0, 1, 1, 2, 2, 2])) == 2
    assert switch_count(np.array([3])) == 0
    assert switch_count(np.array([0, 1, 0, 1])) == 3


def test_recompute_matches_hand_values(synth_run):
    traj = load_trajectory(synth_run.path)
    got = recompute_metrics(traj)
    T = synth_run.time.shape[0]
    assert got["discrete_accuracy"] == pytest.approx((T - 3) / T, abs=0)
    err = synth_run.estimate - synth_run.truth
    np.testing.assert_allclose(
        got["rmse_per_channel"], np.sqrt(np.mean(err**2, axis=0)), rtol=1e-15
    )
    assert got["switch_count_true"] == 1
    assert got["switch_count_est"] == 2  # the three flipped leading modes add one
    stop = synth_run.stop
    window = np.arange(max(0, stop - 10), min(T, stop + 11))
    expected = np.sqrt(np.mean(err[window, 3] ** 2))
    assert got["impact_window_rmse"] == pytest.approx(expected, rel=1e-15)


def test_no_impact_gives_none(synth_run):
    path = synth_run.path / "trajectory.csv"
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    header = lines[0].split(",")
    k = header.index("dq2_true")
    rows = [line.split(",") for line in lines[1:]]
    for i, row in enumerate(rows):
        row[k] = f"{0.1 * (i + 1):.17g}"  # always climbing, never an impact
    path.write_text(
        "\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n",
        encoding="utf-8",
    )
    got = recompute_metrics(load_trajectory(synth_run.path))
    assert got["impact_window_rmse"] is None


def test_check_report_passes_on_consistent_run(synth_run):
    got = check_report(synth_run.path)
    assert got["discrete_accuracy"] == synth_run.metrics["discrete_accuracy"]


def test_check_report_flags_tampered_metric(synth_run):
    path = synth_run.path / "report.json"
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["metrics"]["discrete_accuracy"] += 5e-9
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(SchemaMismatch, match="discrete_accuracy"):
        check_report(synth_run.path)
    # but the same wobble sits inside a looser tolerance
    check_report(synth_run.path, tol=1e-6)


def test_check_report_flags_none_vs_number(synth_run):
    path = synth_run.path / "report.json"
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["metrics"]["impact_window_rmse"] = None
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(SchemaMismatch, match="impact_window_rmse"):
        check_report(synth_run.path)
