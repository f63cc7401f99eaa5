"""Scenario configuration, experiment runs, metrics, and artifact files.

The harness glues the simulator and the smoother together for the hopper
experiments: it parses a JSON scenario description, simulates a ground-truth
record, runs the estimator with a documented warm start, computes run
metrics, and writes four artifact files per run::

    trajectory.csv    one row per sample t = 0..T-1 (truth, y, estimate, w)
    convergence.csv   objective value per outer iteration
    config.json       the fully resolved scenario configuration
    report.json       metrics + convergence report + config + seed

All floats in CSV files are printed with 17 significant digits so a re-read
reproduces the in-memory values exactly.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BadHyperparameter, SchemaMismatch
from .gauss_newton import ConvergenceReport, estimate
from .inner import solve_w
from .model import (
    Array,
    EstimationProblem,
    InnerParams,
    LineSearchParams,
    SwitchedSystem,
    validate_problem,
)
from .oscillators import (
    HopperParams,
    MeasurementMap,
    SimRecord,
    build_system,
    linear_hopper,
    measurement_by_name,
    nonlinear_hopper,
    simulate,
)

_MODELS = ("linear", "nonlinear")
_MEASUREMENTS = ("pos", "relative")
_PENALTIES = ("student_t", "gaussian")
_DIRECTIONS = ("gauss_newton", "steepest_descent")
_WARM_STARTS = ("kinematic", "fd", "zeros")
_FIX_W = (None, "truth")

IMPACT_WINDOW = 10  # samples on each side of an impact in the windowed metric


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment: simulator settings plus estimator hyperparameters.

    ``mode_init=None`` resolves to the first airborne mode of the chosen
    model ("A_down" for linear, "A" for nonlinear).  The JSON form uses
    exactly these field names; unknown fields are rejected.
    """

    # simulator
    model: str = "linear"                 # "linear" | "nonlinear"
    measurement: str = "pos"              # "pos" | "relative"
    T: int = 2000
    dt: float = 0.01
    meas_noise_std: float = 0.01
    process_noise_std: float = 0.0
    x_init: tuple = (1.0, 0.5, 0.0, 0.0)
    mode_init: Optional[str] = None
    seed: int = 1
    # estimator
    Q_diag: tuple = (3e-4, 3e-4, 3e-4, 3e-4)
    R_diag: tuple = (1e-2, 1e-2)
    r: float = 0.01
    nu: float = 1.0
    beta: float = 1e-4
    epsilon: float = 1e-6
    process_penalty: str = "student_t"
    direction_mode: str = "gauss_newton"
    warm_start: str = "kinematic"         # "kinematic" | "fd" | "zeros"
    fix_w: Optional[str] = None           # None | "truth"
    ridge: float = 1e-9
    inner_tol: float = 1e-9
    inner_max_iters: int = 20000
    ls_gamma: float = 0.5
    ls_c: float = 0.45
    ls_max_backtracks: int = 40
    outer_max_iters: int = 200
    # artifacts
    out_dir: Optional[str] = None

    def resolved(self) -> "ScenarioConfig":
        """Fill model-dependent defaults and normalize sequence fields."""
        mode_init = self.mode_init
        if mode_init is None:
            mode_init = "A_down" if self.model == "linear" else "A"
        return dataclasses.replace(
            self,
            mode_init=mode_init,
            x_init=tuple(float(v) for v in self.x_init),
            Q_diag=tuple(float(v) for v in self.Q_diag),
            R_diag=tuple(float(v) for v in self.R_diag),
        )

    def to_dict(self) -> dict:
        cfg = self.resolved()
        out = dataclasses.asdict(cfg)
        for key in ("x_init", "Q_diag", "R_diag"):
            out[key] = list(out[key])
        return out


def config_from_dict(data: dict) -> ScenarioConfig:
    """Strict construction: every key must be a known field."""
    if not isinstance(data, dict):
        raise SchemaMismatch(f"scenario config must be a JSON object, got {type(data)}")
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise SchemaMismatch(f"unknown scenario config fields: {unknown}")
    kwargs = dict(data)
    for key in ("x_init", "Q_diag", "R_diag"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    cfg = ScenarioConfig(**kwargs).resolved()
    _validate_config(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def _validate_config(cfg: ScenarioConfig) -> None:
    if cfg.model not in _MODELS:
        raise SchemaMismatch(f"model must be one of {_MODELS}, got {cfg.model!r}")
    if cfg.measurement not in _MEASUREMENTS:
        raise SchemaMismatch(
            f"measurement must be one of {_MEASUREMENTS}, got {cfg.measurement!r}"
        )
    if cfg.process_penalty not in _PENALTIES:
        raise SchemaMismatch(
            f"process_penalty must be one of {_PENALTIES}, got {cfg.process_penalty!r}"
        )
    if cfg.direction_mode not in _DIRECTIONS:
        raise SchemaMismatch(
            f"direction_mode must be one of {_DIRECTIONS}, got {cfg.direction_mode!r}"
        )
    if cfg.warm_start not in _WARM_STARTS:
        raise SchemaMismatch(
            f"warm_start must be one of {_WARM_STARTS}, got {cfg.warm_start!r}"
        )
    if cfg.fix_w not in _FIX_W:
        raise SchemaMismatch(f"fix_w must be one of {_FIX_W}, got {cfg.fix_w!r}")
    if cfg.T < 2:
        raise SchemaMismatch("T must be >= 2")
    if cfg.dt <= 0:
        raise SchemaMismatch("dt must be > 0")
    if len(cfg.x_init) != 4:
        raise SchemaMismatch("x_init must have 4 entries")
    if len(cfg.Q_diag) != 4 or any(v <= 0 for v in cfg.Q_diag):
        raise SchemaMismatch("Q_diag must be 4 positive entries")
    if len(cfg.R_diag) != 2 or any(v <= 0 for v in cfg.R_diag):
        raise SchemaMismatch("R_diag must be 2 positive entries")
    if cfg.meas_noise_std < 0 or cfg.process_noise_std < 0:
        raise SchemaMismatch("noise standard deviations must be >= 0")


def build_automaton(cfg: ScenarioConfig):
    params = HopperParams(dt=cfg.dt)
    return linear_hopper(params) if cfg.model == "linear" else nonlinear_hopper(params)


def build_problem(cfg: ScenarioConfig, system: SwitchedSystem, y: Array) -> EstimationProblem:
    return validate_problem(
        EstimationProblem(
            system=system,
            y=y,
            Q=np.diag(cfg.Q_diag),
            R=np.diag(cfg.R_diag),
            r=cfg.r,
            nu=cfg.nu,
            beta=cfg.beta,
            epsilon=cfg.epsilon,
            process_penalty=cfg.process_penalty,
            line_search=LineSearchParams(
                gamma=cfg.ls_gamma, c=cfg.ls_c, max_backtracks=cfg.ls_max_backtracks
            ),
            inner=InnerParams(tol=cfg.inner_tol, max_iters=cfg.inner_max_iters),
            outer_max_iters=cfg.outer_max_iters,
            ridge=cfg.ridge,
        )
    )


# ---------------------------------------------------------------------------
# warm starts


def fd_state_init(ys: Array, T: int, dt: float) -> Array:
    """Positions copied from measurements, velocities by finite differences."""
    x0 = np.zeros((T + 1, 4))
    x0[:T, :2] = ys
    x0[T, :2] = ys[-1]
    x0[1:T, 2:] = (ys[1:] - ys[:-1]) / dt
    x0[0, 2:] = x0[1, 2:]
    x0[T, 2:] = x0[T - 1, 2:]
    return x0


def constant_velocity_system(meas: MeasurementMap, dt: float) -> SwitchedSystem:
    """Single-mode integrator: positions advance by dt * velocity."""
    A = np.eye(4)
    A[0, 2] = dt
    A[1, 3] = dt

    def f(x: Array) -> Array:
        return np.asarray(x, dtype=float) @ A.T

    def jac_f(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(A, x.shape[:-1] + (4, 4)).copy()

    return SwitchedSystem(
        n=4, d=meas.d, M=1, f=[f], jac_f=[jac_f], h=meas.h, jac_h=meas.jac_h,
        mode_labels=("const_vel",),
    )


def kinematic_presmooth(ys: Array, meas: MeasurementMap, cfg: ScenarioConfig) -> Array:
    """Mode-agnostic robust state initializer.

    Fits a constant-velocity model with a heavy-tailed process penalty: the
    position rows enforce velocity/position consistency, the loose velocity
    rows admit physical accelerations, and impacts land in the penalty's
    tail instead of bleeding into neighboring samples the way a quadratic
    smoother would.  No hopper-specific information is used, so the result
    carries no bias toward any mode.
    """
    T = ys.shape[0]
    meas_var = max(cfg.meas_noise_std**2, 1e-8)
    problem = validate_problem(
        EstimationProblem(
            system=constant_velocity_system(meas, cfg.dt),
            y=ys,
            Q=np.diag([1e-4, 1e-4, 0.1, 0.1]),
            R=3.0 * meas_var * np.eye(meas.d),
            r=1.0,
            nu=1.0,
            process_penalty="student_t",
            line_search=LineSearchParams(c=0.45),
            outer_max_iters=200,
            ridge=cfg.ridge,
        )
    )
    if meas.name == "pos":
        x0 = fd_state_init(ys, T, cfg.dt)
    else:
        x0 = np.zeros((T + 1, 4))
    est, _ = estimate(problem, x_init=x0, w_fixed=np.ones((T, 1)))
    return est.states


def warm_start(cfg: ScenarioConfig, problem: EstimationProblem, meas: MeasurementMap):
    """Initial (x, w) for the joint solve, per the configured policy."""
    T = problem.T
    if cfg.warm_start == "zeros":
        return np.zeros((T + 1, 4)), None
    if cfg.warm_start == "fd":
        if meas.name == "pos":
            return fd_state_init(problem.y, T, cfg.dt), None
        return np.zeros((T + 1, 4)), None
    x0 = kinematic_presmooth(problem.y, meas, cfg)
    w0 = solve_w(x0, problem).w
    return x0, w0


# ---------------------------------------------------------------------------
# metrics


@dataclass
class RunMetrics:
    """Quantities reported for one estimation run.

    Every field except ``iterations`` and ``wall_time_s`` is recomputable
    from ``trajectory.csv`` alone, which is what the plotting package's
    independent re-computation checks.
    """

    discrete_accuracy: float
    rmse_per_channel: tuple          # (q1, q2, dq1, dq2) over samples 0..T-1
    rmse_unobservable: bool          # relative measurements leave absolute
    # height/vertical velocity undetermined, so state RMSE is not meaningful
    switch_count_true: int
    switch_count_est: int
    impact_window_rmse: Optional[float]  # foot-velocity RMSE within +/-10
    # samples of each true impact; None when the record contains no impact
    iterations: int
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            "discrete_accuracy": float(self.discrete_accuracy),
            "rmse_per_channel": [float(v) for v in self.rmse_per_channel],
            "rmse_unobservable": bool(self.rmse_unobservable),
            "switch_count_true": int(self.switch_count_true),
            "switch_count_est": int(self.switch_count_est),
            "impact_window_rmse": None
            if self.impact_window_rmse is None
            else float(self.impact_window_rmse),
            "iterations": int(self.iterations),
            "wall_time_s": float(self.wall_time_s),
        }


def impact_samples(dq2_true: Array) -> Array:
    """Sample indices right after a plastic impact.

    An impact sample is one where the true foot velocity is exactly zero
    (the plastic reset writes an exact 0.0) and was strictly negative at the
    previous sample.  This rule uses only trajectory columns so independent
    consumers of the CSV can reproduce it.
    """
    v = np.asarray(dq2_true, dtype=float)
    hits = np.flatnonzero((v[1:] == 0.0) & (v[:-1] < 0.0)) + 1
    return hits


def switch_count(modes: Array) -> int:
    m = np.asarray(modes)
    return int(np.sum(m[1:] != m[:-1]))


def compute_metrics(
    record: SimRecord,
    est_states: Array,
    est_modes: Array,
    unobservable: bool,
    iterations: int,
    wall_time_s: float,
) -> RunMetrics:
    T = record.modes.shape[0]
    truth = record.xs[:T]
    est = est_states[:T]
    err = est - truth
    rmse = tuple(float(v) for v in np.sqrt(np.mean(err**2, axis=0)))
    acc = float(np.mean(est_modes == record.modes))

    hits = impact_samples(truth[:, 3])
    if hits.size:
        idx = np.unique(
            np.concatenate(
                [np.arange(max(0, i - IMPACT_WINDOW), min(T, i + IMPACT_WINDOW + 1)) for i in hits]
            )
        )
        window_rmse = float(np.sqrt(np.mean((est[idx, 3] - truth[idx, 3]) ** 2)))
    else:
        window_rmse = None

    return RunMetrics(
        discrete_accuracy=acc,
        rmse_per_channel=rmse,
        rmse_unobservable=unobservable,
        switch_count_true=switch_count(record.modes),
        switch_count_est=switch_count(est_modes),
        impact_window_rmse=window_rmse,
        iterations=iterations,
        wall_time_s=wall_time_s,
    )


# ---------------------------------------------------------------------------
# artifact files


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def write_trajectory_csv(path, record: SimRecord, est_states: Array,
                         est_modes: Array, w_relaxed: Array) -> None:
    T, M = w_relaxed.shape
    header = (
        "t,time,q1_true,q2_true,dq1_true,dq2_true,mode_true,y1,y2,"
        "q1_est,q2_est,dq1_est,dq2_est,mode_est,"
        + ",".join(f"w_tilde_{m + 1}" for m in range(M))
    )
    lines = [header]
    for t in range(T):
        row = [str(t), _fmt(t * record.dt)]
        row += [_fmt(v) for v in record.xs[t]]
        row.append(str(int(record.modes[t])))
        row += [_fmt(v) for v in record.ys[t]]
        row += [_fmt(v) for v in est_states[t]]
        row.append(str(int(est_modes[t])))
        row += [_fmt(v) for v in w_relaxed[t]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_convergence_csv(path, objective_trace: Sequence[float]) -> None:
    lines = ["iter,loss"]
    for k, v in enumerate(objective_trace):
        lines.append(f"{k},{_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def report_to_dict(report: ConvergenceReport) -> dict:
    return {
        "iterations": int(report.iterations),
        "stop_reason": report.stop_reason,
        "loss_trace": [float(v) for v in report.objective_trace],
        "final_neg_delta": float(report.final_neg_delta),
        "max_direction_norm": float(report.max_direction_norm),
        "inner_iterations": int(report.inner_iterations),
        "inner_cap_hits": int(report.inner_cap_hits),
        "backtracks": int(report.backtracks),
        "direction_mode": report.direction_mode,
        "epsilon": float(report.epsilon),
    }


# ---------------------------------------------------------------------------
# scenario runs


@dataclass
class RunResult:
    config: ScenarioConfig
    record: SimRecord
    states: Array
    modes: Array
    w_relaxed: Array
    metrics: RunMetrics
    report: ConvergenceReport
    out_dir: Optional[Path]


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    """Simulate, estimate, measure, and (optionally) write artifacts.

    ``out_dir`` overrides ``cfg.out_dir``; when both are None no files are
    written.  Identical configurations produce byte-identical CSV files.
    """
    cfg = cfg.resolved()
    _validate_config(cfg)
    auto = build_automaton(cfg)
    meas = measurement_by_name(cfg.measurement)
    record = simulate(
        auto,
        meas,
        np.asarray(cfg.x_init, dtype=float),
        cfg.mode_init,
        cfg.T,
        meas_noise_std=cfg.meas_noise_std,
        process_noise_std=cfg.process_noise_std,
        seed=cfg.seed,
    )
    system = build_system(auto, meas)
    problem = build_problem(cfg, system, record.ys)

    t0 = time.perf_counter()
    x0, w0 = warm_start(cfg, problem, meas)
    w_fixed = record.w if cfg.fix_w == "truth" else None
    est, report = estimate(
        problem,
        x_init=x0,
        w_init=w0,
        w_fixed=w_fixed,
        direction_mode=cfg.direction_mode,
    )
    wall = time.perf_counter() - t0

    metrics = compute_metrics(
        record,
        est.states,
        est.modes,
        unobservable=cfg.measurement == "relative",
        iterations=report.iterations,
        wall_time_s=wall,
    )

    target = out_dir if out_dir is not None else cfg.out_dir
    target_path: Optional[Path] = None
    if target is not None:
        target_path = Path(target)
        target_path.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(
            target_path / "trajectory.csv", record, est.states, est.modes, est.w_relaxed
        )
        write_convergence_csv(target_path / "convergence.csv", report.objective_trace)
        (target_path / "config.json").write_text(
            json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        payload = {
            "metrics": metrics.to_dict(),
            "convergence": report_to_dict(report),
            "config": cfg.to_dict(),
            "seed": int(cfg.seed),
        }
        (target_path / "report.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )

    return RunResult(
        config=cfg,
        record=record,
        states=est.states,
        modes=est.modes,
        w_relaxed=est.w_relaxed,
        metrics=metrics,
        report=report,
        out_dir=target_path,
    )


def simulate_scenario(cfg: ScenarioConfig, out_dir=None):
    """Simulation only; writes truth.csv (same truth columns as trajectory.csv)."""
    cfg = cfg.resolved()
    _validate_config(cfg)
    auto = build_automaton(cfg)
    meas = measurement_by_name(cfg.measurement)
    record = simulate(
        auto,
        meas,
        np.asarray(cfg.x_init, dtype=float),
        cfg.mode_init,
        cfg.T,
        meas_noise_std=cfg.meas_noise_std,
        process_noise_std=cfg.process_noise_std,
        seed=cfg.seed,
    )
    target = out_dir if out_dir is not None else cfg.out_dir
    if target is not None:
        path = Path(target)
        path.mkdir(parents=True, exist_ok=True)
        header = "t,time,q1_true,q2_true,dq1_true,dq2_true,mode_true,y1,y2"
        lines = [header]
        for t in range(cfg.T):
            row = [str(t), _fmt(t * record.dt)]
            row += [_fmt(v) for v in record.xs[t]]
            row.append(str(int(record.modes[t])))
            row += [_fmt(v) for v in record.ys[t]]
            lines.append(",".join(row))
        (path / "truth.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        (path / "config.json").write_text(
            json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    return record


# ---------------------------------------------------------------------------
# ablations


ABLATIONS = ("students_t", "gauss_newton", "smoothing", "onboard", "nonlinear")


def _ablation_jobs(name: str):
    """(variant label, config) pairs for one named comparison."""
    if name == "students_t":
        # impact tracking with the discrete state given, robust vs quadratic
        return [
            (
                f"{tag}_seed{seed}",
                ScenarioConfig(fix_w="truth", process_penalty=tag, seed=seed),
            )
            for seed in range(5)
            for tag in ("student_t", "gaussian")
        ]
    if name == "gauss_newton":
        # iteration count toward the same tolerance with the discrete state
        # given; the first-order variant runs against an iteration budget
        # (it does not reach the tolerance at any practical cap, which is
        # the point of the comparison) and a shorter horizon keeps it quick
        return [
            (
                tag,
                ScenarioConfig(
                    T=300,
                    fix_w="truth",
                    direction_mode=tag,
                    outer_max_iters=200 if tag == "gauss_newton" else 2000,
                ),
            )
            for tag in ("gauss_newton", "steepest_descent")
        ]
    if name == "smoothing":
        return [
            ("with_smoothing", ScenarioConfig()),
            ("without_smoothing", ScenarioConfig(nu=0.0)),
        ]
    if name == "onboard":
        return [
            ("pos", ScenarioConfig(measurement="pos")),
            ("relative", ScenarioConfig(measurement="relative")),
        ]
    if name == "nonlinear":
        return [
            ("nonlinear_pos", ScenarioConfig(model="nonlinear", measurement="pos")),
            (
                "nonlinear_relative",
                ScenarioConfig(model="nonlinear", measurement="relative"),
            ),
        ]
    raise BadHyperparameter(f"unknown ablation {name!r}; expected one of {ABLATIONS}")


def run_ablation(name: str, out_dir) -> dict:
    """Run one named comparison; emits ablation.json/ablation.csv plus one
    artifact directory per variant under ``out_dir``."""
    jobs = _ablation_jobs(name)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for label, cfg in jobs:
        result = run_scenario(cfg, out_dir=out / label)
        row = {"variant": label, "seed": int(cfg.seed)}
        row.update(result.metrics.to_dict())
        rows.append(row)

    table = {"ablation": name, "rows": rows}
    (out / "ablation.json").write_text(
        json.dumps(table, indent=2) + "\n", encoding="utf-8"
    )
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        cells = []
        for col in cols:
            v = row[col]
            if isinstance(v, float):
                cells.append(_fmt(v))
            elif isinstance(v, list):
                cells.append(";".join(_fmt(u) for u in v))
            elif v is None:
                cells.append("")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    (out / "ablation.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return table
