"""Command-line entry points for the hopper experiments.

Subcommands::

    estimate  --config cfg.json [--out DIR]   simulate + estimate + artifacts
    simulate  --config cfg.json [--out DIR]   simulation only (truth.csv)
    ablation  NAME --out DIR                  paired comparison runs
    selfcheck                                 Jacobian/gradient/definiteness checks
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .errors import SwitchSmoothError
from .gauss_newton import assemble_U
from .inner import project_simplex, value_and_grad
from .model import EstimationProblem, jacobian_selfcheck, validate_problem
from .oscillators import (
    build_system,
    linear_hopper,
    measurement_by_name,
    nonlinear_hopper,
    simulate,
)


def _cmd_estimate(args) -> int:
    cfg = harness.load_config(args.config)
    result = harness.run_scenario(cfg, out_dir=args.out)
    m = result.metrics
    print(
        f"model={cfg.model} measurement={cfg.measurement} seed={cfg.seed} "
        f"T={cfg.T}"
    )
    print(
        f"accuracy={m.discrete_accuracy:.4f} iterations={m.iterations} "
        f"stop={result.report.stop_reason} wall={m.wall_time_s:.2f}s"
    )
    if result.out_dir is not None:
        print(f"artifacts written to {result.out_dir}")
    return 0 if result.report.stop_reason != "line_search_stalled" else 1


def _cmd_simulate(args) -> int:
    cfg = harness.load_config(args.config)
    record = harness.simulate_scenario(cfg, out_dir=args.out)
    n_impacts = int(record.reset_indices.size)
    print(
        f"simulated model={cfg.model} measurement={cfg.measurement} "
        f"T={cfg.T} seed={cfg.seed} impacts={n_impacts}"
    )
    return 0


def _cmd_ablation(args) -> int:
    table = harness.run_ablation(args.name, args.out)
    for row in table["rows"]:
        print(
            f"{row['variant']:<24} acc={row['discrete_accuracy']:.4f} "
            f"iters={row['iterations']:>6} switches={row['switch_count_est']}"
        )
    print(f"table written to {args.out}")
    return 0


def _generic_system(rng, T: int, n: int, M: int):
    """Small random smooth switched system plus a measurement record."""
    from .model import SwitchedSystem

    mats = [np.eye(n) + 0.1 * rng.standard_normal((n, n)) for _ in range(M)]
    H = rng.standard_normal((2, n))

    def make(mat):
        def f(x):
            return np.tanh(np.asarray(x, dtype=float) @ mat.T)

        def jac(x):
            z = np.asarray(x, dtype=float) @ mat.T
            s = 1.0 - np.tanh(z) ** 2
            return s[..., :, None] * mat

        return f, jac

    pairs = [make(m) for m in mats]
    system = SwitchedSystem(
        n=n, d=2, M=M,
        f=[p[0] for p in pairs],
        jac_f=[p[1] for p in pairs],
        h=lambda x: np.asarray(x, dtype=float) @ H.T,
        jac_h=lambda x: np.broadcast_to(H, np.asarray(x).shape[:-1] + H.shape).copy(),
    )
    return system, rng.standard_normal((T, 2))


def _selfcheck_lines():
    rng = np.random.default_rng(0)
    lines = []

    for label, auto in (("linear", linear_hopper()), ("nonlinear", nonlinear_hopper())):
        for meas_name in ("pos", "relative"):
            system = build_system(auto, measurement_by_name(meas_name))
            points = [rng.uniform(-0.5, 0.5, size=4) + [1.0, 0.3, 0.0, 0.0] for _ in range(10)]
            for chk in jacobian_selfcheck(system, points):
                lines.append((f"jacobian {label}/{meas_name} {chk.label}", chk.ok,
                              f"max rel err {chk.max_rel_err:.2e}"))

    # value-function gradient against central differences on a small problem
    auto = linear_hopper()
    meas = measurement_by_name("pos")
    record = simulate(auto, meas, [1.0, 0.5, 0.0, 0.0], "A_down", 12,
                      meas_noise_std=0.01, seed=3)
    system = build_system(auto, meas)
    problem = validate_problem(EstimationProblem(
        system=system, y=record.ys, Q=1e-2 * np.eye(4), R=1e-2 * np.eye(2)))
    x = record.xs + 0.02 * rng.standard_normal(record.xs.shape)
    _, grad, _ = value_and_grad(x, problem)
    h = 1e-6
    worst = 0.0
    for _ in range(8):
        t = int(rng.integers(0, x.shape[0]))
        j = int(rng.integers(0, 4))
        xp = x.copy(); xp[t, j] += h
        xm = x.copy(); xm[t, j] -= h
        vp, _, _ = value_and_grad(xp, problem)
        vm, _, _ = value_and_grad(xm, problem)
        fd = (vp - vm) / (2 * h)
        worst = max(worst, abs(fd - grad[t, j]) / max(1.0, abs(fd)))
    lines.append(("value-function gradient", worst < 1e-5, f"max rel err {worst:.2e}"))

    # dynamics information blocks: strictly positive definite on a generic
    # system (no direction is invariant under every mode's Jacobian).  The
    # hopper itself leaves a common height offset invariant in every mode,
    # so there U is only semidefinite and the measurement term closes the gap.
    gsys, gy = _generic_system(rng, T=10, n=3, M=2)
    gprob = validate_problem(EstimationProblem(
        system=gsys, y=gy, Q=np.eye(3), R=np.eye(2)))
    gx = rng.standard_normal((11, 3))
    gw = rng.uniform(0.2, 1.0, size=(10, 2))
    gw /= gw.sum(axis=1, keepdims=True)
    U = assemble_U(gx, gw, gprob)
    lam = float(np.linalg.eigvalsh(U.to_dense()).min())
    lines.append(("U positive definite", lam > 0, f"min eigenvalue {lam:.2e}"))

    # simplex projection sanity
    z = rng.standard_normal((200, 6))
    p = project_simplex(z)
    ok = bool(np.all(p >= -1e-12) and np.max(np.abs(p.sum(axis=1) - 1.0)) < 1e-9)
    lines.append(("simplex projection", ok, "rows nonnegative, sum to one"))
    return lines


def _cmd_selfcheck(_args) -> int:
    lines = _selfcheck_lines()
    failed = 0
    for label, ok, detail in lines:
        status = "PASS" if ok else "FAIL"
        if not ok:
            failed += 1
        print(f"[{status}] {label}: {detail}")
    print(f"{len(lines) - failed}/{len(lines)} checks passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchsmooth",
        description="Joint continuous-state / discrete-mode smoothing for "
        "switched systems, with a hybrid hopper test bench.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="simulate, estimate, write artifacts")
    p_est.add_argument("--config", required=True, help="scenario JSON file")
    p_est.add_argument("--out", default=None, help="artifact directory (overrides config)")
    p_est.set_defaults(fn=_cmd_estimate)

    p_sim = sub.add_parser("simulate", help="simulation only")
    p_sim.add_argument("--config", required=True, help="scenario JSON file")
    p_sim.add_argument("--out", default=None, help="artifact directory (overrides config)")
    p_sim.set_defaults(fn=_cmd_simulate)

    p_abl = sub.add_parser("ablation", help="run a paired comparison")
    p_abl.add_argument("name", choices=harness.ABLATIONS)
    p_abl.add_argument("--out", required=True, help="output directory")
    p_abl.set_defaults(fn=_cmd_ablation)

    p_chk = sub.add_parser("selfcheck", help="run model/gradient/definiteness checks")
    p_chk.set_defaults(fn=_cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SwitchSmoothError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
