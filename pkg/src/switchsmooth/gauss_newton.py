"""Outer loop: convex-composite Gauss-Newton on the smoothed value function.

The smoothed value function v_beta(x) = min_w f(x, w) + (beta/2)||w||^2 is
rho(F(x)) for the split F = (f1, f2): f1 carries the process penalties, mode
smoothing and the beta term at the inner minimizer, f2 stacks the measurement
residuals, and rho(c, u) = c + 0.5||u||^2_{R^{-1}}.  Each iteration solves

    (U(x) + grad H^T R^{-1} grad H) d = -grad v_beta(x)

with U a block-tridiagonal curvature surrogate for the process penalties,
then backtracks on the exact v_beta along d against the decrease predicted by
the linearized composite model Delta(x; d).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import FactorizationFailure, InfeasibleW
from .model import Array, EstimationProblem, TrajectoryEstimate
from .objective import (
    check_simplex,
    full_objective,
    grad_x_full,
    measurement_residuals,
    penalty_weights,
    process_eval,
    smoothing_cost,
)
from .inner import WSolveResult, round_to_onehot, solve_w

# ---------------------------------------------------------------------------
# block-tridiagonal curvature


@dataclass
class BlockTridiagonal:
    """Symmetric block-tridiagonal matrix in (T+1) blocks of size n.

    ``sub[t]`` is the block at row t+1, column t; the upper diagonal is its
    transpose.
    """

    diag: Array  # (T+1, n, n)
    sub: Array   # (T, n, n)

    @property
    def nblocks(self) -> int:
        return self.diag.shape[0]

    def matvec(self, v: Array) -> Array:
        out = np.einsum("tab,tb->ta", self.diag, v)
        if self.sub.shape[0]:
            out[1:] += np.einsum("tab,tb->ta", self.sub, v[:-1])
            out[:-1] += np.einsum("tba,tb->ta", self.sub, v[1:])
        return out

    def to_dense(self) -> Array:
        n = self.diag.shape[1]
        N = self.nblocks * n
        dense = np.zeros((N, N))
        for t in range(self.nblocks):
            dense[t * n:(t + 1) * n, t * n:(t + 1) * n] = self.diag[t]
        for t in range(self.sub.shape[0]):
            dense[(t + 1) * n:(t + 2) * n, t * n:(t + 1) * n] = self.sub[t]
            dense[t * n:(t + 1) * n, (t + 1) * n:(t + 2) * n] = self.sub[t].T
        return dense


def assemble_U(
    x: Array,
    w: Array,
    problem: EstimationProblem,
    pe=None,
) -> BlockTridiagonal:
    """Process-penalty curvature U = sum_m G_m^T Qtilde_m^{-1} G_m.

    G_m differences the trajectory through mode m (identity at t+1, minus the
    mode Jacobian at t), and Qtilde_{m,t}^{-1} = c[t, m] * Q^{-1} with the
    Student's-t weights c = r*w/(r + ||e||^2_{Q^{-1}}) (or c = w/2 for the
    Gaussian penalty).  U has T+1 diagonal blocks: block 0 only sees the
    Jacobian term, block T only the identity term.
    """
    sys_ = problem.system
    x = np.asarray(x, dtype=float)
    w = check_simplex(w, sys_.M)
    if pe is None:
        pe = process_eval(x, problem)
    c = penalty_weights(pe, w, problem)                     # (T, M)
    Jf = np.stack([sys_.jac_f[m](x[:-1]) for m in range(sys_.M)], axis=1)
    Qi = problem.Q_inv
    n, T = sys_.n, problem.T

    diag = np.zeros((T + 1, n, n))
    sub = np.zeros((T, n, n))
    diag[1:] += np.einsum("tm,ab->tab", c, Qi)
    QiJ = np.einsum("ab,tmbc->tmac", Qi, Jf) * c[:, :, None, None]
    diag[:-1] += np.einsum("tmba,tmbc->tac", Jf, QiJ)
    sub -= QiJ.sum(axis=1)
    return BlockTridiagonal(diag=diag, sub=sub)


def measurement_gram(x: Array, problem: EstimationProblem) -> Array:
    """Per-sample blocks grad H^T R^{-1} grad H, shape (T, n, n)."""
    Jh = np.asarray(problem.system.jac_h(np.asarray(x, dtype=float)[:-1]), dtype=float)
    return np.einsum("tda,de,teb->tab", Jh, problem.R_inv, Jh)


def solve_block_tridiagonal(mat: BlockTridiagonal, rhs: Array) -> Array:
    """Solve ``mat @ d = rhs`` by block forward elimination / back substitution.

    Each pivot block is factored by Cholesky; a failure raises
    ``FactorizationFailure`` (the assembled system is positive definite for
    any feasible weights and positive definite Q, R).
    """
    nb = mat.nblocks
    rhs = np.asarray(rhs, dtype=float)
    piv = [None] * nb
    gains = [None] * nb          # C_{t-1}^{-1} A_t^T
    g = rhs.copy()
    C = mat.diag[0]
    for t in range(nb):
        if t > 0:
            A = mat.sub[t - 1]
            X = cho_solve(piv[t - 1], A.T)
            gains[t] = X
            C = mat.diag[t] - A @ X
            g[t] = g[t] - A @ cho_solve(piv[t - 1], g[t - 1])
        try:
            piv[t] = cho_factor(C, lower=True)
        except np.linalg.LinAlgError as exc:
            raise FactorizationFailure(f"pivot block {t} not positive definite") from exc
    d = np.empty_like(g)
    d[nb - 1] = cho_solve(piv[nb - 1], g[nb - 1])
    for t in range(nb - 2, -1, -1):
        d[t] = cho_solve(piv[t], g[t] - mat.sub[t].T @ d[t + 1])
    return d


# ---------------------------------------------------------------------------
# search direction and model decrease


@dataclass
class DirectionResult:
    d: Array              # (T+1, n)
    delta: float          # predicted decrease of the linearized composite
    rel_residual: float   # ||S d + grad|| / max(1, ||grad||)


def solve_direction(
    x: Array,
    w: Array,
    grad: Array,
    problem: EstimationProblem,
    U: Optional[BlockTridiagonal] = None,
    pe=None,
) -> DirectionResult:
    """Gauss-Newton direction and its model decrease Delta(x; d).

    Delta compares the linearized composite rho(F(x) + F'(x) d) + 0.5 d^T U d
    against rho(F(x)); at the exact solve it equals 0.5 * grad^T d <= 0.
    """
    if U is None:
        U = assemble_U(x, w, problem, pe=pe)
    gram = measurement_gram(x, problem)
    S = BlockTridiagonal(diag=U.diag.copy(), sub=U.sub)
    S.diag[:-1] += gram
    if problem.ridge > 0.0:
        idx = np.arange(S.diag.shape[-1])
        S.diag[:, idx, idx] += problem.ridge
    d = solve_block_tridiagonal(S, -grad)

    resid = S.matvec(d) + grad
    rel_residual = float(np.linalg.norm(resid)) / max(1.0, float(np.linalg.norm(grad)))

    f2 = measurement_residuals(x, problem)
    Jh = np.asarray(problem.system.jac_h(np.asarray(x, dtype=float)[:-1]), dtype=float)
    Jhd = np.einsum("tda,ta->td", Jh, d[:-1])
    Rz = problem.R_inv
    meas_grad = np.zeros_like(grad)
    meas_grad[:-1] = np.einsum("tda,td->ta", Jh, f2 @ Rz.T)
    grad_f1 = grad - meas_grad
    delta = float(np.sum(grad_f1 * d))
    delta += float(np.sum((f2 @ Rz.T) * Jhd)) + 0.5 * float(np.sum((Jhd @ Rz.T) * Jhd))
    delta += 0.5 * float(np.sum(d * U.matvec(d)))
    return DirectionResult(d=d, delta=delta, rel_residual=rel_residual)


# ---------------------------------------------------------------------------
# line search


@dataclass
class LineSearchResult:
    x: Array
    value: float
    payload: object       # whatever the value oracle returned alongside
    step: float
    backtracks: int
    success: bool


def line_search(
    x: Array,
    d: Array,
    delta: float,
    v0: float,
    value_fn: Callable[[Array], tuple],
    problem: EstimationProblem,
) -> LineSearchResult:
    """Armijo backtracking on the exact objective along d.

    Accepts the first step gamma^l with
    ``value(x + gamma^l d) <= v0 + c * gamma^l * delta``; each trial
    re-evaluates the full objective (for the variable-weight mode that means
    a fresh inner solve).  Exhausting the budget returns success=False with
    the incumbent point.
    """
    ls = problem.line_search
    step = 1.0
    for l in range(ls.max_backtracks):
        x_trial = x + step * d
        value, payload = value_fn(x_trial)
        if value <= v0 + ls.c * step * delta:
            return LineSearchResult(
                x=x_trial, value=value, payload=payload,
                step=step, backtracks=l, success=True,
            )
        step *= ls.gamma
    return LineSearchResult(
        x=x, value=v0, payload=None, step=0.0,
        backtracks=ls.max_backtracks, success=False,
    )


# ---------------------------------------------------------------------------
# outer loop


@dataclass
class ConvergenceReport:
    iterations: int               # accepted outer steps
    stop_reason: str              # converged | max_iterations | line_search_stalled
    objective_trace: Array        # v_beta after each accepted step (incl. start)
    neg_delta_trace: Array        # -Delta at each stopping test, in order
    final_neg_delta: float        # -Delta at the stopping test
    max_direction_norm: float
    inner_iterations: int         # total inner-solver iterations
    inner_cap_hits: int           # inner solves that hit their iteration cap
    backtracks: int               # total line-search backtracks
    direction_mode: str
    epsilon: float


def _fixed_w_eval(x: Array, w: Array, problem: EstimationProblem) -> WSolveResult:
    # mimic an inner solve with w pinned (ablation mode)
    pe = process_eval(x, problem)
    phi = float(np.sum(pe.s * w)) + smoothing_cost(w, problem.nu)
    phi += 0.5 * problem.beta * float(np.sum(w * w))
    value = full_objective(x, w, problem, with_beta=True, pe=pe)
    return WSolveResult(
        w=w, value=value, phi=phi, iterations=0,
        residual=0.0, converged=True, pe=pe,
    )


def estimate(
    problem: EstimationProblem,
    x_init: Optional[Array] = None,
    w_init: Optional[Array] = None,
    w_fixed: Optional[Array] = None,
    direction_mode: str = "gauss_newton",
):
    """Run the smoother.  Returns (TrajectoryEstimate, ConvergenceReport).

    ``direction_mode`` selects Gauss-Newton or steepest descent on v_beta
    (the latter uses the quadratic model Delta = grad^T d + 0.5||d||^2).
    ``w_fixed`` pins the mode weights (no inner solves), which turns the
    problem into a smooth trajectory fit for benchmarking.
    """
    if not problem.validated:
        raise InfeasibleW("problem must pass validate_problem before estimate")
    if direction_mode not in ("gauss_newton", "steepest_descent"):
        raise ValueError(f"unknown direction_mode {direction_mode!r}")
    sys_ = problem.system
    T = problem.T
    x = (
        np.zeros((T + 1, sys_.n))
        if x_init is None
        else np.array(x_init, dtype=float).reshape(T + 1, sys_.n)
    )

    if w_fixed is not None:
        w_fixed = check_simplex(np.asarray(w_fixed, dtype=float), sys_.M)
        wres = _fixed_w_eval(x, w_fixed, problem)
        value_fn = lambda xt: (lambda r: (r.value, r))(_fixed_w_eval(xt, w_fixed, problem))
    else:
        wres = solve_w(x, problem, w_init=w_init)
        value_fn = lambda xt: (lambda r: (r.value, r))(
            solve_w(xt, problem, w_init=wres.w)
        )

    trace = [wres.value]
    neg_deltas = []
    inner_total = wres.iterations
    inner_caps = int(not wres.converged)
    backtracks = 0
    max_dnorm = 0.0
    neg_delta = np.inf
    stop_reason = "max_iterations"
    iterations = 0

    for _ in range(problem.outer_max_iters):
        grad = grad_x_full(x, wres.w, problem, pe=wres.pe)
        if direction_mode == "gauss_newton":
            dres = solve_direction(x, wres.w, grad, problem, pe=wres.pe)
            d, delta = dres.d, dres.delta
        else:
            d = -grad
            delta = -0.5 * float(np.sum(grad * grad))
        neg_delta = -delta
        neg_deltas.append(neg_delta)
        if neg_delta <= problem.epsilon:
            stop_reason = "converged"
            break
        ls = line_search(x, d, delta, wres.value, value_fn, problem)
        backtracks += ls.backtracks
        if not ls.success:
            stop_reason = "line_search_stalled"
            break
        x = ls.x
        wres = ls.payload
        inner_total += wres.iterations
        inner_caps += int(not wres.converged)
        trace.append(wres.value)
        max_dnorm = max(max_dnorm, float(np.abs(d).max()) * ls.step)
        iterations += 1

    w_rel = wres.w
    est = TrajectoryEstimate(
        states=x,
        w_relaxed=w_rel,
        w_rounded=round_to_onehot(w_rel),
        modes=np.argmax(w_rel, axis=1),
        objective_trace=np.asarray(trace),
    )
    report = ConvergenceReport(
        iterations=iterations,
        stop_reason=stop_reason,
        objective_trace=np.asarray(trace),
        neg_delta_trace=np.asarray(neg_deltas),
        final_neg_delta=float(neg_delta),
        max_direction_norm=max_dnorm,
        inner_iterations=inner_total,
        inner_cap_hits=inner_caps,
        backtracks=backtracks,
        direction_mode=direction_mode,
        epsilon=problem.epsilon,
    )
    return est, report
