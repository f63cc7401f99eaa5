"""Relaxed joint objective over continuous states and mode weights.

For states x_0..x_T and simplex weights w_0..w_{T-1} the objective is

    f(x, w) = sum_t [ 0.5 * ||R^{-1/2}(y_t - H(x_t))||^2
                      + sum_m w_t[m] * s(x_{t+1} - F_m(x_t)) ]
              + nu * sum_t ||w_{t+1} - w_t||^2

where s is a heavy-tailed (Student's-t) or Gaussian penalty on the process
residual.  Rows of w live on the probability simplex; infeasible w raises
``InfeasibleW`` rather than returning +inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InfeasibleW, NonFiniteModelOutput
from .model import Array, EstimationProblem

SIMPLEX_TOL = 1e-9


def student_t_nll(e: Array, Q_inv_sqrt: Array, r: float):
    """Heavy-tailed penalty s(e) = r*log(r + ||Q^{-1/2} e||^2) - r*log(r).

    Returns ``(value, grad)`` with grad = 2r * Q^{-1} e / (r + ||e||^2_{Q^{-1}}).
    Zero residual gives exactly 0.  The penalty grows logarithmically, so a
    single large residual (an impact) costs little more than a moderate one.
    """
    e = np.asarray(e, dtype=float)
    z = e @ Q_inv_sqrt.T
    n2 = float(z @ z)
    val = r * np.log1p(n2 / r)
    grad = (2.0 * r / (r + n2)) * (Q_inv_sqrt.T @ z)
    return val, grad


def gaussian_nll(delta: Array, S_inv_sqrt: Array) -> float:
    """0.5 * ||S^{-1/2} delta||^2 for a single residual vector."""
    z = np.asarray(delta, dtype=float) @ S_inv_sqrt.T
    return 0.5 * float(z @ z)


def check_simplex(w: Array, M: int, tol: float = SIMPLEX_TOL) -> Array:
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[1] != M:
        raise DimensionMismatch(f"w must have shape (T, {M}), got {w.shape}")
    if w.min(initial=0.0) < -tol or np.abs(w.sum(axis=1) - 1.0).max() > tol:
        raise InfeasibleW(
            f"w leaves the simplex: min={w.min():.3e}, "
            f"max row-sum error={np.abs(w.sum(axis=1) - 1.0).max():.3e}"
        )
    return w


@dataclass
class ProcessEval:
    """Batched per-(t, m) process residual quantities.

    e[t, m] = x_{t+1} - F_m(x_t); qnorm2 = ||e||^2 in the Q^{-1} metric;
    s = the active penalty value.  Computed once and shared by the objective,
    its gradient, the inner solver's cost table, and the curvature blocks.
    """

    e: Array        # (T, M, n)
    qnorm2: Array   # (T, M)
    s: Array        # (T, M)


def process_eval(x: Array, problem: EstimationProblem) -> ProcessEval:
    sys_ = problem.system
    x = np.asarray(x, dtype=float)
    T = x.shape[0] - 1
    preds = np.stack([sys_.f[m](x[:-1]) for m in range(sys_.M)], axis=1)
    if not np.all(np.isfinite(preds)):
        raise NonFiniteModelOutput("a process model returned non-finite values")
    e = x[1:, None, :] - preds
    z = e @ problem.Q_inv_sqrt.T
    qnorm2 = np.einsum("tmi,tmi->tm", z, z)
    r = problem.r
    if problem.process_penalty == "student_t":
        s = r * np.log1p(qnorm2 / r)
    else:
        s = 0.5 * qnorm2
    return ProcessEval(e=e, qnorm2=qnorm2, s=s)


def measurement_residuals(x: Array, problem: EstimationProblem) -> Array:
    """H(x_t) - y_t for t = 0..T-1, shape (T, d)."""
    x = np.asarray(x, dtype=float)
    res = np.asarray(problem.system.h(x[:-1]), dtype=float) - problem.y
    if not np.all(np.isfinite(res)):
        raise NonFiniteModelOutput("measurement map returned non-finite values")
    return res


def measurement_cost(x: Array, problem: EstimationProblem) -> float:
    z = measurement_residuals(x, problem) @ problem.R_inv_sqrt.T
    return 0.5 * float(np.sum(z * z))


def smoothing_cost(w: Array, nu: float) -> float:
    if w.shape[0] < 2 or nu == 0.0:
        return 0.0
    dw = np.diff(w, axis=0)
    return nu * float(np.sum(dw * dw))


def full_objective(
    x: Array,
    w: Array,
    problem: EstimationProblem,
    with_beta: bool = False,
    pe: ProcessEval = None,
) -> float:
    """Evaluate f(x, w); optionally add the (beta/2)||w||^2 smoothing term."""
    w = check_simplex(w, problem.system.M)
    T = problem.T
    if x.shape != (T + 1, problem.system.n):
        raise DimensionMismatch(
            f"x must have shape ({T + 1}, {problem.system.n}), got {x.shape}"
        )
    if w.shape[0] != T:
        raise DimensionMismatch(f"w must have {T} rows, got {w.shape[0]}")
    if pe is None:
        pe = process_eval(x, problem)
    val = measurement_cost(x, problem)
    val += float(np.sum(w * pe.s))
    val += smoothing_cost(w, problem.nu)
    if with_beta:
        val += 0.5 * problem.beta * float(np.sum(w * w))
    return val


def reduce_over_onehot(svals: Array):
    """Minimize sum_m w[m]*svals[..., m] over one-hot w.

    The minimum over the vertices of the simplex is the componentwise min;
    ties break toward the lowest mode index.  Returns (min values, one-hot w).
    """
    svals = np.asarray(svals, dtype=float)
    idx = np.argmin(svals, axis=-1)
    w = np.eye(svals.shape[-1])[idx]
    return np.min(svals, axis=-1), w


def penalty_weights(pe: ProcessEval, w: Array, problem: EstimationProblem) -> Array:
    """Scalar curvature/gradient weights c[t, m].

    Student's-t: c = r * w / (r + ||e||^2_{Q^{-1}}); Gaussian: c = w / 2.
    Both make 2 * c * Q^{-1} e the exact gradient of w_t[m] * s(e) in e, and
    both make c * Q^{-1} half the curvature of the local quadratic upper
    bound, so the outer line search behaves the same under either penalty.
    """
    if problem.process_penalty == "student_t":
        return problem.r * w / (problem.r + pe.qnorm2)
    return 0.5 * np.asarray(w, dtype=float)


def grad_x_full(
    x: Array,
    w: Array,
    problem: EstimationProblem,
    pe: ProcessEval = None,
) -> Array:
    """Gradient of f(x, w) in x, shape (T+1, n).  w is held fixed."""
    sys_ = problem.system
    x = np.asarray(x, dtype=float)
    w = check_simplex(w, sys_.M)
    if pe is None:
        pe = process_eval(x, problem)

    c = penalty_weights(pe, w, problem)
    # ds/de = 2 c Q^{-1} e, summed over modes at each t
    ge = 2.0 * np.einsum("ab,tmb->tma", problem.Q_inv, pe.e) * c[:, :, None]
    grad = np.zeros_like(x)
    grad[1:] += ge.sum(axis=1)
    Jf = np.stack([sys_.jac_f[m](x[:-1]) for m in range(sys_.M)], axis=1)
    grad[:-1] -= np.einsum("tmab,tma->tb", Jf, ge)

    res = measurement_residuals(x, problem)
    Jh = np.asarray(sys_.jac_h(x[:-1]), dtype=float)
    grad[:-1] += np.einsum("tda,td->ta", Jh, res @ problem.R_inv.T)
    return grad


@dataclass
class CompositeSplit:
    """Value pieces of the composite rho(F(x)) = f1 + 0.5||f2||^2_{R^{-1}}.

    f1 collects everything except the measurement quadratic (process
    penalties, mode smoothing, the (beta/2)||w||^2 term); f2 stacks the
    measurement residuals.  With w the minimizer of the inner problem,
    rho(F(x)) equals the smoothed value function at x.
    """

    f1: float
    f2: Array  # (T, d)

    def rho(self, problem: EstimationProblem) -> float:
        z = self.f2 @ problem.R_inv_sqrt.T
        return self.f1 + 0.5 * float(np.sum(z * z))


def composite_split(
    x: Array,
    w: Array,
    problem: EstimationProblem,
    pe: ProcessEval = None,
) -> CompositeSplit:
    w = check_simplex(w, problem.system.M)
    if pe is None:
        pe = process_eval(x, problem)
    f1 = float(np.sum(w * pe.s))
    f1 += smoothing_cost(w, problem.nu)
    f1 += 0.5 * problem.beta * float(np.sum(w * w))
    return CompositeSplit(f1=f1, f2=measurement_residuals(x, problem))
