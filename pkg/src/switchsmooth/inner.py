"""Inner mode-weight subproblem.

For fixed states the objective is an M-dimensional simplex-constrained
quadratic in each weight row, coupled along time by the smoothing chain:

    phi(w) = <s, w> + nu * sum_t ||w_{t+1} - w_t||^2 + (beta/2)||w||^2

with s the per-(t, m) process-penalty table.  phi is beta-strongly convex
with gradient Lipschitz constant L = beta + 8*nu (the chain Laplacian has
eigenvalues in [0, 4)), so an accelerated projected-gradient iteration with
fixed step 1/L and the strong-convexity momentum converges linearly.  The
smoothed value function is v_beta(x) = measurement cost + min_w phi(w).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Array, EstimationProblem
from .objective import (
    ProcessEval,
    grad_x_full,
    measurement_cost,
    process_eval,
)


def project_simplex(v: Array) -> Array:
    """Euclidean projection of each row of v onto the probability simplex.

    Sort-based exact algorithm; operates on the last axis, any leading shape.
    """
    v = np.asarray(v, dtype=float)
    M = v.shape[-1]
    u = np.flip(np.sort(v, axis=-1), axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, M + 1, dtype=float)
    # largest j with u_j > (cumsum_j - 1)/j; j=1 always qualifies
    valid = u * ind > css
    rho = M - 1 - np.argmax(np.flip(valid, axis=-1), axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - theta, 0.0)


def round_to_onehot(w: Array) -> Array:
    """Round each weight row to the vertex of its largest entry.

    Ties break toward the lowest mode index (argmax picks the first).
    """
    w = np.asarray(w, dtype=float)
    return np.eye(w.shape[-1])[np.argmax(w, axis=-1)]


@dataclass
class WSolveResult:
    w: Array            # (T, M), feasible
    value: float        # v_beta(x) = measurement cost + phi(w)
    phi: float          # inner objective at w
    iterations: int
    residual: float     # infinity norm of the projected-gradient step L*(y - w+)
    converged: bool     # False when the iteration cap was hit
    pe: ProcessEval     # process-residual tables at x, reusable downstream


def _phi_grad(w, s, nu, beta):
    g = s + beta * w
    if nu > 0.0 and w.shape[0] > 1:
        g[:-1] += 2.0 * nu * (w[:-1] - w[1:])
        g[1:] += 2.0 * nu * (w[1:] - w[:-1])
    return g


def _phi_value(w, s, nu, beta):
    val = float(np.sum(s * w)) + 0.5 * beta * float(np.sum(w * w))
    if nu > 0.0 and w.shape[0] > 1:
        dw = np.diff(w, axis=0)
        val += nu * float(np.sum(dw * dw))
    return val


def solve_w(
    x: Array,
    problem: EstimationProblem,
    w_init: Optional[Array] = None,
    pe: Optional[ProcessEval] = None,
) -> WSolveResult:
    """Minimize phi over the product of simplices; warm-startable.

    Stops when the projected-gradient residual drops below
    ``problem.inner.tol`` (infinity norm) or the iteration cap is hit, in
    which case ``converged`` is False and the best feasible iterate is
    returned.
    """
    if pe is None:
        pe = process_eval(x, problem)
    s = pe.s
    T, M = s.shape
    nu, beta = problem.nu, problem.beta
    L = beta + 8.0 * nu
    q = beta / L
    momentum = (1.0 - np.sqrt(q)) / (1.0 + np.sqrt(q))

    if w_init is None:
        w = np.full((T, M), 1.0 / M)
    else:
        w = project_simplex(np.asarray(w_init, dtype=float).reshape(T, M))
    y = w.copy()

    tol = problem.inner.tol
    residual = np.inf
    iters = 0
    for iters in range(1, problem.inner.max_iters + 1):
        g = _phi_grad(y, s, nu, beta)
        w_next = project_simplex(y - g / L)
        step = w_next - y
        residual = L * float(np.abs(step).max())
        if np.sum(g * (w_next - w)) > 0.0:  # momentum points uphill: restart
            y = w_next
        else:
            y = w_next + momentum * (w_next - w)
        w = w_next
        if residual < tol:
            break
    converged = residual < tol

    phi = _phi_value(w, s, nu, beta)
    value = measurement_cost(x, problem) + phi
    return WSolveResult(
        w=w,
        value=value,
        phi=phi,
        iterations=iters,
        residual=residual,
        converged=converged,
        pe=pe,
    )


def value_and_grad(
    x: Array,
    problem: EstimationProblem,
    w_init: Optional[Array] = None,
):
    """Smoothed value function and its gradient at x.

    The gradient is the partial x-gradient of f at the inner minimizer
    (the envelope rule; the beta term does not depend on x).
    Returns ``(value, grad, WSolveResult)``.
    """
    res = solve_w(x, problem, w_init=w_init)
    grad = grad_x_full(x, res.w, problem, pe=res.pe)
    return res.value, grad, res
