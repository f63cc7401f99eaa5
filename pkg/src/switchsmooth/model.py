"""Core problem types: switched-system models and estimation problems.

A switched system is a finite family of smooth discrete-time process models
F_1..F_M over a shared state space together with one measurement map H.  All
model callables follow a batched convention: they accept states of shape
``(..., n)`` and return ``(..., n)`` (Jacobians ``(..., n, n)``), so a whole
trajectory can be pushed through one call.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    BadHyperparameter,
    DimensionMismatch,
    NonFiniteModelOutput,
    NonPositiveDefinite,
)

Array = np.ndarray

ModelFn = Callable[[Array], Array]
JacFn = Callable[[Array], Array]


@dataclass(frozen=True)
class SwitchedSystem:
    """Family of process models plus a single measurement map.

    Parameters
    ----------
    n, d, M : int
        State dimension, measurement dimension, number of modes.
    f : tuple of callables
        Process models, one per mode; ``f[m](x)`` maps ``(..., n) -> (..., n)``.
    jac_f : tuple of callables
        Jacobians of the process models, ``(..., n) -> (..., n, n)``.
    h : callable
        Measurement map, ``(..., n) -> (..., d)``.
    jac_h : callable
        Measurement Jacobian, ``(..., n) -> (..., d, n)``.
    mode_labels : tuple of str
        Human-readable mode names, used in reports.
    """

    n: int
    d: int
    M: int
    f: tuple
    jac_f: tuple
    h: Callable[[Array], Array]
    jac_h: Callable[[Array], Array]
    mode_labels: tuple = ()

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.M < 1:
            raise DimensionMismatch(
                f"n, d, M must be >= 1, got ({self.n}, {self.d}, {self.M})"
            )
        if len(self.f) != self.M or len(self.jac_f) != self.M:
            raise DimensionMismatch(
                f"expected {self.M} process models and Jacobians, "
                f"got {len(self.f)} / {len(self.jac_f)}"
            )
        if self.mode_labels and len(self.mode_labels) != self.M:
            raise DimensionMismatch("mode_labels length must equal M")
        if not self.mode_labels:
            object.__setattr__(
                self, "mode_labels", tuple(f"mode_{m}" for m in range(self.M))
            )


@dataclass(frozen=True)
class LineSearchParams:
    """Armijo backtracking constants.

    The default sufficient-decrease fraction is deliberately large.  The
    direction system built from the reweighted dynamics blocks is half the
    curvature of the local quadratic upper bound on the penalty, so the unit
    step overshoots that bound's minimizer by a factor of two.  A fraction
    just under 1/2 rejects the overshooting unit step and accepts the halved
    one, which restores fast, monotone convergence; tiny fractions accept the
    overshoot and crawl.
    """

    gamma: float = 0.5        # backtracking factor, in (0, 1)
    c: float = 0.45           # sufficient-decrease fraction, in (0, 1)
    max_backtracks: int = 40


@dataclass(frozen=True)
class InnerParams:
    tol: float = 1e-9         # projected-gradient residual target
    max_iters: int = 20000


@dataclass(frozen=True)
class EstimationProblem:
    """Everything needed to run the smoother on one measurement record.

    ``validate_problem`` must be called before use; it checks shapes and
    definiteness and returns a copy with the covariance factors cached.
    ``Q_inv_sqrt`` is the inverse Cholesky factor, so
    ``Q_inv_sqrt.T @ Q_inv_sqrt == inv(Q)``.
    """

    system: SwitchedSystem
    y: Array                              # measurements, (T, d)
    Q: Array                              # process covariance, (n, n)
    R: Array                              # measurement covariance, (d, d)
    r: float = 0.01                       # Student's-t degrees-of-freedom weight
    nu: float = 1.0                       # mode-smoothing weight
    beta: float = 1e-4                    # value-function smoothing
    epsilon: float = 1e-6                 # outer stopping tolerance on -Delta
    process_penalty: str = "student_t"    # "student_t" | "gaussian"
    line_search: LineSearchParams = LineSearchParams()
    inner: InnerParams = InnerParams()
    outer_max_iters: int = 200
    ridge: float = 1e-9                   # Tikhonov term added to the direction
    # system; keeps it factorable when relative measurements leave a common
    # translation/velocity offset unobserved
    # cached factors, filled by validate_problem
    Q_inv: Optional[Array] = None
    R_inv: Optional[Array] = None
    Q_inv_sqrt: Optional[Array] = None
    R_inv_sqrt: Optional[Array] = None

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def validated(self) -> bool:
        return self.Q_inv is not None


def inv_sqrt_factor(mat: Array, name: str) -> Array:
    """Inverse Cholesky factor of a symmetric positive definite matrix.

    Returns lower-triangular ``S`` with ``S.T @ S == inv(mat)``.  Diagonal
    matrices take a cheap elementwise path.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise NonPositiveDefinite(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(mat).max()))
    if np.abs(mat - mat.T).max() > 1e-12 * scale:
        raise NonPositiveDefinite(f"{name} is not symmetric")
    diag = np.diagonal(mat)
    if np.count_nonzero(mat - np.diag(diag)) == 0:
        if np.any(diag <= 0):
            raise NonPositiveDefinite(f"{name} has a non-positive diagonal entry")
        return np.diag(1.0 / np.sqrt(diag))
    try:
        L = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite(f"{name} is not positive definite") from exc
    return solve_triangular(L, np.eye(mat.shape[0]), lower=True)


def validate_problem(problem: EstimationProblem) -> EstimationProblem:
    """Shape/definiteness/hyperparameter checks; returns a cached copy.

    Raises
    ------
    DimensionMismatch, NonPositiveDefinite, BadHyperparameter
    """
    sys_ = problem.system
    y = np.asarray(problem.y, dtype=float)
    if y.ndim != 2 or y.shape[1] != sys_.d:
        raise DimensionMismatch(
            f"y must have shape (T, {sys_.d}), got {y.shape}"
        )
    if y.shape[0] < 2:
        raise BadHyperparameter("need at least T = 2 measurements")
    if not np.all(np.isfinite(y)):
        raise BadHyperparameter("measurements contain non-finite values")

    Q = np.asarray(problem.Q, dtype=float)
    R = np.asarray(problem.R, dtype=float)
    if Q.shape != (sys_.n, sys_.n):
        raise DimensionMismatch(f"Q must be ({sys_.n}, {sys_.n}), got {Q.shape}")
    if R.shape != (sys_.d, sys_.d):
        raise DimensionMismatch(f"R must be ({sys_.d}, {sys_.d}), got {R.shape}")

    if not problem.r > 0:
        raise BadHyperparameter(f"r must be > 0, got {problem.r}")
    if problem.nu < 0:
        raise BadHyperparameter(f"nu must be >= 0, got {problem.nu}")
    if not problem.beta > 0:
        raise BadHyperparameter(f"beta must be > 0, got {problem.beta}")
    if not problem.epsilon > 0:
        raise BadHyperparameter(f"epsilon must be > 0, got {problem.epsilon}")
    if problem.process_penalty not in ("student_t", "gaussian"):
        raise BadHyperparameter(
            f"unknown process penalty {problem.process_penalty!r}"
        )
    ls = problem.line_search
    if not (0.0 < ls.gamma < 1.0 and 0.0 < ls.c < 1.0 and ls.max_backtracks >= 1):
        raise BadHyperparameter(f"bad line-search parameters {ls}")
    inner = problem.inner
    if not (inner.tol > 0 and inner.max_iters >= 1):
        raise BadHyperparameter(f"bad inner-solver parameters {inner}")
    if problem.outer_max_iters < 1:
        raise BadHyperparameter("outer_max_iters must be >= 1")
    if problem.ridge < 0:
        raise BadHyperparameter(f"ridge must be >= 0, got {problem.ridge}")

    q_is = inv_sqrt_factor(Q, "Q")
    r_is = inv_sqrt_factor(R, "R")
    return dataclasses.replace(
        problem,
        y=y,
        Q=Q,
        R=R,
        Q_inv=q_is.T @ q_is,
        R_inv=r_is.T @ r_is,
        Q_inv_sqrt=q_is,
        R_inv_sqrt=r_is,
    )


@dataclass
class TrajectoryEstimate:
    """Output of the smoother."""

    states: Array            # (T+1, n)
    w_relaxed: Array         # (T, M), rows on the simplex
    w_rounded: Array         # (T, M), one-hot
    modes: Array             # (T,), argmax of w_relaxed
    objective_trace: Array   # composite objective after each accepted step


def finite_difference_jacobian(fn, x: Array, h: float) -> Array:
    """Central-difference Jacobian of ``fn`` at a single state ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fn(x), dtype=float)
    J = np.empty((f0.shape[-1], x.shape[-1]))
    for j in range(x.shape[-1]):
        e = np.zeros_like(x)
        e[j] = h
        J[:, j] = (np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * h)
    return J


@dataclass
class JacobianCheck:
    label: str
    max_rel_err: float
    ok: bool


def jacobian_selfcheck(
    system: SwitchedSystem,
    points: Sequence[Array],
    tol: float = 1e-5,
) -> list:
    """Compare analytic Jacobians against central differences.

    Step size is ``1e-6 * max(1, |x|_inf)`` per point.  Returns one
    ``JacobianCheck`` per process model plus one for the measurement map,
    each carrying the worst relative Frobenius error over all points.

    Raises ``NonFiniteModelOutput`` if any model output or Jacobian is
    non-finite at a test point.
    """
    maps = [(f"f[{m}] ({system.mode_labels[m]})", system.f[m], system.jac_f[m])
            for m in range(system.M)]
    maps.append(("h", system.h, system.jac_h))
    out = []
    for label, fn, jac in maps:
        worst = 0.0
        for x in points:
            x = np.asarray(x, dtype=float)
            h = 1e-6 * max(1.0, float(np.abs(x).max()))
            J = np.asarray(jac(x), dtype=float)
            val = np.asarray(fn(x), dtype=float)
            if not (np.all(np.isfinite(J)) and np.all(np.isfinite(val))):
                raise NonFiniteModelOutput(f"{label} non-finite at x={x}")
            J_fd = finite_difference_jacobian(fn, x, h)
            err = np.linalg.norm(J - J_fd) / max(1.0, np.linalg.norm(J_fd))
            worst = max(worst, err)
        out.append(JacobianCheck(label=label, max_rel_err=worst, ok=worst < tol))
    return out
