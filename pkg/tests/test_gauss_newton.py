"""Tests for the curvature blocks, banded solver, line search, and outer loop."""

import numpy as np
import pytest

from switchsmooth.errors import FactorizationFailure, InfeasibleW
from switchsmooth.gauss_newton import (
    BlockTridiagonal,
    ConvergenceReport,
    assemble_U,
    estimate,
    line_search,
    measurement_gram,
    solve_block_tridiagonal,
    solve_direction,
)
from switchsmooth.model import EstimationProblem, SwitchedSystem, validate_problem
from switchsmooth.objective import full_objective, grad_x_full, process_eval

from helpers import interior_simplex, make_generic_problem


def _random_block_tridiagonal(rng, nb, n, spd_shift=None):
    diag = rng.standard_normal((nb, n, n))
    diag = 0.5 * (diag + np.transpose(diag, (0, 2, 1)))
    sub = rng.standard_normal((nb - 1, n, n))
    mat = BlockTridiagonal(diag=diag, sub=sub)
    if spd_shift is not None:
        lam = np.linalg.eigvalsh(mat.to_dense()).min()
        shift = max(0.0, -lam) + spd_shift
        idx = np.arange(n)
        mat.diag[:, idx, idx] += shift
    return mat


def _dense_U_oracle(x, w, problem):
    """Direct sum over (t, m) of G^T (c Q^{-1}) G with explicit block rows."""
    sys_ = problem.system
    T, n = problem.T, sys_.n
    pe = process_eval(x, problem)
    if problem.process_penalty == "student_t":
        c = problem.r * w / (problem.r + pe.qnorm2)
    else:
        c = 0.5 * w
    N = (T + 1) * n
    U = np.zeros((N, N))
    for t in range(T):
        for m in range(sys_.M):
            G = np.zeros((n, N))
            J = sys_.jac_f[m](x[t])
            G[:, t * n:(t + 1) * n] = -J
            G[:, (t + 1) * n:(t + 2) * n] = np.eye(n)
            U += G.T @ (c[t, m] * problem.Q_inv) @ G
    return U


# ---------------------------------------------------------------------------
# block-tridiagonal structure


def test_matvec_matches_dense():
    rng = np.random.default_rng(0)
    mat = _random_block_tridiagonal(rng, 6, 3)
    v = rng.standard_normal((6, 3))
    got = mat.matvec(v)
    want = (mat.to_dense() @ v.ravel()).reshape(6, 3)
    assert np.allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("penalty", ["student_t", "gaussian"])
def test_assemble_U_matches_factored_form_oracle(penalty):
    rng = np.random.default_rng(1)
    for trial in range(10):
        T = int(rng.integers(2, 7))
        M = int(rng.integers(2, 4))
        problem = make_generic_problem(
            rng, T=T, M=M, process_penalty=penalty, r=0.3,
            Q=0.4 * np.eye(3),
        )
        x = rng.standard_normal((T + 1, 3))
        w = interior_simplex(rng, T, M)
        U = assemble_U(x, w, problem)
        dense = U.to_dense()
        assert np.allclose(dense, _dense_U_oracle(x, w, problem), atol=1e-12)
        assert np.allclose(dense, dense.T, atol=1e-14)


def test_assembled_U_is_positive_definite_on_generic_systems():
    rng = np.random.default_rng(2)
    for trial in range(10):
        problem = make_generic_problem(rng, T=5, M=2)
        x = rng.standard_normal((6, 3))
        w = interior_simplex(rng, 5, 2)
        lam = np.linalg.eigvalsh(assemble_U(x, w, problem).to_dense())
        assert lam.min() > 0.0


def test_measurement_gram_matches_direct_product():
    rng = np.random.default_rng(3)
    problem = make_generic_problem(rng, T=4, R=2.0 * np.eye(2))
    x = rng.standard_normal((5, 3))
    gram = measurement_gram(x, problem)
    Jh = problem.system.jac_h(x[:-1])
    for t in range(4):
        want = Jh[t].T @ problem.R_inv @ Jh[t]
        assert np.allclose(gram[t], want, atol=1e-12)


# ---------------------------------------------------------------------------
# banded solve


def test_block_solve_matches_dense_solve():
    rng = np.random.default_rng(4)
    for trial in range(10):
        nb = int(rng.integers(2, 9))
        n = int(rng.integers(1, 5))
        mat = _random_block_tridiagonal(rng, nb, n, spd_shift=0.5)
        rhs = rng.standard_normal((nb, n))
        d = solve_block_tridiagonal(mat, rhs)
        want = np.linalg.solve(mat.to_dense(), rhs.ravel()).reshape(nb, n)
        assert np.allclose(d, want, atol=1e-10)


def test_block_solve_rejects_indefinite_matrix():
    mat = BlockTridiagonal(
        diag=np.array([[[1.0, 0.0], [0.0, -1.0]], [[1.0, 0.0], [0.0, 1.0]]]),
        sub=np.zeros((1, 2, 2)),
    )
    with pytest.raises(FactorizationFailure):
        solve_block_tridiagonal(mat, np.ones((2, 2)))


# ---------------------------------------------------------------------------
# search direction


def test_direction_solves_system_and_predicts_decrease():
    rng = np.random.default_rng(5)
    for trial in range(5):
        ridge = float(rng.choice([0.0, 1e-6]))
        problem = make_generic_problem(rng, T=6, r=0.3, nu=0.5, ridge=ridge)
        x = rng.standard_normal((7, 3))
        w = interior_simplex(rng, 6, 2)
        grad = grad_x_full(x, w, problem)
        res = solve_direction(x, w, grad, problem)
        assert res.rel_residual < 1e-10
        # at the exact solve, Delta = 0.5 g.d - (ridge/2)||d||^2 <= 0
        want = 0.5 * float(np.sum(grad * res.d))
        want -= 0.5 * ridge * float(np.sum(res.d * res.d))
        assert res.delta == pytest.approx(want, rel=1e-9, abs=1e-12)
        assert res.delta <= 0.0


def test_direction_is_descent_for_the_objective():
    rng = np.random.default_rng(6)
    problem = make_generic_problem(rng, T=6, r=0.3, nu=0.5)
    x = rng.standard_normal((7, 3))
    w = interior_simplex(rng, 6, 2)
    grad = grad_x_full(x, w, problem)
    res = solve_direction(x, w, grad, problem)
    slope = float(np.sum(grad * res.d))
    assert slope < 0.0
    h = 1e-6
    f0 = full_objective(x, w, problem)
    f1 = full_objective(x + h * res.d, w, problem)
    assert f1 < f0


# ---------------------------------------------------------------------------
# line search


def test_line_search_accepts_exact_model_step():
    problem = make_generic_problem(np.random.default_rng(7), T=4)
    x = np.full((5, 3), 2.0)
    d = -x
    value_fn = lambda xt: (0.5 * float(np.sum(xt * xt)), None)
    v0 = 0.5 * float(np.sum(x * x))
    res = line_search(x, d, -2.0 * v0 + v0, v0, value_fn, problem)
    assert res.success
    assert res.step == 1.0
    assert res.backtracks == 0
    assert res.value == 0.0


def test_line_search_backtracks_until_sufficient_decrease():
    problem = make_generic_problem(np.random.default_rng(8), T=4)
    x = np.zeros((5, 3))
    d = np.ones((5, 3))
    # value grows along d: the step must shrink until the Armijo test passes
    value_fn = lambda xt: (float(np.sum(xt * xt)) - 0.1 * float(np.sum(xt)), None)
    v0 = 0.0
    delta = -0.1 * d.sum()
    res = line_search(x, d, delta, v0, value_fn, problem)
    assert res.success
    assert res.backtracks > 0
    assert res.value <= v0 + problem.line_search.c * res.step * delta


def test_line_search_fails_on_ascent_direction():
    problem = make_generic_problem(np.random.default_rng(9), T=4)
    x = np.zeros((5, 3))
    d = np.ones((5, 3))
    value_fn = lambda xt: (float(np.sum(xt)), None)
    res = line_search(x, d, -1.0, 0.0, value_fn, problem)
    assert not res.success
    assert res.step == 0.0
    assert np.array_equal(res.x, x)
    assert res.backtracks == problem.line_search.max_backtracks


# ---------------------------------------------------------------------------
# outer loop: fixed weights on a linear-Gaussian problem has a closed form


def _make_linear_problem(rng, T=6, n=3, M=2, d=2, **kwargs):
    mats = [np.eye(n) + 0.2 * rng.standard_normal((n, n)) for _ in range(M)]
    H = rng.standard_normal((d, n))
    f = [lambda x, A=A: np.asarray(x, dtype=float) @ A.T for A in mats]
    jac = [
        lambda x, A=A: np.broadcast_to(
            A, np.asarray(x).shape[:-1] + A.shape
        ).copy()
        for A in mats
    ]
    system = SwitchedSystem(
        n=n, d=d, M=M, f=f, jac_f=jac,
        h=lambda x: np.asarray(x, dtype=float) @ H.T,
        jac_h=lambda x: np.broadcast_to(H, np.asarray(x).shape[:-1] + H.shape).copy(),
    )
    y = rng.standard_normal((T, d))
    defaults = dict(Q=np.eye(n), R=np.eye(d), process_penalty="gaussian")
    defaults.update(kwargs)
    return validate_problem(EstimationProblem(system=system, y=y, **defaults))


def test_estimate_fixed_w_matches_dense_quadratic_solution():
    rng = np.random.default_rng(10)
    problem = _make_linear_problem(rng, T=6, epsilon=1e-12)
    w = interior_simplex(rng, 6, 2)
    est, report = estimate(problem, w_fixed=w)
    assert report.stop_reason == "converged"
    # oracle: the fixed-w Gaussian objective is an exact quadratic whose
    # Hessian is twice the assembled U plus the measurement Gram blocks
    x0 = np.zeros((7, 3))
    U2 = 2.0 * assemble_U(x0, w, problem).to_dense()
    gram = measurement_gram(x0, problem)
    for t in range(6):
        U2[t * 3:(t + 1) * 3, t * 3:(t + 1) * 3] += gram[t]
    g0 = grad_x_full(x0, w, problem).ravel()
    x_star = np.linalg.solve(U2, -g0).reshape(7, 3)
    assert np.allclose(est.states, x_star, atol=1e-6)
    assert np.array_equal(est.w_relaxed, w)


def test_estimate_descends_monotonically_with_nonneg_model_decrease():
    rng = np.random.default_rng(11)
    problem = _make_linear_problem(rng, T=8, process_penalty="student_t", r=0.4)
    w = interior_simplex(rng, 8, 2)
    est, report = estimate(problem, w_fixed=w)
    assert report.stop_reason == "converged"
    assert np.all(np.diff(report.objective_trace) < 0.0)
    assert np.all(report.neg_delta_trace >= 0.0)
    assert len(report.objective_trace) == report.iterations + 1
    assert len(report.neg_delta_trace) == report.iterations + 1
    assert report.final_neg_delta <= problem.epsilon


def test_estimate_variable_w_descends_and_converges():
    rng = np.random.default_rng(12)
    problem = make_generic_problem(rng, T=8, r=0.3, nu=0.5, beta=0.01)
    est, report = estimate(problem)
    assert isinstance(report, ConvergenceReport)
    assert report.stop_reason == "converged"
    assert np.all(np.diff(report.objective_trace) < 0.0)
    assert np.all(report.neg_delta_trace >= 0.0)
    assert est.w_relaxed.min() >= 0.0
    assert np.allclose(est.w_relaxed.sum(axis=1), 1.0, atol=1e-9)
    assert np.array_equal(est.modes, np.argmax(est.w_relaxed, axis=1))
    assert np.all(est.w_rounded.sum(axis=1) == 1.0)
    assert report.inner_cap_hits == 0


def test_estimate_gauss_newton_beats_steepest_descent():
    rng = np.random.default_rng(13)
    problem = _make_linear_problem(rng, T=6, epsilon=1e-8, outer_max_iters=5000)
    w = interior_simplex(rng, 6, 2)
    _, gn = estimate(problem, w_fixed=w, direction_mode="gauss_newton")
    _, sd = estimate(problem, w_fixed=w, direction_mode="steepest_descent")
    assert gn.stop_reason == "converged"
    assert sd.iterations > 5 * gn.iterations


def test_estimate_rejects_unvalidated_problem_and_bad_mode():
    rng = np.random.default_rng(14)
    problem = make_generic_problem(rng, T=4)
    raw = EstimationProblem(
        system=problem.system, y=problem.y, Q=np.eye(3), R=np.eye(2)
    )
    with pytest.raises(InfeasibleW):
        estimate(raw)
    with pytest.raises(ValueError):
        estimate(problem, direction_mode="newton")


def test_estimate_accepts_warm_starts():
    rng = np.random.default_rng(15)
    problem = make_generic_problem(rng, T=6, r=0.3, nu=0.5)
    est1, rep1 = estimate(problem)
    est2, rep2 = estimate(problem, x_init=est1.states, w_init=est1.w_relaxed)
    assert rep2.iterations <= rep1.iterations
    assert rep2.objective_trace[-1] <= rep1.objective_trace[-1] + 1e-9
    assert np.allclose(est2.states, est1.states, atol=1e-4)
