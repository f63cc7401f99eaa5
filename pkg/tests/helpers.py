"""Shared plain helpers: generic random systems and simplex points.

Kept out of conftest.py so test modules can import them by name without
caring which conftest module pytest loaded first.
"""

import numpy as np

from switchsmooth.model import (
    EstimationProblem,
    SwitchedSystem,
    validate_problem,
)


def make_generic_system(rng, n=3, M=2, d=2):
    """Random smooth switched system with bounded dynamics (tanh of affine)."""
    mats = [np.eye(n) + 0.1 * rng.standard_normal((n, n)) for _ in range(M)]
    H = rng.standard_normal((d, n))

    def make(mat):
        def f(x):
            return np.tanh(np.asarray(x, dtype=float) @ mat.T)

        def jac(x):
            z = np.asarray(x, dtype=float) @ mat.T
            s = 1.0 - np.tanh(z) ** 2
            return s[..., :, None] * mat

        return f, jac

    pairs = [make(m) for m in mats]
    return SwitchedSystem(
        n=n, d=d, M=M,
        f=[p[0] for p in pairs],
        jac_f=[p[1] for p in pairs],
        h=lambda x: np.asarray(x, dtype=float) @ H.T,
        jac_h=lambda x: np.broadcast_to(H, np.asarray(x).shape[:-1] + H.shape).copy(),
    )


def make_generic_problem(rng, T=10, n=3, M=2, d=2, **kwargs):
    system = make_generic_system(rng, n=n, M=M, d=d)
    y = rng.standard_normal((T, d))
    defaults = dict(Q=np.eye(n), R=np.eye(d))
    defaults.update(kwargs)
    return validate_problem(EstimationProblem(system=system, y=y, **defaults))


def interior_simplex(rng, T, M):
    """Strictly positive simplex rows (Euclidean projection can hit zeros)."""
    w = rng.uniform(0.2, 1.0, size=(T, M))
    return w / w.sum(axis=1, keepdims=True)
