"""Shared fixtures: small hopper records ready for estimation tests."""

import numpy as np
import pytest

from switchsmooth.model import EstimationProblem, validate_problem
from switchsmooth.oscillators import (
    build_system,
    linear_hopper,
    measurement_pos,
    simulate,
)


@pytest.fixture(scope="session")
def hopper_record():
    """Short linear-hopper run with one impact, shared by read-only tests."""
    auto = linear_hopper()
    meas = measurement_pos()
    return simulate(auto, meas, [1.0, 0.5, 0.0, 0.0], "A_down", 300,
                    meas_noise_std=0.01, seed=1)


@pytest.fixture(scope="session")
def hopper_problem(hopper_record):
    system = build_system(linear_hopper(), measurement_pos())
    return validate_problem(
        EstimationProblem(
            system=system,
            y=hopper_record.ys,
            Q=3e-4 * np.eye(4),
            R=1e-2 * np.eye(2),
        )
    )
