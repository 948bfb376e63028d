"""Shared fixtures.  The desk-scale sweeps are expensive (seconds to
minutes), so each runs once per session and is shared between the
behavioral tests and the acceptance suite."""

import time

import pytest

from randstep.harness import (
    reproduce_fig1_left,
    reproduce_fig1_right,
    reproduce_fig2,
    residual_study,
)
from randstep.problems import (
    AmplitudeMode,
    ProtheroRobinsonSpec,
    SawtoothSpec,
    prothero_robinson_problem,
)

ACCEPTANCE_SEED = 42


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - start


@pytest.fixture(scope="session")
def fig1_left_desk():
    (table, fits), seconds = _timed(
        reproduce_fig1_left, "desk", master_seed=ACCEPTANCE_SEED, workers=1
    )
    return table, fits, seconds


@pytest.fixture(scope="session")
def fig1_right_desk():
    (table, summary), _ = _timed(
        reproduce_fig1_right, "desk", master_seed=ACCEPTANCE_SEED, workers=1
    )
    return table, summary


@pytest.fixture(scope="session")
def fig2_desk():
    (table, fits), seconds = _timed(
        reproduce_fig2, "desk", master_seed=ACCEPTANCE_SEED, workers=1
    )
    return table, fits, seconds


@pytest.fixture(scope="session")
def residual_rows_desk():
    saw = SawtoothSpec(8, AmplitudeMode.ODE)
    problem = prothero_robinson_problem(ProtheroRobinsonSpec(2.0, saw))
    return residual_study(
        problem, 8, range(4, 9), replicas=1000, master_seed=ACCEPTANCE_SEED
    )
