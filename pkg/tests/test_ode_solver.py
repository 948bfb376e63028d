import math

import numpy as np
import pytest

from randstep.ode_solver import (
    NewtonConfig,
    NonConvergence,
    OdeProblem,
    StepRestrictionViolated,
    StepScheme,
    StepSizeWarning,
    Trajectory,
    conditional_mean_residual,
    explicit_step,
    implicit_step,
    local_residual,
    solve,
)
from randstep.problems import (
    AmplitudeMode,
    ProtheroRobinsonSpec,
    SawtoothSpec,
    prothero_robinson_problem,
    time_integral_problem,
)
from randstep.rand_nodes import NodeStream, SeedSpec, TimeGrid, make_stream, node


def linear_decay():
    return OdeProblem(
        dimension=1,
        rhs=lambda t, x: -x,
        initial_value=1.0,
        final_time=1.0,
        jacobian=lambda t, x: -1.0,
    )


def test_implicit_step_linear_decay():
    # closed form (1 + k)^-1 * u_prev
    out = implicit_step(linear_decay(), 0.0, 1.0, 0.5)
    assert out.shape == (1,)
    assert abs(out[0] - 2.0 / 3.0) < 1e-12


def test_implicit_step_zero_rhs_identity():
    p = OdeProblem(1, lambda t, x: 0.0, 3.5, 1.0)
    assert implicit_step(p, 0.3, 3.5, 0.25)[0] == 3.5


def test_implicit_step_smooth_prothero_robinson():
    # g(t) = t: starting from t_{n-1} and evaluating at t_n lands on t_n,
    # since U(1 - k*lam) = t_n*(1 - k*lam)
    lam = -37.0
    p = OdeProblem(
        1,
        rhs=lambda t, x: lam * (x - t) + 1.0,
        initial_value=0.0,
        final_time=1.0,
        jacobian=lambda t, x: lam,
    )
    k = 0.125
    t_prev = 0.375
    out = implicit_step(p, t_prev + k, t_prev, k)
    assert abs(out[0] - (t_prev + k)) < 1e-12


def test_implicit_step_vector_path():
    # 2-d decoupled decay exercises the d > 1 Newton branch
    p = OdeProblem(
        2,
        rhs=lambda t, x: -x,
        initial_value=np.array([1.0, 2.0]),
        final_time=1.0,
    )
    out = implicit_step(p, 0.0, np.array([1.0, 2.0]), 0.5)
    assert np.allclose(out, [2.0 / 3.0, 4.0 / 3.0], atol=1e-9)


def test_step_restriction_error_and_warning():
    stiff = OdeProblem(
        1, lambda t, x: 2.0 * x, 1.0, 1.0, jacobian=lambda t, x: 2.0,
        one_sided_constant=2.0,
    )
    with pytest.raises(StepRestrictionViolated):
        implicit_step(stiff, 0.0, 1.0, 0.5)
    with pytest.warns(StepSizeWarning):
        implicit_step(stiff, 0.0, 1.0, 0.2)
    # nu <= 0 imposes no restriction
    soft = OdeProblem(1, lambda t, x: -x, 1.0, 1.0, one_sided_constant=-5.0)
    implicit_step(soft, 0.0, 1.0, 10.0)


def test_newton_nonconvergence_reported():
    # x = 1 + x^2 has no real root: the residual bottoms out at 3/4
    p = OdeProblem(
        1,
        rhs=lambda t, x: x * x,
        initial_value=1.0,
        final_time=1.0,
        jacobian=lambda t, x: 2.0 * x,
    )
    with pytest.raises(NonConvergence):
        implicit_step(p, 0.0, 1.0, 1.0, NewtonConfig(max_iterations=20))


def test_explicit_step_examples():
    p = OdeProblem(1, lambda t, x: -1000.0 * x, 1.0, 1.0)
    assert explicit_step(p, 0.0, 1.0, 2.0**-6)[0] == -14.625
    z = OdeProblem(1, lambda t, x: 0.0, 2.0, 1.0)
    assert explicit_step(z, 0.0, 2.0, 0.1)[0] == 2.0
    q = OdeProblem(1, lambda t, x: 1.0, 0.0, 1.0)
    assert explicit_step(q, 0.0, 0.0, 0.25)[0] == 0.25


@pytest.mark.parametrize(
    "scheme",
    [
        StepScheme.RANDOMIZED_BACKWARD_EULER,
        StepScheme.CLASSICAL_BACKWARD_EULER,
        StepScheme.RANDOMIZED_FORWARD_EULER,
    ],
)
def test_solve_constant_state(scheme):
    p = OdeProblem(1, lambda t, x: 0.0, 3.0, 1.0)
    grid = TimeGrid(1.0, 16)
    traj = solve(p, grid, scheme, make_stream(SeedSpec(1, 0)))
    assert np.all(traj.states == 3.0)
    assert traj.states[0, 0] == 3.0


def test_solve_randomized_riemann_sum_exact():
    # state-independent f: the recursion collapses to the stratified
    # Riemann sum, bitwise (left-to-right accumulation)
    p = time_integral_problem()
    grid = TimeGrid(1.0, 32)
    traj = solve(p, grid, StepScheme.RANDOMIZED_BACKWARD_EULER, make_stream(SeedSpec(3, 1)))
    taus = make_stream(SeedSpec(3, 1)).taus(32)
    u = 0.0
    expected = [0.0]
    k = grid.step_size
    for n in range(1, 33):
        xi = node(grid, n, float(taus[n - 1]))
        u = u + k * xi
        expected.append(u)
    assert np.array_equal(traj.states[:, 0], np.array(expected))
    assert np.array_equal(traj.nodes_used, np.array(
        [node(grid, n, float(taus[n - 1])) for n in range(1, 33)]
    ))


def test_solve_variance_single_step():
    # T = 1, N = 1, f(t) = t: E[(U^1 - 1/2)^2] = Var U(0,1) = 1/12
    p = time_integral_problem()
    grid = TimeGrid(1.0, 1)
    sq = np.array(
        [
            (solve(p, grid, StepScheme.RANDOMIZED_BACKWARD_EULER,
                   make_stream(SeedSpec(42, r))).states[1, 0] - 0.5) ** 2
            for r in range(20_000)
        ]
    )
    assert abs(sq.mean() - 1.0 / 12.0) < 0.05 / 12.0


def test_autonomous_reduction_to_classical():
    p = OdeProblem(
        1,
        rhs=lambda t, x: -x**3 - x,
        initial_value=1.0,
        final_time=1.0,
        jacobian=lambda t, x: -3.0 * x**2 - 1.0,
    )
    grid = TimeGrid(1.0, 64)
    a = solve(p, grid, StepScheme.RANDOMIZED_BACKWARD_EULER, make_stream(SeedSpec(8, 0)))
    b = solve(p, grid, StepScheme.CLASSICAL_BACKWARD_EULER)
    assert np.abs(a.states - b.states).max() < 1e-10
    assert b.nodes_used.size == 0


def test_one_step_consistency_invariant():
    saw = SawtoothSpec(6, AmplitudeMode.ODE)
    p = prothero_robinson_problem(ProtheroRobinsonSpec(2.0, saw))
    grid = TimeGrid(1.0, 32)
    cfg = NewtonConfig()
    traj = solve(p, grid, StepScheme.RANDOMIZED_BACKWARD_EULER, make_stream(SeedSpec(5, 3)), cfg)
    k = grid.step_size
    for n in range(1, 33):
        u_n = traj.states[n, 0]
        resid = abs(u_n - traj.states[n - 1, 0] - k * p.rhs(traj.nodes_used[n - 1], u_n))
        assert resid <= 10.0 * (cfg.abs_tol + cfg.rel_tol * abs(u_n))


def test_linear_problem_single_newton_iteration():
    saw = SawtoothSpec(6, AmplitudeMode.ODE)
    p = prothero_robinson_problem(ProtheroRobinsonSpec(2.0, saw))
    traj = solve(p, TimeGrid(1.0, 64), StepScheme.RANDOMIZED_BACKWARD_EULER,
                 make_stream(SeedSpec(5, 0)))
    assert np.all(traj.newton_iteration_counts == 1)


def test_solve_requires_matching_final_time():
    p = OdeProblem(1, lambda t, x: 0.0, 0.0, 2.0)
    with pytest.raises(ValueError):
        solve(p, TimeGrid(1.0, 4), StepScheme.CLASSICAL_BACKWARD_EULER)


def test_solve_requires_stream_for_randomized():
    p = OdeProblem(1, lambda t, x: 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        solve(p, TimeGrid(1.0, 4), StepScheme.RANDOMIZED_BACKWARD_EULER)


def test_nonconvergence_carries_step_index():
    def flaky(t, x):
        # well-behaved until the step evaluated at t = 0.5 (step 2),
        # where the implicit equation x = u_prev + x^2 + 1 has no root
        if t < 0.5:
            return -x
        return x * x + 1.0

    p = OdeProblem(1, flaky, 1.0, 1.0)
    with pytest.raises(NonConvergence) as err:
        solve(p, TimeGrid(1.0, 4), StepScheme.CLASSICAL_BACKWARD_EULER,
              cfg=NewtonConfig(max_iterations=20))
    assert err.value.step == 2


def test_local_residual_definition():
    p = OdeProblem(1, lambda t, x: 0.0, 1.0, 1.0)
    vals = np.full(9, 1.7)
    assert local_residual(p, vals, 4, 0.41, 0.125) == 0.0

    q = time_integral_problem()
    grid = TimeGrid(1.0, 8)
    exact = np.array([q.exact(grid.node(n)) for n in range(9)])
    k = grid.step_size
    xi = 0.3
    rho = local_residual(q, exact, 3, xi, k)
    # state-independent f: rho = k f(xi) - int_{t_2}^{t_3} f
    expected = k * xi - (exact[3] - exact[2])
    assert abs(rho - expected) < 1e-15
    with pytest.raises(IndexError):
        local_residual(q, exact, 0, xi, k)


def test_conditional_mean_residual_closed_form():
    p = OdeProblem(
        1, lambda t, x: -x, 1.0, 1.0,
        jacobian=lambda t, x: -1.0, exact=lambda t: math.exp(-t),
    )
    grid = TimeGrid(1.0, 8)
    k = grid.step_size
    n = 3
    t0, t1 = grid.node(n - 1), grid.node(n)
    # hand integral of (e^-s - e^-t_n) ds over the step
    closed = (math.exp(-t0) - math.exp(-t1)) - k * math.exp(-t1)
    quad = conditional_mean_residual(p, p.exact, n, grid, quad_points=6, panels=4)
    assert abs(quad - closed) < 1e-14


def test_conditional_mean_residual_state_independent_zero():
    p = time_integral_problem()
    grid = TimeGrid(1.0, 8)
    for n in (1, 4, 8):
        val = conditional_mean_residual(p, p.exact, n, grid, quad_points=4)
        assert abs(val) < 1e-16


def test_conditional_mean_residual_validation():
    p = time_integral_problem()
    grid = TimeGrid(1.0, 8)
    with pytest.raises(ValueError):
        conditional_mean_residual(p, p.exact, 1, grid, quad_points=1)
    with pytest.raises(IndexError):
        conditional_mean_residual(p, p.exact, 9, grid)


def test_scheme_tokens():
    assert StepScheme.parse("rbe") is StepScheme.RANDOMIZED_BACKWARD_EULER
    assert StepScheme.parse("be").token == "be"
    with pytest.raises(ValueError):
        StepScheme.parse("euler")
