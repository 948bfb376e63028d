"""Time stepping for finite-dimensional ODE systems.

Three one-step schemes:

* randomized backward Euler   U^n = U^{n-1} + k f(xi_n, U^n)
* classical backward Euler    U^n = U^{n-1} + k f(t_n, U^n)
* randomized forward Euler    U^n = U^{n-1} + k f(xi_n, U^{n-1})

with xi_n drawn uniformly from the n-th step interval.  The implicit
solve uses damped Newton iteration; under the one-sided Lipschitz
restriction k*nu < 1 the per-step root is unique.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .rand_nodes import NodeStream, TimeGrid

_SQRT_EPS = math.sqrt(np.finfo(float).eps)

#: Damped Newton halves the update at most this many times per iteration.
MAX_DAMPING_HALVINGS = 30


class StepScheme(Enum):
    RANDOMIZED_BACKWARD_EULER = "rbe"
    CLASSICAL_BACKWARD_EULER = "be"
    RANDOMIZED_FORWARD_EULER = "rfe"

    @property
    def token(self) -> str:
        return self.value

    @property
    def is_implicit(self) -> bool:
        return self is not StepScheme.RANDOMIZED_FORWARD_EULER

    @property
    def is_randomized(self) -> bool:
        return self is not StepScheme.CLASSICAL_BACKWARD_EULER

    @classmethod
    def parse(cls, token: str) -> "StepScheme":
        for scheme in cls:
            if scheme.value == token:
                return scheme
        raise ValueError(f"unknown scheme {token!r}; expected one of rbe, be, rfe")


class NonConvergence(RuntimeError):
    """Newton failed to reduce the step residual below tolerance."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class StepRestrictionViolated(ValueError):
    """Implicit step attempted with k*nu >= 1 (root may not exist)."""


class StepSizeWarning(UserWarning):
    """k*nu >= 1/4: outside the hypothesis of the stability estimate."""


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_iterations: int = 50
    fd_jacobian_step: float = _SQRT_EPS  # scaled per column by 1 + |x_i|

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0 or self.fd_jacobian_step <= 0:
            raise ValueError("Newton tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class OdeProblem:
    """Initial value problem du/dt = f(t, u), u(0) = u0 on [0, T].

    ``rhs`` must be callable at every floating-point t in [0, T]; how an
    almost-everywhere-defined right-hand side is represented is the
    caller's choice.  For dimension 1 the callbacks operate on plain
    floats.  ``one_sided_constant`` is the nu of the one-sided Lipschitz
    condition (f(t,x)-f(t,y), x-y) <= nu |x-y|^2; nonpositive values
    impose no step restriction.  ``exact`` is an optional reference
    solution used by benchmarks.
    """

    dimension: int
    rhs: Callable
    initial_value: object
    final_time: float
    jacobian: Optional[Callable] = None
    one_sided_constant: float = 0.0
    exact: Optional[Callable] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not self.final_time > 0:
            raise ValueError("final_time must be positive")


@dataclass
class Trajectory:
    """One computed path: states[n] = U^n, plus the nodes consumed."""

    grid: TimeGrid
    states: np.ndarray  # (N+1, d)
    nodes_used: np.ndarray  # (N,) for randomized schemes, () for classical
    newton_iteration_counts: np.ndarray  # (N,), zeros for the explicit scheme
    scheme: StepScheme = StepScheme.RANDOMIZED_BACKWARD_EULER


def check_step_restriction(k: float, nu: float) -> None:
    """Reject k*nu >= 1, warn at k*nu >= 1/4; no-op for nu <= 0."""
    if nu <= 0.0:
        return
    knu = k * nu
    if knu >= 1.0:
        raise StepRestrictionViolated(
            f"k*nu = {knu:.6g} >= 1; the implicit step may have no root"
        )
    if knu >= 0.25:
        warnings.warn(
            f"k*nu = {knu:.6g} >= 1/4; outside the stability hypothesis",
            StepSizeWarning,
            stacklevel=3,
        )


def _newton_scalar(rhs, jac, t_eval, u_prev, k, cfg):
    """Damped Newton for x = u_prev + k*rhs(t_eval, x), scalar state.

    Returns (root, iterations).  The initial guess is u_prev, an
    O(k)-accurate predictor.
    """
    x = u_prev
    fx = rhs(t_eval, x)
    r = x - u_prev - k * fx
    rnorm = abs(r)
    for it in range(cfg.max_iterations):
        if rnorm <= cfg.abs_tol + cfg.rel_tol * abs(x):
            return x, it
        if jac is not None:
            df = jac(t_eval, x)
        else:
            dx = cfg.fd_jacobian_step * (1.0 + abs(x))
            df = (rhs(t_eval, x + dx) - fx) / dx
        deriv = 1.0 - k * df
        if deriv == 0.0:
            raise NonConvergence("singular Newton derivative")
        delta = r / deriv
        alpha = 1.0
        for _ in range(MAX_DAMPING_HALVINGS + 1):
            xt = x - alpha * delta
            ft = rhs(t_eval, xt)
            rt = xt - u_prev - k * ft
            if abs(rt) < rnorm:
                break
            alpha *= 0.5
        else:
            raise NonConvergence(
                "residual not reduced after damped retries"
            )
        x, fx, r, rnorm = xt, ft, rt, abs(rt)
    if rnorm <= cfg.abs_tol + cfg.rel_tol * abs(x):
        return x, cfg.max_iterations
    raise NonConvergence(
        f"residual {rnorm:.3e} above tolerance after {cfg.max_iterations} iterations"
    )


def _fd_jacobian(rhs, t, x, fx, step):
    d = x.size
    jac = np.empty((d, d))
    for i in range(d):
        dx = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xp[i] += dx
        jac[:, i] = (np.asarray(rhs(t, xp), dtype=float) - fx) / dx
    return jac


def _newton_vector(rhs, jac, t_eval, u_prev, k, cfg):
    """Damped Newton for x = u_prev + k*rhs(t_eval, x), d-vector state."""
    x = u_prev.copy()
    fx = np.asarray(rhs(t_eval, x), dtype=float)
    r = x - u_prev - k * fx
    rnorm = float(np.linalg.norm(r))
    eye = np.eye(x.size)
    for it in range(cfg.max_iterations):
        if rnorm <= cfg.abs_tol + cfg.rel_tol * float(np.linalg.norm(x)):
            return x, it
        if jac is not None:
            df = np.asarray(jac(t_eval, x), dtype=float)
        else:
            df = _fd_jacobian(rhs, t_eval, x, fx, cfg.fd_jacobian_step)
        delta = np.linalg.solve(eye - k * df, r)
        alpha = 1.0
        for _ in range(MAX_DAMPING_HALVINGS + 1):
            xt = x - alpha * delta
            ft = np.asarray(rhs(t_eval, xt), dtype=float)
            rt = xt - u_prev - k * ft
            rtnorm = float(np.linalg.norm(rt))
            if rtnorm < rnorm:
                break
            alpha *= 0.5
        else:
            raise NonConvergence("residual not reduced after damped retries")
        x, fx, r, rnorm = xt, ft, rt, rtnorm
    if rnorm <= cfg.abs_tol + cfg.rel_tol * float(np.linalg.norm(x)):
        return x, cfg.max_iterations
    raise NonConvergence(
        f"residual {rnorm:.3e} above tolerance after {cfg.max_iterations} iterations"
    )


def implicit_step(problem, t_eval, u_prev, k, cfg: Optional[NewtonConfig] = None):
    """Solve x = u_prev + k*f(t_eval, x); returns the d-vector root."""
    if not k > 0:
        raise ValueError("step size must be positive")
    cfg = cfg or NewtonConfig()
    check_step_restriction(k, problem.one_sided_constant)
    if problem.dimension == 1:
        u0 = float(np.asarray(u_prev, dtype=float).reshape(()))
        x, _ = _newton_scalar(problem.rhs, problem.jacobian, t_eval, u0, k, cfg)
        return np.array([x])
    u0 = np.asarray(u_prev, dtype=float).reshape(problem.dimension)
    x, _ = _newton_vector(problem.rhs, problem.jacobian, t_eval, u0, k, cfg)
    return x


def explicit_step(problem, t_eval, u_prev, k):
    """One forward Euler update u_prev + k*f(t_eval, u_prev)."""
    if not k > 0:
        raise ValueError("step size must be positive")
    u0 = np.asarray(u_prev, dtype=float).reshape(problem.dimension)
    if problem.dimension == 1:
        return np.array([u0[0] + k * problem.rhs(t_eval, u0[0])])
    return u0 + k * np.asarray(problem.rhs(t_eval, u0), dtype=float)


def solve(
    problem: OdeProblem,
    grid: TimeGrid,
    scheme: StepScheme,
    stream: Optional[NodeStream] = None,
    cfg: Optional[NewtonConfig] = None,
) -> Trajectory:
    """March the selected one-step rule over the grid.

    Randomized schemes consume exactly one draw per step, in step order.
    Step failures are re-raised with the failing step index attached.
    """
    if not math.isclose(grid.final_time, problem.final_time, rel_tol=1e-12):
        raise ValueError("grid final time does not match the problem")
    if scheme.is_randomized and stream is None:
        raise ValueError(f"scheme {scheme.token} needs a node stream")
    cfg = cfg or NewtonConfig()
    n_steps = grid.steps
    k = grid.step_size
    if scheme.is_implicit:
        check_step_restriction(k, problem.one_sided_constant)

    times = [grid.node(n) for n in range(n_steps + 1)]
    if scheme.is_randomized:
        tau = stream.taus(n_steps).tolist()
        nodes_used = np.empty(n_steps)
    else:
        nodes_used = np.empty(0)
    counts = np.zeros(n_steps, dtype=np.int64)

    d = problem.dimension
    states = np.empty((n_steps + 1, d))

    if d == 1:
        u = float(np.asarray(problem.initial_value, dtype=float).reshape(()))
        states[0, 0] = u
        rhs, jac = problem.rhs, problem.jacobian
        for n in range(1, n_steps + 1):
            if scheme.is_randomized:
                t_prev = times[n - 1]
                t_eval = t_prev + k * tau[n - 1]
                if t_eval >= times[n]:
                    t_eval = math.nextafter(times[n], t_prev)
                nodes_used[n - 1] = t_eval
            else:
                t_eval = times[n]
            try:
                if scheme.is_implicit:
                    u, iters = _newton_scalar(rhs, jac, t_eval, u, k, cfg)
                    counts[n - 1] = iters
                else:
                    u = u + k * rhs(t_eval, u)
            except NonConvergence as err:
                raise NonConvergence(f"step {n}: {err}", step=n) from err
            states[n, 0] = u
    else:
        u = np.asarray(problem.initial_value, dtype=float).reshape(d)
        states[0] = u
        for n in range(1, n_steps + 1):
            if scheme.is_randomized:
                t_prev = times[n - 1]
                t_eval = t_prev + k * tau[n - 1]
                if t_eval >= times[n]:
                    t_eval = math.nextafter(times[n], t_prev)
                nodes_used[n - 1] = t_eval
            else:
                t_eval = times[n]
            try:
                if scheme.is_implicit:
                    u, iters = _newton_vector(
                        problem.rhs, problem.jacobian, t_eval, u, k, cfg
                    )
                    counts[n - 1] = iters
                else:
                    u = u + k * np.asarray(problem.rhs(t_eval, u), dtype=float)
            except NonConvergence as err:
                raise NonConvergence(f"step {n}: {err}", step=n) from err
            states[n] = u

    return Trajectory(
        grid=grid,
        states=states,
        nodes_used=nodes_used,
        newton_iteration_counts=counts,
        scheme=scheme,
    )


def local_residual(problem, exact_at_grid, n, xi_n, k):
    """Defect k f(xi_n, V^n) - V^n + V^{n-1} of a grid function at step n."""
    if not 1 <= n <= len(exact_at_grid) - 1:
        raise IndexError(f"step index {n} outside 1..{len(exact_at_grid) - 1}")
    v_n = exact_at_grid[n]
    return k * problem.rhs(xi_n, v_n) - v_n + exact_at_grid[n - 1]


def conditional_mean_residual(
    problem, exact, n, grid: TimeGrid, quad_points: int = 4, panels: int = 1
):
    """Mean residual of the exact solution over the n-th step.

    Evaluates the deterministic integral

        int_{t_{n-1}}^{t_n} [ f(s, u(t_n)) - f(s, u(s)) ] ds

    by composite Gauss-Legendre quadrature with ``quad_points`` nodes on
    each of ``panels`` equal subintervals.  Aligning the panels with the
    breakpoints of a piecewise right-hand side makes the rule exact.
    """
    if quad_points < 2:
        raise ValueError("quad_points must be at least 2")
    if panels < 1:
        raise ValueError("panels must be at least 1")
    if not 1 <= n <= grid.steps:
        raise IndexError(f"step index {n} outside 1..{grid.steps}")
    t0 = grid.node(n - 1)
    t1 = grid.node(n)
    u_n = exact(t1)
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    edges = np.linspace(t0, t1, panels + 1)
    total = 0.0 if problem.dimension == 1 else np.zeros(problem.dimension)
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        for s_hat, w in zip(nodes, weights):
            s = mid + half * s_hat
            total = total + (half * w) * (
                problem.rhs(s, u_n) - problem.rhs(s, exact(s))
            )
    return total
