"""Benchmark problems: sawtooth data, the Prothero-Robinson ODE, and the
manufactured semilinear heat equation.

The sawtooth functions are crafted so that every equidistant grid with
step size k = 2^-n, n < K, samples them only at their zeros: a
deterministic method sees a constant where the data oscillates.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ode_solver import OdeProblem
from .pde_solver import PdeProblem


class AmplitudeMode(Enum):
    ODE = "ode"  # peaks at height p
    PDE = "pde"  # peak i*P^2 at node i*P


@dataclass(frozen=True)
class SawtoothSpec:
    """Piecewise-linear zigzag with half-period 2^-exponent on [0, 1]."""

    exponent: int
    amplitude_mode: AmplitudeMode = AmplitudeMode.ODE

    def __post_init__(self):
        if self.exponent < 1:
            raise ValueError("exponent must be a positive integer")

    @property
    def half_period(self) -> float:
        return 2.0 ** (-self.exponent)


@dataclass(frozen=True)
class ProtheroRobinsonSpec:
    lam: float
    sawtooth: SawtoothSpec

    def __post_init__(self):
        if self.sawtooth.amplitude_mode is not AmplitudeMode.ODE:
            raise ValueError("Prothero-Robinson uses the ODE-amplitude sawtooth")


@dataclass(frozen=True)
class TruncatedPowerSpec:
    """Odd power |x|^(power-2) x, linearly continued outside |x| <= cap."""

    cap: float
    power: float

    def __post_init__(self):
        if not self.cap > 0:
            raise ValueError("cap must be positive")
        if self.power < 2:
            raise ValueError("power must be at least 2")


def _interval_index(t: float, exponent: int) -> tuple[int, float]:
    """Index i of [i*p, (i+1)*p) containing t, and the local coordinate.

    t*2^exponent is an exact float scaling, so grid-aligned inputs pick
    their interval bit-exactly; i is clamped to the last interval at t=1.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t = {t!r} outside [0, 1]")
    scaled = t * (1 << exponent)
    i = int(scaled)
    top = (1 << exponent) - 1
    if i > top:
        i = top
    return i, scaled - i


def sawtooth_g(spec: SawtoothSpec, t: float) -> float:
    """g with g(i*p) = p for odd i, 0 for even i, affine in between."""
    if spec.amplitude_mode is not AmplitudeMode.ODE:
        raise ValueError("sawtooth_g needs the ODE amplitude mode")
    i, frac = _interval_index(t, spec.exponent)
    p = spec.half_period
    if i % 2 == 0:
        return p * frac
    return p * (1.0 - frac)


def sawtooth_gdot(spec: SawtoothSpec, t: float) -> float:
    """Representation of dg/dt: +1 on even intervals, -1 on odd ones.

    The value at t = 1 is taken from the last half-open interval.
    """
    if spec.amplitude_mode is not AmplitudeMode.ODE:
        raise ValueError("sawtooth_gdot needs the ODE amplitude mode")
    i, _ = _interval_index(t, spec.exponent)
    return -1.0 if i % 2 else 1.0


def pr_rhs(spec: ProtheroRobinsonSpec, t: float, x: float) -> float:
    """f(t, x) = lam*(x - g(t)) + g'(t); the exact solution is u = g."""
    return spec.lam * (x - sawtooth_g(spec.sawtooth, t)) + sawtooth_gdot(
        spec.sawtooth, t
    )


def pde_w(spec: SawtoothSpec, t: float) -> float:
    """w with w(i*P) = i*P^2 for odd i, 0 for even i, affine in between."""
    if spec.amplitude_mode is not AmplitudeMode.PDE:
        raise ValueError("pde_w needs the PDE amplitude mode")
    j, frac = _interval_index(t, spec.exponent)
    p2 = spec.half_period * spec.half_period
    if j % 2 == 0:
        # rising toward w((j+1)P) = (j+1)P^2
        return (j + 1) * p2 * frac
    # falling from w(jP) = jP^2 to zero
    return j * p2 * (1.0 - frac)


def pde_wdot(spec: SawtoothSpec, t: float) -> float:
    """a.e. derivative of w: i*P on [(i-1)P, iP) for odd i, -(i-1)P for even."""
    if spec.amplitude_mode is not AmplitudeMode.PDE:
        raise ValueError("pde_wdot needs the PDE amplitude mode")
    j, _ = _interval_index(t, spec.exponent)
    p = spec.half_period
    if j % 2 == 0:
        return (j + 1) * p
    return -j * p


def b_trunc(spec: TruncatedPowerSpec, x):
    """b(x) = |x|^(power-2) x capped: R^(power-2) x for |x| > R.

    Continuous, nondecreasing, globally Lipschitz with constant
    (power-1) R^(power-2).  Accepts scalars or arrays.
    """
    return np.minimum(np.abs(x), spec.cap) ** (spec.power - 2.0) * x


def b_trunc_prime(spec: TruncatedPowerSpec, x):
    """One-sided derivative of b; the outer value R^(power-2) at |x| = R."""
    ax = np.abs(x)
    inner = (spec.power - 1.0) * ax ** (spec.power - 2.0)
    outer = spec.cap ** (spec.power - 2.0)
    return np.where(ax < spec.cap, inner, outer)


def pde_initial(x):
    """u0(x) = pi^-2 sin(pi x)."""
    return np.sin(np.pi * x) / np.pi**2


def pde_exact(spec: SawtoothSpec, t: float, x):
    """u(t, x) = (x^2 - x^3) w(t) + pi^-2 sin(pi x)."""
    return (x**2 - x**3) * pde_w(spec, t) + np.sin(np.pi * x) / np.pi**2


def pde_forcing(spec: SawtoothSpec, bspec: TruncatedPowerSpec, t: float, x):
    """Forcing manufactured so u_t - u_xx + b(u) = f with the u above."""
    w = pde_w(spec, t)
    wdot = pde_wdot(spec, t)
    bump = x**2 - x**3
    u = bump * w + np.sin(np.pi * x) / np.pi**2
    return bump * wdot - (2.0 - 6.0 * x) * w + np.sin(np.pi * x) + b_trunc(bspec, u)


def prothero_robinson_problem(spec: ProtheroRobinsonSpec) -> OdeProblem:
    """Scalar stiff benchmark; one-sided constant nu = max(lam, 0)."""
    lam = spec.lam
    saw = spec.sawtooth

    def rhs(t, x):
        return pr_rhs(spec, t, x)

    def jacobian(t, x):
        return lam

    def exact(t):
        return sawtooth_g(saw, t)

    return OdeProblem(
        dimension=1,
        rhs=rhs,
        initial_value=sawtooth_g(saw, 0.0),
        final_time=1.0,
        jacobian=jacobian,
        one_sided_constant=max(lam, 0.0),
        exact=exact,
    )


def time_integral_problem() -> OdeProblem:
    """State-independent f(t, x) = t: the scheme degenerates to the
    randomized Riemann sum for u(t) = t^2/2."""

    return OdeProblem(
        dimension=1,
        rhs=lambda t, x: t,
        initial_value=0.0,
        final_time=1.0,
        jacobian=lambda t, x: 0.0,
        one_sided_constant=0.0,
        exact=lambda t: 0.5 * t * t,
    )


def semilinear_heat_problem(
    saw: SawtoothSpec, bspec: TruncatedPowerSpec
) -> PdeProblem:
    """Manufactured heat benchmark u_t - u_xx + b(u) = f on (0,1)^2.

    With the H^1 seminorm as the V-norm the diffusion part is monotone
    with constant 1; b only strengthens monotonicity.
    """
    if saw.amplitude_mode is not AmplitudeMode.PDE:
        raise ValueError("heat benchmark needs the PDE amplitude mode")

    lipschitz_b = (bspec.power - 1.0) * bspec.cap ** (bspec.power - 2.0)

    return PdeProblem(
        forcing=lambda t, x: pde_forcing(saw, bspec, t, x),
        nonlinearity=lambda u: b_trunc(bspec, u),
        nonlinearity_prime=lambda u: b_trunc_prime(bspec, u),
        initial=pde_initial,
        final_time=1.0,
        exact=lambda t, x: pde_exact(saw, t, x),
        monotonicity=1.0,
        lipschitz=1.0 + lipschitz_b,
        rhs_bound=0.0,
    )
