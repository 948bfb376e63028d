"""Monte Carlo error estimation, rate fitting, and the benchmark sweeps.

Replica r always consumes the substream (master_seed, r), and reductions
run over arrays assembled in ascending replica order, so results are
byte-identical across reruns and across worker counts.

CSV schema (one row per (scheme, step size), '.' decimal, 17 significant
digits in scientific notation):

    scheme,N,k,replicas,rms_error_final,rms_error_max,mc_stderr_final,mean_newton_iters

Rate fits are written as: scheme,window_lo,window_hi,slope,intercept,residual
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import problems
from .fem1d import Mesh, l2_error
from .ode_solver import (
    NewtonConfig,
    NonConvergence,
    StepRestrictionViolated,
    StepScheme,
    solve,
)
from .pde_solver import pde_solve
from .rand_nodes import DEFAULT_MASTER_SEED, NodeStream, SeedSpec, TimeGrid


class ErrorMode(Enum):
    FINAL_TIME = "final"
    MAX_OVER_GRID = "max"


class ExperimentError(RuntimeError):
    """A replica failed; carries (scheme, k, replica, step) context."""


@dataclass(frozen=True)
class ExperimentSpec:
    """One Monte Carlo sweep: problem, schemes, and step-size exponents.

    Step sizes are k = 2^-n for each exponent n.  Problem ids:

    * ``prothero-robinson``: stiff scalar ODE, parameters ``lam`` and
      ``sawtooth_exponent`` (K).
    * ``time-integral``: state-independent f(t) = t (quadrature check).
    * ``semilinear-heat``: manufactured parabolic benchmark, parameters
      ``sawtooth_exponent`` (K), ``cap`` (R), ``power``, ``mesh_dof``.
    """

    problem: str
    schemes: tuple[StepScheme, ...]
    step_exponents: tuple[int, ...]
    mc_replicas: int
    master_seed: int = DEFAULT_MASTER_SEED
    lam: float = 2.0
    sawtooth_exponent: Optional[int] = None
    cap: float = 10.0
    power: float = 4.0
    mesh_dof: Optional[int] = None
    error_mode: ErrorMode = ErrorMode.FINAL_TIME

    def __post_init__(self):
        if self.mc_replicas < 1:
            raise ValueError("mc_replicas must be at least 1")
        if not self.step_exponents:
            raise ValueError("need at least one step exponent")
        if any(
            b <= a for a, b in zip(self.step_exponents, self.step_exponents[1:])
        ):
            raise ValueError("step exponents must be strictly increasing")
        if self.problem not in ("prothero-robinson", "time-integral", "semilinear-heat"):
            raise ValueError(f"unknown problem id {self.problem!r}")
        if self.problem == "semilinear-heat":
            if self.mesh_dof is None:
                raise ValueError("semilinear-heat needs mesh_dof")
            if StepScheme.RANDOMIZED_FORWARD_EULER in self.schemes:
                raise ValueError("no explicit scheme for the PDE benchmark")


@dataclass(frozen=True)
class ErrorRow:
    scheme: str
    steps: int
    step_size: float
    replicas: int
    rms_error_final: float
    rms_error_max: float
    mc_stderr_final: float
    mean_newton_iters: float

    @property
    def exponent(self) -> int:
        return round(math.log2(self.steps))

    def error(self, mode: ErrorMode) -> float:
        if mode is ErrorMode.FINAL_TIME:
            return self.rms_error_final
        return self.rms_error_max


@dataclass
class ErrorTable:
    rows: list[ErrorRow]

    def for_scheme(self, scheme: str) -> list[ErrorRow]:
        return [r for r in self.rows if r.scheme == scheme]

    def schemes(self) -> list[str]:
        seen = []
        for row in self.rows:
            if row.scheme not in seen:
                seen.append(row.scheme)
        return seen

    def row(self, scheme: str, exponent: int) -> ErrorRow:
        for r in self.rows:
            if r.scheme == scheme and r.exponent == exponent:
                return r
        raise KeyError(f"no row for scheme={scheme}, n={exponent}")


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log2(error) against log2(k) over a window.

    Positive slope means the error shrinks with the step size.
    """

    window: tuple[int, int]
    slope: float
    intercept: float
    residual: float


def _build_ode_problem(spec: ExperimentSpec):
    if spec.problem == "prothero-robinson":
        if spec.sawtooth_exponent is None:
            raise ValueError("prothero-robinson needs sawtooth_exponent")
        saw = problems.SawtoothSpec(spec.sawtooth_exponent, problems.AmplitudeMode.ODE)
        return problems.prothero_robinson_problem(
            problems.ProtheroRobinsonSpec(spec.lam, saw)
        )
    if spec.problem == "time-integral":
        return problems.time_integral_problem()
    raise ValueError(f"{spec.problem!r} is not an ODE problem")


def _build_pde_problem(spec: ExperimentSpec):
    saw = problems.SawtoothSpec(spec.sawtooth_exponent, problems.AmplitudeMode.PDE)
    bspec = problems.TruncatedPowerSpec(cap=spec.cap, power=spec.power)
    return problems.semilinear_heat_problem(saw, bspec), Mesh(spec.mesh_dof)


def _ode_chunk(spec, scheme_token, exponent, lo, hi):
    """Per-replica (final, max, mean-newton) errors for replicas lo..hi-1."""
    scheme = StepScheme.parse(scheme_token)
    problem = _build_ode_problem(spec)
    n_steps = 2**exponent
    grid = TimeGrid(problem.final_time, n_steps)
    exact_grid = np.array([problem.exact(grid.node(n)) for n in range(n_steps + 1)])
    e_final = np.empty(hi - lo)
    e_max = np.empty(hi - lo)
    iters = np.empty(hi - lo)
    cfg = NewtonConfig()
    for idx, replica in enumerate(range(lo, hi)):
        stream = NodeStream(SeedSpec(spec.master_seed, replica))
        try:
            path = solve(problem, grid, scheme, stream, cfg)
        except (NonConvergence, ValueError) as err:
            step = getattr(err, "step", None)
            raise ExperimentError(
                f"scheme={scheme.token} k=2^-{exponent} replica={replica} "
                f"step={step}: {err}"
            ) from err
        diff = np.abs(path.states[:, 0] - exact_grid)
        e_final[idx] = diff[-1]
        e_max[idx] = diff.max()
        iters[idx] = path.newton_iteration_counts.mean()
    return e_final, e_max, iters


def _pde_chunk(spec, scheme_token, exponent, lo, hi):
    scheme = StepScheme.parse(scheme_token)
    problem, mesh = _build_pde_problem(spec)
    n_steps = 2**exponent
    grid = TimeGrid(problem.final_time, n_steps)
    times = [grid.node(n) for n in range(n_steps + 1)]
    exact = problem.exact
    e_final = np.empty(hi - lo)
    e_max = np.empty(hi - lo)
    iters = np.empty(hi - lo)
    cfg = NewtonConfig()
    for idx, replica in enumerate(range(lo, hi)):
        stream = NodeStream(SeedSpec(spec.master_seed, replica))
        try:
            path = pde_solve(problem, mesh, grid, scheme, stream, cfg)
        except (NonConvergence, ValueError) as err:
            step = getattr(err, "step", None)
            raise ExperimentError(
                f"scheme={scheme.token} k=2^-{exponent} replica={replica} "
                f"step={step}: {err}"
            ) from err
        errs = np.array(
            [
                l2_error(mesh, path.fields[n], lambda x, t=t: exact(t, x))
                for n, t in enumerate(times)
            ]
        )
        e_final[idx] = errs[-1]
        e_max[idx] = errs.max()
        iters[idx] = path.newton_iteration_counts.mean()
    return e_final, e_max, iters


def _chunk_bounds(total: int, workers: int) -> list[tuple[int, int]]:
    width = -(-total // workers)
    return [(lo, min(lo + width, total)) for lo in range(0, total, width)]


def run_mc(spec: ExperimentSpec, workers: int = 1) -> ErrorTable:
    """Root-mean-square errors over replicas for every (scheme, k).

    rms = sqrt(mean_r e_r^2) with e_r the replica error against the exact
    solution (absolute value for the ODE, quadrature L2 norm for the
    PDE), at the final time and maximal over the grid.  The Monte Carlo
    standard error of the rms estimate comes from the sample variance of
    e_r^2 via the delta method.
    """
    is_pde = spec.problem == "semilinear-heat"
    chunk_fn = _pde_chunk if is_pde else _ode_chunk
    if not is_pde:
        problem = _build_ode_problem(spec)
        nu = problem.one_sided_constant
        implicit = [s for s in spec.schemes if s.is_implicit]
        if nu > 0 and implicit:
            worst_k = 2.0 ** (-min(spec.step_exponents))
            if worst_k * nu >= 1.0:
                raise StepRestrictionViolated(
                    f"k*nu = {worst_k * nu:.3g} >= 1 for n = {min(spec.step_exponents)}"
                )
    replicas = spec.mc_replicas
    rows: list[ErrorRow] = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for scheme in spec.schemes:
            for exponent in spec.step_exponents:
                if pool is None:
                    e_final, e_max, iters = chunk_fn(
                        spec, scheme.token, exponent, 0, replicas
                    )
                else:
                    bounds = _chunk_bounds(replicas, workers)
                    futures = [
                        pool.submit(chunk_fn, spec, scheme.token, exponent, lo, hi)
                        for lo, hi in bounds
                    ]
                    e_final = np.empty(replicas)
                    e_max = np.empty(replicas)
                    iters = np.empty(replicas)
                    for (lo, hi), fut in zip(bounds, futures):
                        cf, cm, ci = fut.result()
                        e_final[lo:hi] = cf
                        e_max[lo:hi] = cm
                        iters[lo:hi] = ci
                rows.append(
                    ErrorRow(
                        scheme=scheme.token,
                        steps=2**exponent,
                        step_size=2.0 ** (-exponent),
                        replicas=replicas,
                        rms_error_final=_rms(e_final),
                        rms_error_max=_rms(e_max),
                        mc_stderr_final=_rms_stderr(e_final),
                        mean_newton_iters=float(iters.mean()),
                    )
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return ErrorTable(rows)


def _rms(errors: np.ndarray) -> float:
    return float(np.sqrt(np.mean(errors * errors)))


def _rms_stderr(errors: np.ndarray) -> float:
    if errors.size < 2:
        return 0.0
    if np.all(errors == errors[0]):  # deterministic scheme: no MC spread
        return 0.0
    sq = errors * errors
    mean_sq = float(sq.mean())
    if mean_sq == 0.0:
        return 0.0
    if not math.isfinite(mean_sq):
        return math.inf
    # delta method, normalized so huge error magnitudes cannot overflow
    z = sq / mean_sq
    rms = math.sqrt(mean_sq)
    return float(rms * z.std(ddof=1) / (2.0 * np.sqrt(sq.size)))


def fit_rate(
    table: ErrorTable,
    scheme: str,
    window: tuple[int, int],
    error_mode: ErrorMode = ErrorMode.FINAL_TIME,
    clamp_zero: bool = False,
) -> RateFit:
    """Fit log2(error) = slope*log2(k) + intercept over an exponent window."""
    lo, hi = window
    rows = [r for r in table.for_scheme(scheme) if lo <= r.exponent <= hi]
    if len(rows) < 2:
        raise ValueError(f"window {window} holds {len(rows)} rows; need at least 2")
    errors = np.array([r.error(error_mode) for r in rows])
    if np.any(errors <= 0.0):
        if not clamp_zero:
            raise ValueError(
                "nonpositive error in fit window; pass clamp_zero=True to clamp"
            )
        errors = np.maximum(errors, 1e-30)
    x = np.array([math.log2(r.step_size) for r in rows])
    y = np.log2(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RateFit(
        window=(lo, hi),
        slope=float(slope),
        intercept=float(intercept),
        residual=float(np.sqrt(np.mean(resid * resid))),
    )


# ---------------------------------------------------------------------------
# residual scaling study


@dataclass(frozen=True)
class ResidualRow:
    exponent: int
    step_size: float
    rms_residual: float  # sqrt( sum_n mean_r |rho_n|^2 )
    mean_residual: float  # max_n |E[rho_n]| by deterministic quadrature


def residual_study(
    problem,
    sawtooth_exponent: int,
    step_exponents: Sequence[int],
    replicas: int,
    master_seed: int = DEFAULT_MASTER_SEED,
) -> list[ResidualRow]:
    """Scaling of the local residual of the exact solution in k.

    For each step size the pathwise column accumulates the squared
    residuals over all steps before the root (the quantity whose square
    sums in the error analysis), so it scales like k^(1/2) on the stiff
    sawtooth benchmark; the conditional-mean column is evaluated by
    quadrature with panels aligned to the sawtooth breakpoints and
    scales like k.
    """
    from .ode_solver import conditional_mean_residual

    rows = []
    for exponent in step_exponents:
        n_steps = 2**exponent
        grid = TimeGrid(problem.final_time, n_steps)
        k = grid.step_size
        times = [grid.node(n) for n in range(n_steps + 1)]
        exact_grid = [problem.exact(t) for t in times]
        rhs = problem.rhs
        sum_sq = np.empty(replicas)
        for replica in range(replicas):
            stream = NodeStream(SeedSpec(master_seed, replica))
            tau = stream.taus(n_steps).tolist()
            acc = 0.0
            for n in range(1, n_steps + 1):
                xi = times[n - 1] + k * tau[n - 1]
                if xi >= times[n]:
                    xi = math.nextafter(times[n], times[n - 1])
                v_n = exact_grid[n]
                rho = k * rhs(xi, v_n) - v_n + exact_grid[n - 1]
                acc += rho * rho
            sum_sq[replica] = acc
        panels = max(1, 2 ** max(sawtooth_exponent - exponent, 0))
        mean_norms = [
            abs(
                conditional_mean_residual(
                    problem, problem.exact, n, grid, quad_points=4, panels=panels
                )
            )
            for n in range(1, n_steps + 1)
        ]
        rows.append(
            ResidualRow(
                exponent=exponent,
                step_size=k,
                rms_residual=float(np.sqrt(sum_sq.mean())),
                mean_residual=float(max(mean_norms)),
            )
        )
    return rows


def fit_residual_slopes(
    rows: Sequence[ResidualRow], window: tuple[int, int]
) -> tuple[float, float]:
    """(pathwise, conditional-mean) log2-log2 slopes over an exponent window."""
    sel = [r for r in rows if window[0] <= r.exponent <= window[1]]
    if len(sel) < 2:
        raise ValueError("need at least two rows in the fit window")
    x = np.array([math.log2(r.step_size) for r in sel])
    path_slope = float(np.polyfit(x, np.log2([r.rms_residual for r in sel]), 1)[0])
    mean_slope = float(np.polyfit(x, np.log2([r.mean_residual for r in sel]), 1)[0])
    return path_slope, mean_slope


# ---------------------------------------------------------------------------
# figure reproductions


@dataclass(frozen=True)
class ExperimentScale:
    sawtooth_exponent: int
    step_exponents: tuple[int, ...]
    mc_replicas: int
    mesh_dof: Optional[int] = None


FIG1_LEFT_SCALES = {
    "desk": ExperimentScale(10, tuple(range(4, 13)), 200),
    "paper": ExperimentScale(12, tuple(range(5, 15)), 1000),
}
FIG1_RIGHT_SCALES = {
    "desk": ExperimentScale(10, tuple(range(5, 13)), 200),
    "paper": ExperimentScale(12, tuple(range(5, 15)), 1000),
}
FIG2_SCALES = {
    "desk": ExperimentScale(7, tuple(range(3, 10)), 50, mesh_dof=127),
    "paper": ExperimentScale(9, tuple(range(4, 12)), 200, mesh_dof=500),
}


def _scale(table: dict, scale: str) -> ExperimentScale:
    try:
        return table[scale]
    except KeyError:
        raise ValueError(f"scale must be one of {sorted(table)}") from None


def rate_windows(scale: ExperimentScale) -> dict[str, tuple[int, int]]:
    """Fit windows around the resolution threshold n = K.

    Pre-resolution stops at K-2 and post-resolution starts at K: the
    error curves jump between K-1 and K, so K-1 belongs to neither fit.
    """
    k_exp = scale.sawtooth_exponent
    lo, hi = scale.step_exponents[0], scale.step_exponents[-1]
    return {"pre": (lo, min(k_exp - 2, hi)), "post": (min(k_exp, hi), hi)}


def reproduce_fig1_left(
    scale: str = "desk", master_seed: int = DEFAULT_MASTER_SEED, workers: int = 1
):
    """Stiff sawtooth sweep, lambda = 2: randomized vs classical implicit."""
    sc = _scale(FIG1_LEFT_SCALES, scale)
    spec = ExperimentSpec(
        problem="prothero-robinson",
        schemes=(
            StepScheme.RANDOMIZED_BACKWARD_EULER,
            StepScheme.CLASSICAL_BACKWARD_EULER,
        ),
        step_exponents=sc.step_exponents,
        mc_replicas=sc.mc_replicas,
        master_seed=master_seed,
        lam=2.0,
        sawtooth_exponent=sc.sawtooth_exponent,
    )
    table = run_mc(spec, workers)
    windows = rate_windows(sc)
    fits = {
        (scheme, name): fit_rate(table, scheme, window)
        for scheme in ("rbe", "be")
        for name, window in windows.items()
    }
    return table, fits


def reproduce_fig1_right(
    scale: str = "desk", master_seed: int = DEFAULT_MASTER_SEED, workers: int = 1
):
    """Dissipative sweep, lambda = -1000: implicit vs explicit randomized."""
    sc = _scale(FIG1_RIGHT_SCALES, scale)
    spec = ExperimentSpec(
        problem="prothero-robinson",
        schemes=(
            StepScheme.RANDOMIZED_BACKWARD_EULER,
            StepScheme.RANDOMIZED_FORWARD_EULER,
        ),
        step_exponents=sc.step_exponents,
        mc_replicas=sc.mc_replicas,
        master_seed=master_seed,
        lam=-1000.0,
        sawtooth_exponent=sc.sawtooth_exponent,
    )
    table = run_mc(spec, workers)
    lam = -1000.0
    summary = {
        "implicit_max_rms": max(r.rms_error_final for r in table.for_scheme("rbe")),
        "explicit_rms_by_exponent": {
            r.exponent: r.rms_error_final for r in table.for_scheme("rfe")
        },
        "amplification_by_exponent": {
            n: abs(1.0 + 2.0 ** (-n) * lam) for n in sc.step_exponents
        },
    }
    return table, summary


def reproduce_fig2(
    scale: str = "desk", master_seed: int = DEFAULT_MASTER_SEED, workers: int = 1
):
    """Semilinear heat sweep: randomized vs classical fully discrete scheme."""
    sc = _scale(FIG2_SCALES, scale)
    spec = ExperimentSpec(
        problem="semilinear-heat",
        schemes=(
            StepScheme.RANDOMIZED_BACKWARD_EULER,
            StepScheme.CLASSICAL_BACKWARD_EULER,
        ),
        step_exponents=sc.step_exponents,
        mc_replicas=sc.mc_replicas,
        master_seed=master_seed,
        sawtooth_exponent=sc.sawtooth_exponent,
        cap=10.0,
        power=4.0,
        mesh_dof=sc.mesh_dof,
    )
    table = run_mc(spec, workers)
    windows = rate_windows(sc)
    fits = {
        (scheme, name): fit_rate(table, scheme, window)
        for scheme in ("rbe", "be")
        for name, window in windows.items()
    }
    return table, fits


# ---------------------------------------------------------------------------
# CSV output

ERROR_CSV_HEADER = (
    "scheme,N,k,replicas,rms_error_final,rms_error_max,"
    "mc_stderr_final,mean_newton_iters"
)
RATE_CSV_HEADER = "scheme,window_lo,window_hi,slope,intercept,residual"


def _fmt(value: float) -> str:
    return f"{value:.16e}"


def render_error_csv(table: ErrorTable) -> str:
    lines = [ERROR_CSV_HEADER]
    for r in table.rows:
        lines.append(
            f"{r.scheme},{r.steps},{_fmt(r.step_size)},{r.replicas},"
            f"{_fmt(r.rms_error_final)},{_fmt(r.rms_error_max)},"
            f"{_fmt(r.mc_stderr_final)},{_fmt(r.mean_newton_iters)}"
        )
    return "\n".join(lines) + "\n"


def write_error_csv(table: ErrorTable, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(render_error_csv(table))


def read_error_csv(path) -> ErrorTable:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != ERROR_CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append(
                ErrorRow(
                    scheme=parts[0],
                    steps=int(parts[1]),
                    step_size=float(parts[2]),
                    replicas=int(parts[3]),
                    rms_error_final=float(parts[4]),
                    rms_error_max=float(parts[5]),
                    mc_stderr_final=float(parts[6]),
                    mean_newton_iters=float(parts[7]),
                )
            )
    return ErrorTable(rows)


def render_rate_csv(fits: dict) -> str:
    lines = [RATE_CSV_HEADER]
    for (scheme, _name), fit in fits.items():
        lines.append(
            f"{scheme},{fit.window[0]},{fit.window[1]},"
            f"{_fmt(fit.slope)},{_fmt(fit.intercept)},{_fmt(fit.residual)}"
        )
    return "\n".join(lines) + "\n"


def write_rate_csv(fits: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(render_rate_csv(fits))


RESIDUAL_CSV_HEADER = "n,k,rms_residual,mean_residual"


def render_residual_csv(rows: Sequence[ResidualRow]) -> str:
    lines = [RESIDUAL_CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.exponent},{_fmt(r.step_size)},"
            f"{_fmt(r.rms_residual)},{_fmt(r.mean_residual)}"
        )
    return "\n".join(lines) + "\n"


def write_residual_csv(rows: Sequence[ResidualRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(render_residual_csv(rows))


def default_workers() -> int:
    return os.cpu_count() or 1
