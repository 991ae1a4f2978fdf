"""Backward theta-scheme recursion driven by wavelet expectation kernels.

Starting from the terminal slice (point samples in the quick variant, basis
inner products in the mixed variant), each backward step maps the grid vectors
(y, z, f) at t_{p+1} to t_p:

    z_p = -(1-th2)/th2 * E[z] + E[y dW]/(th2 dt) + (1-th2)/th2 * E[f dW]
    h_p = E[y] + dt (1-th1) E[f]
    y_p = dt th1 f(t_p, x, y_p, z_p) + h_p      (Picard iterations when th1 > 0)

after which the recursion is evaluated once more at the off-grid initial state
x0.  An optional antireflective correction rebuilds the outer grid bands from
the accurate interior after every step.
"""

from __future__ import annotations

import time
import warnings
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .expectations import (
    build_compact_kernel,
    build_kernel,
    eval_row,
    expect_brownian,
    expect_plain,
)
from .oracles import ConvergenceReport, estimate_order
from .problems import FbsdeProblem, ThetaScheme, compute_domain
from .wavelets import WaveletGrid, project_coefficients


class ConfigError(ValueError):
    """Invalid run configuration (maps to CLI exit code 2)."""


class SolverError(RuntimeError):
    """Numerical failure during the backward recursion (CLI exit code 1)."""


class PicardDivergenceWarning(RuntimeWarning):
    """Picard residuals grew for several consecutive iterations."""


@dataclass(frozen=True)
class SolverConfig:
    scheme: ThetaScheme
    P: int
    J: int = 512
    L: float = 10.0
    picard_iters: int = 5
    variant: str = "mixed"
    antireflective: Optional[float] = None
    retain_slices: bool = False


def validate_config(problem: FbsdeProblem, config: SolverConfig) -> None:
    if config.P < 1:
        raise ConfigError(f"P must be a positive number of time steps, got {config.P}")
    if config.J < 2:
        raise ConfigError(f"wavelet order J must be at least 2, got {config.J}")
    if config.L <= 0:
        raise ConfigError(f"domain width multiplier L must be positive, got {config.L}")
    if config.picard_iters < 0:
        raise ConfigError(f"picard_iters must be non-negative, got {config.picard_iters}")
    if config.variant not in ("quick", "mixed"):
        raise ConfigError(f"variant must be 'quick' or 'mixed', got {config.variant!r}")
    if config.antireflective is not None and not 0.0 < config.antireflective < 1.0 / 3.0:
        raise ConfigError(f"antireflective fraction must lie in (0, 1/3), got {config.antireflective}")
    dt = problem.horizon_T / config.P
    if config.scheme.theta1 > 0 and problem.lipschitz_y is not None:
        if dt * config.scheme.theta1 * problem.lipschitz_y >= 1.0:
            raise ConfigError(
                f"Picard contraction violated: dt*theta1*Lip = "
                f"{dt * config.scheme.theta1 * problem.lipschitz_y:.3g} >= 1; increase P"
            )


@dataclass(frozen=True)
class SolutionSlice:
    """Grid vectors of y, z and cached driver values at one time level.

    In the quick variant these are point samples of the backward functions; in
    the mixed variant the terminal slice instead holds basis inner products
    (so its ``fvals`` are the projected terminal driver, not pointwise driver
    evaluations).  All intermediate slices are pointwise either way.
    """

    y: np.ndarray
    z: np.ndarray
    fvals: np.ndarray
    t: float


class PhaseTimer:
    """Accumulates wall-clock seconds per named phase."""

    def __init__(self):
        self.seconds: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - t0


@dataclass
class Diagnostics:
    picard_residuals: list[float] = field(default_factory=list)
    divergence_times: list[float] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    wall_s: float = 0.0


@dataclass(frozen=True)
class SolveResult:
    y0: float
    z0: float
    grid: WaveletGrid
    slices: Optional[list[SolutionSlice]]
    diagnostics: Diagnostics


def _grid_values(fn_value, shape) -> np.ndarray:
    out = np.asarray(fn_value, dtype=float)
    return np.ascontiguousarray(np.broadcast_to(out, shape)).copy() if out.shape != shape else out


def terminal_slice_quick(problem: FbsdeProblem, grid: WaveletGrid) -> SolutionSlice:
    """Terminal data sampled at the grid: y = g, z = sigma(T,.) g', f = driver."""
    T = problem.horizon_T
    x = grid.points
    y = _grid_values(problem.terminal(x), x.shape)
    z = _grid_values(problem.diffusion(T, x), x.shape) * _grid_values(problem.terminal_dx(x), x.shape)
    f = _grid_values(problem.driver(T, x, y, z), x.shape)
    for name, v in (("terminal", y), ("terminal derivative", z), ("terminal driver", f)):
        if not np.all(np.isfinite(v)):
            raise SolverError(f"non-finite {name} values on the grid")
    return SolutionSlice(y=y, z=z, fvals=f, t=T)


_TERMINAL_CACHE: OrderedDict = OrderedDict()
_TERMINAL_CACHE_MAX = 8


def terminal_slice_mixed(problem: FbsdeProblem, grid: WaveletGrid) -> SolutionSlice:
    """Terminal data as basis inner products <., phi_r>, damping payoff kinks.

    Identical to the quick slice whenever g and sigma g' lie in the basis span;
    for discontinuous g' the projection removes the non-convergent component
    that otherwise stalls the z recursion.
    """
    key = (id(problem), grid.J, grid.m, grid.center)
    cached = _TERMINAL_CACHE.get(key)
    if cached is not None and cached[0] is problem:
        return cached[1]

    T = problem.horizon_T
    kinks = problem.terminal_kinks

    def z_fn(x):
        return np.asarray(problem.diffusion(T, x), dtype=float) * np.asarray(problem.terminal_dx(x), dtype=float)

    def f_fn(x):
        g = np.asarray(problem.terminal(x), dtype=float)
        return np.asarray(problem.driver(T, x, g, z_fn(x)), dtype=float)

    y = project_coefficients(problem.terminal, grid, kinks=kinks)
    z = project_coefficients(z_fn, grid, kinks=kinks)
    f = project_coefficients(f_fn, grid, kinks=kinks)
    slc = SolutionSlice(y=y, z=z, fvals=f, t=T)

    _TERMINAL_CACHE[key] = (problem, slc)
    while len(_TERMINAL_CACHE) > _TERMINAL_CACHE_MAX:
        _TERMINAL_CACHE.popitem(last=False)
    return slc


def _picard_iterate(problem, t, x, z, h, theta1, dt, iters, y_init):
    """Fixed-point iteration y <- dt*theta1*f(t,x,y,z) + h.

    Returns (y, last_residual, diverged); the residual is the sup-norm of the
    final update and ``diverged`` flags three consecutive growing updates.
    """
    y = np.asarray(y_init, dtype=float)
    prev_diff = None
    growth = 0
    diverged = False
    diff = 0.0
    for _ in range(iters):
        with np.errstate(over="ignore", invalid="ignore"):
            y_next = dt * theta1 * np.asarray(problem.driver(t, x, y, z), dtype=float) + h
            diff = float(np.max(np.abs(y_next - y))) if np.size(y_next) else 0.0
        if prev_diff is not None and diff > prev_diff:
            growth += 1
            if growth >= 3:
                diverged = True
        else:
            growth = 0
        prev_diff = diff
        y = y_next
    return y, diff, diverged


def picard_solve(problem, t, x, z, h, theta1: float, dt: float, iters: int, y_init):
    """Resolve the implicit y equation by exactly ``iters`` Picard iterations.

    theta1 = 0 short-circuits to the explicit value h.  A non-contracting
    iteration (three consecutive growing residuals) raises
    :class:`PicardDivergenceWarning` but still returns the iterate.
    """
    if iters < 0:
        raise ValueError(f"iters must be non-negative, got {iters}")
    if theta1 == 0.0:
        return h
    y, _, diverged = _picard_iterate(problem, t, x, z, h, theta1, dt, iters, y_init)
    if diverged:
        warnings.warn(
            f"Picard iteration not contracting at t={t:.6g} (dt*theta1*Lip likely >= 1)",
            PicardDivergenceWarning,
            stacklevel=2,
        )
    return y


def antireflective_adjust(slice_vector, grid: WaveletGrid, fraction: float) -> np.ndarray:
    """Rebuild the outer grid bands by antireflection about the snapped edges.

    With q = ceil(fraction * 2J), entries at positions < q are replaced by
    2 v[q] - v[2q - i] (and mirrored on the right).  Exact on affine data and
    the interior band is returned unchanged.

    When applied every step, the driver is re-evaluated on extrapolated band
    values; drivers that grow superlinearly in (y, z) can amplify there, so
    per-step adjustment is intended for drivers with linear growth.
    """
    v = np.array(slice_vector, dtype=float)
    n = v.size
    q = int(np.ceil(fraction * n))
    if not 0.0 < fraction < 1.0 / 3.0 or 3 * q > n - 1:
        raise ValueError(f"antireflective fraction {fraction} out of range for {n} grid points")
    left = np.arange(q)
    v[left] = 2.0 * v[q] - v[2 * q - left]
    pb = n - 1 - q
    right = np.arange(pb + 1, n)
    v[right] = 2.0 * v[pb] - v[2 * pb - right]
    return v


def _require_finite(vec, what, t):
    bad = np.flatnonzero(~np.isfinite(vec))
    if bad.size:
        raise SolverError(f"non-finite {what} at t={t:.6g}, grid row index {int(bad[0])}")


def backward_step(
    next_slice: SolutionSlice,
    kernel,
    scheme: ThetaScheme,
    problem: FbsdeProblem,
    grid: WaveletGrid,
    t: float,
    dt: float,
    picard_iters: int,
    adjust: Optional[Callable] = None,
    timer: Optional[PhaseTimer] = None,
    diagnostics: Optional[Diagnostics] = None,
) -> SolutionSlice:
    """One backward step of the theta scheme on the whole grid."""
    timer = timer or PhaseTimer()
    th1, th2 = scheme.theta1, scheme.theta2

    with timer("matvec"):
        Ay = kernel.apply_plain(next_slice.y)
        By = kernel.apply_brownian(next_slice.y)
        z = By / (th2 * dt)
        if th2 != 1.0:
            ratio = (1.0 - th2) / th2
            z += ratio * (kernel.apply_brownian(next_slice.fvals) - kernel.apply_plain(next_slice.z))
        h = Ay
        if th1 != 1.0:
            h = h + dt * (1.0 - th1) * kernel.apply_plain(next_slice.fvals)
    _require_finite(z, "z value", t)

    if th1 == 0.0:
        y = h
    else:
        with timer("picard"):
            y, residual, diverged = _picard_iterate(
                problem, t, grid.points, z, h, th1, dt, picard_iters, y_init=Ay
            )
        if diagnostics is not None:
            diagnostics.picard_residuals.append(residual)
            if diverged:
                diagnostics.divergence_times.append(t)
    _require_finite(y, "y value", t)

    if adjust is not None:
        with timer("adjust"):
            y = adjust(y)
            z = adjust(z)

    with timer("driver"):
        f = _grid_values(problem.driver(t, grid.points, y, z), y.shape)
    _require_finite(f, "driver value", t)
    return SolutionSlice(y=y, z=z, fvals=f, t=t)


def _coefficient_dependence(problem: FbsdeProblem, grid: WaveletGrid) -> tuple[bool, bool]:
    """(time-varying, state-varying) for the step coefficients; probed if unset."""
    time_dep, state_dep = problem.time_varying_coeffs, problem.state_varying_coeffs
    if time_dep is not None and state_dep is not None:
        return time_dep, state_dep
    xs = grid.center + grid.half_width * np.array([-0.83, -0.311, 0.0, 0.473, 0.92])
    ts = problem.horizon_T * np.array([0.0, 0.289, 0.6171, 1.0])
    samples = np.array(
        [[np.broadcast_to(fn(t, xs), xs.shape) for t in ts] for fn in (problem.drift, problem.diffusion)],
        dtype=float,
    )  # (2, len(ts), len(xs))
    probe_state = bool(np.any(samples != samples[:, :, :1]))
    probe_time = bool(np.any(samples != samples[:, :1, :]))
    return (
        probe_time if time_dep is None else time_dep,
        probe_state if state_dep is None else state_dep,
    )


def _kernel_for_step(problem, grid, t, dt, time_dep, state_dep, previous, timer):
    if previous is not None and not time_dep:
        return previous
    with timer("kernel"):
        if time_dep and state_dep:
            return build_compact_kernel(problem, grid, t, dt)
        return build_kernel(problem, grid, t, dt)


def solve(problem: FbsdeProblem, config: SolverConfig) -> SolveResult:
    """Run the full backward recursion and evaluate (y, z) at (0, x0).

    Grid slices are produced for p = P-1..1 and the last step is the off-grid
    evaluation at x0.  Kernels are built once when the increment distribution
    is time-independent and rebuilt per step otherwise.  With
    ``retain_slices`` the grid slice at t = 0 is computed as well and all
    slices are returned terminal-first.
    """
    validate_config(problem, config)
    wall0 = time.perf_counter()
    timer = PhaseTimer()
    diagnostics = Diagnostics()

    domain = compute_domain(problem, config.L)
    grid = WaveletGrid.from_domain(config.J, domain.lower, domain.upper)
    dt = problem.horizon_T / config.P
    scheme = config.scheme

    with timer("terminal"):
        if config.variant == "quick":
            current = terminal_slice_quick(problem, grid)
        else:
            current = terminal_slice_mixed(problem, grid)

    adjust = None
    if config.antireflective is not None:
        adjust = lambda v: antireflective_adjust(v, grid, config.antireflective)

    slices = [current] if config.retain_slices else None
    time_dep, state_dep = _coefficient_dependence(problem, grid)
    kernel = None
    for p in range(config.P - 1, 0, -1):
        t_p = p * dt
        kernel = _kernel_for_step(problem, grid, t_p, dt, time_dep, state_dep, kernel, timer)
        current = backward_step(
            current, kernel, scheme, problem, grid, t_p, dt, config.picard_iters, adjust, timer, diagnostics
        )
        if slices is not None:
            slices.append(current)

    if slices is not None:
        kernel0 = _kernel_for_step(problem, grid, 0.0, dt, time_dep, state_dep, kernel, timer)
        slices.append(
            backward_step(
                current, kernel0, scheme, problem, grid, 0.0, dt, config.picard_iters, adjust, timer, diagnostics
            )
        )

    with timer("matvec"):
        row = eval_row(problem, grid, 0.0, dt, problem.x0)
        ay = expect_plain(row.a, current.y)
        z0 = expect_brownian(row.b, current.y) / (scheme.theta2 * dt)
        if scheme.theta2 != 1.0:
            ratio = (1.0 - scheme.theta2) / scheme.theta2
            z0 += ratio * (expect_brownian(row.b, current.fvals) - expect_plain(row.a, current.z))
        h0 = ay
        if scheme.theta1 != 1.0:
            h0 += dt * (1.0 - scheme.theta1) * expect_plain(row.a, current.fvals)
    if scheme.theta1 == 0.0:
        y0 = h0
    else:
        with timer("picard"):
            y0, residual, diverged = _picard_iterate(
                problem, 0.0, problem.x0, z0, h0, scheme.theta1, dt, config.picard_iters, y_init=ay
            )
        diagnostics.picard_residuals.append(residual)
        if diverged:
            diagnostics.divergence_times.append(0.0)
    y0, z0 = float(y0), float(z0)
    if not (np.isfinite(y0) and np.isfinite(z0)):
        raise SolverError(f"non-finite result at the initial state: y0={y0}, z0={z0}")

    diagnostics.timings = dict(timer.seconds)
    diagnostics.wall_s = time.perf_counter() - wall0
    return SolveResult(y0=y0, z0=z0, grid=grid, slices=slices, diagnostics=diagnostics)


def _reference_for(problem: FbsdeProblem, reference=None) -> tuple[float, float, str]:
    if reference is not None:
        y_ref, z_ref = reference
        return float(y_ref), float(z_ref), "provided"
    if problem.exact is not None:
        y_ref, z_ref = problem.exact(0.0, problem.x0)
        return float(y_ref), float(z_ref), "exact"
    if problem.reference is not None:
        y_ref, z_ref = problem.reference
        return float(y_ref), float(z_ref), "reference"
    raise ConfigError(f"problem {problem.name!r} has no exact solution or reference values")


def convergence_sweep(
    problem: FbsdeProblem,
    config: SolverConfig,
    P_values: Sequence[int],
    reference=None,
) -> ConvergenceReport:
    """Solve across a sweep of step counts and fit convergence orders.

    Errors are |y0 - ref| and |z0 - ref| at (0, x0); orders come from the
    log-log slope against dt and are ``None`` when an error vanishes exactly.
    """
    P_values = sorted(int(P) for P in P_values)
    y_ref, z_ref, tag = _reference_for(problem, reference)
    ys, zs = [], []
    for P in P_values:
        res = solve(problem, replace(config, P=P, retain_slices=False))
        ys.append(res.y0)
        zs.append(res.z0)
    err_y = [abs(y - y_ref) for y in ys]
    err_z = [abs(z - z_ref) for z in zs]

    def fit(errors):
        if len(errors) >= 3 and all(e > 0 for e in errors):
            return estimate_order(P_values, errors)
        return None

    return ConvergenceReport(
        steps=tuple(P_values),
        errors_y=tuple(err_y),
        errors_z=tuple(err_z),
        order_y=fit(err_y),
        order_z=fit(err_z),
        reference=(y_ref, z_ref),
        reference_tag=tag,
        y_values=tuple(ys),
        z_values=tuple(zs),
    )
