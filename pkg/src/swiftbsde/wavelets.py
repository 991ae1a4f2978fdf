"""Shannon-type scaling functions on a finite centered interval.

The order-J basis lives on (center - a, center + a] with half-width
a = 2^(-m) * J.  Grid points sit at x_r = center + r * 2^(-m) for
r = 1-J..J and the odd frequencies are C_k = (2k-1) pi / (2J).  The r-th
scaling function is the cosine sum

    phi_r(x) = sum_{k=1..J} cos(C_k * (2^m (x - center) - r)),

which collapses to sin(pi u) / (2 sin(pi u / (2J))) with u = 2^m (x-c) - r.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .expectations import odd_frequency_transform

QUAD_REL_TOL = 1e-10
QUAD_MAX_POINTS = 2**20
DEFAULT_OVERSAMPLE = 16
_SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class WaveletGrid:
    """Dyadic evaluation grid and frequencies for the order-J scaling basis."""

    J: int
    m: float
    center: float = 0.0

    def __post_init__(self):
        if self.J < 1:
            raise ValueError(f"wavelet order J must be positive, got {self.J}")

    @classmethod
    def from_domain(cls, J: int, lower: float, upper: float) -> "WaveletGrid":
        """Grid whose support (lower, upper] matches the requested interval."""
        if upper <= lower:
            raise ValueError(f"empty domain [{lower}, {upper}]")
        half = 0.5 * (upper - lower)
        return cls(J=J, m=float(np.log2(J / half)), center=0.5 * (lower + upper))

    @property
    def scale(self) -> float:
        """2^m, the reciprocal grid spacing."""
        return 2.0**self.m

    @property
    def spacing(self) -> float:
        return 2.0**-self.m

    @property
    def half_width(self) -> float:
        return self.J * 2.0**-self.m

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    @cached_property
    def r_indices(self) -> np.ndarray:
        return np.arange(1 - self.J, self.J + 1)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Centered grid points r / 2^m."""
        out = self.r_indices * self.spacing
        out.setflags(write=False)
        return out

    @cached_property
    def points(self) -> np.ndarray:
        out = self.center + self.offsets
        out.setflags(write=False)
        return out

    @cached_property
    def frequencies(self) -> np.ndarray:
        """C_k = (2k-1) pi / (2J) for k = 1..J."""
        out = (2.0 * np.arange(1, self.J + 1) - 1.0) * np.pi / (2.0 * self.J)
        out.setflags(write=False)
        return out

    @cached_property
    def rho(self) -> np.ndarray:
        """Physical frequencies 2^m * C_k."""
        out = self.scale * self.frequencies
        out.setflags(write=False)
        return out

    @cached_property
    def phase_matrix(self) -> np.ndarray:
        """exp(i * C_k * s) for grid rows s; reused by every kernel build."""
        out = np.exp(1j * np.outer(self.r_indices, self.frequencies))
        out.setflags(write=False)
        return out


def eval_scaling(grid: WaveletGrid, r: int, x) -> np.ndarray | float:
    """Closed form of phi_r at x (scalar or array).

    The removable singularities u = 2Jl are resolved to +J (even l) and
    -J (odd l); the branch is taken when |sin(pi u / (2J))| < 1e-12.
    """
    x = np.asarray(x, dtype=float)
    u = grid.scale * (x - grid.center) - r
    den = np.sin(np.pi * u / (2.0 * grid.J))
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.sin(np.pi * u) / (2.0 * den)
    period = np.rint(u / (2.0 * grid.J))
    sign = np.where(period % 2.0 == 0.0, 1.0, -1.0)
    vals = np.where(np.abs(den) < _SINGULAR_TOL, sign * grid.J, vals)
    return float(vals) if vals.ndim == 0 else vals


def alternating_extension_eval(v: Callable, grid: WaveletGrid, x) -> np.ndarray | float:
    """Evaluate the alternating extension of v: period 2a with a sign flip.

    vtilde = v on (lower, upper] and vtilde(x + 2a) = -vtilde(x) everywhere.
    """
    x = np.asarray(x, dtype=float)
    span = 2.0 * grid.half_width
    shifts = np.ceil((x - grid.upper) / span)
    vals = np.asarray(v(x - shifts * span), dtype=float) * np.where(shifts % 2.0 == 0.0, 1.0, -1.0)
    return float(vals) if vals.ndim == 0 else vals


def _split_segments(lower: float, upper: float, kinks: Sequence[float]):
    cuts = sorted({float(k) for k in kinks if lower < k < upper})
    edges = [lower, *cuts, upper]
    return list(zip(edges[:-1], edges[1:])), len(cuts)


def _segment_quadrature(lower: float, upper: float, panels: int, kinks: Sequence[float]):
    """Composite-Simpson nodes and weights on [lower, upper], split at kinks.

    Segment endpoints that coincide with an interior kink are nudged one-sided
    (the left segment samples kink-eps) so piecewise-defined integrands are
    never evaluated across their own breakpoint.
    """
    segments, n_cuts = _split_segments(lower, upper, kinks)
    total = upper - lower
    nodes, weights = [], []
    for i, (lo, hi) in enumerate(segments):
        n = max(4, int(round(panels * (hi - lo) / total / 2)) * 2)
        xs = np.linspace(lo, hi, n + 1)
        if i < n_cuts:  # right edge is a kink: sample its left limit
            xs[-1] = hi - 1e-12 * (1.0 + abs(hi))
        ws = np.ones(n + 1)
        ws[1:-1:2] = 4.0
        ws[2:-1:2] = 2.0
        ws *= (hi - lo) / n / 3.0
        nodes.append(xs)
        weights.append(ws)
    return np.concatenate(nodes), np.concatenate(weights)


def inner_product(
    v: Callable,
    w: Callable,
    grid: WaveletGrid,
    panels: int | None = None,
    kinks: Sequence[float] = (),
) -> float:
    """<v, w> = (2^m / J) * integral of v*w over the grid support.

    With explicit ``panels`` a single composite-Simpson pass is used; otherwise
    panels start at 16 * 2J and double until two passes agree to 1e-10
    relative (capped at 2^20 points).
    """

    def integrate(n):
        xs, ws = _segment_quadrature(grid.lower, grid.upper, n, kinks)
        fx = np.asarray(v(xs), dtype=float) * np.asarray(w(xs), dtype=float)
        if not np.all(np.isfinite(fx)):
            raise FloatingPointError("non-finite integrand sample in inner_product")
        return float(ws @ fx) / grid.half_width

    if panels is not None:
        if panels < 2 * grid.J:
            raise ValueError(f"panels must be at least 2J = {2 * grid.J}")
        return integrate(panels)
    n = DEFAULT_OVERSAMPLE * 2 * grid.J
    result = integrate(n)
    while 2 * n <= QUAD_MAX_POINTS:
        n *= 2
        refined = integrate(n)
        if abs(refined - result) <= QUAD_REL_TOL * max(1.0, abs(refined)):
            return refined
        result = refined
    return result


def _oscillatory_panel_moments(rho: np.ndarray, h: float):
    """Exact moments M_j = integral of u^j exp(-i rho u) over [-h, h], j = 0, 1, 2.

    The frequencies rho are strictly positive, so only cancellation (not
    division) needs guarding: below rho*h = 0.05 the series forms are used,
    and as rho*h -> 0 the moments reduce to plain Simpson weights.
    """
    theta = rho * h
    small = np.abs(theta) < 0.05
    t2 = theta * theta
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    M0 = np.where(small, 2.0 * h * (1.0 - t2 / 6.0 + t2 * t2 / 120.0), 2.0 * sin_t / rho)
    M1_mag = np.where(
        small,
        2.0 * rho * h**3 * (1.0 / 3.0 - t2 / 30.0 + t2 * t2 / 840.0),
        2.0 * (sin_t - theta * cos_t) / rho**2,
    )
    M2 = np.where(
        small,
        2.0 * h**3 * (1.0 / 3.0 - t2 / 10.0 + t2 * t2 / 168.0),
        2.0 * (2.0 * theta * cos_t + (t2 - 2.0) * sin_t) / rho**3,
    )
    return M0, -1j * M1_mag, M2


def _trig_coefficients(v: Callable, grid: WaveletGrid, panels: int, kinks: Sequence[float]) -> np.ndarray:
    """w_k = <v, cos(rho_k (.-c))> + i <v, sin(rho_k (.-c))> on Simpson nodes.

    Each Simpson panel's quadratic interpolant of v is integrated exactly
    against exp(-i rho (.-c)) (Filon-type weights), so the quadrature error
    depends on the smoothness of v per segment but not on the frequency.
    """
    segments, n_cuts = _split_segments(grid.lower, grid.upper, kinks)
    total = grid.upper - grid.lower
    rho = grid.rho
    S = np.zeros(grid.J, dtype=complex)
    for i, (lo, hi) in enumerate(segments):
        n = max(4, int(round(panels * (hi - lo) / total / 2)) * 2)
        xs = np.linspace(lo, hi, n + 1)
        sample = xs
        if i < n_cuts:  # right edge is a kink: sample its left limit
            sample = xs.copy()
            sample[-1] = hi - 1e-12 * (1.0 + abs(hi))
        vals = np.asarray(v(sample), dtype=float)
        if vals.shape != xs.shape:
            vals = np.broadcast_to(vals, xs.shape)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite integrand sample in projection")
        h = (hi - lo) / n
        v0, v1, v2 = vals[0:-1:2], vals[1::2], vals[2::2]
        poly = np.stack(
            [v1, (v2 - v0) / (2.0 * h), (v2 - 2.0 * v1 + v0) / (2.0 * h * h)], axis=1
        )  # per-panel quadratic coefficients about the midpoint
        mids = xs[1::2] - grid.center
        M0, M1, M2 = _oscillatory_panel_moments(rho, h)
        # S_k += sum_panels e^{-i rho mid} (c0 M0 + c1 M1 + c2 M2), chunked over panels
        chunk = max(1, 2**21 // max(grid.J, 1))
        for start in range(0, mids.size, chunk):
            args = np.outer(rho, mids[start : start + chunk])
            U = (np.cos(args) - 1j * np.sin(args)) @ poly[start : start + chunk]
            S += M0 * U[:, 0] + M1 * U[:, 1] + M2 * U[:, 2]
    return np.conj(S) / grid.half_width


def project_coefficients(
    v: Callable,
    grid: WaveletGrid,
    panels: int | None = None,
    kinks: Sequence[float] = (),
) -> np.ndarray:
    """Inner products <v, phi_r> for all r = 1-J..J.

    The 2J odd-frequency cosine/sine coefficients of v are formed by
    quadrature and all basis inner products are then synthesized at once with
    one odd-frequency transform, so the cost is quadrature plus O(J log J)
    rather than 2J separate integrals.
    """

    def projected(n):
        return odd_frequency_transform(_trig_coefficients(v, grid, n, kinks))

    if panels is not None:
        return projected(panels)
    n = DEFAULT_OVERSAMPLE * 2 * grid.J
    coeffs = projected(n)
    while 2 * n <= QUAD_MAX_POINTS:
        n *= 2
        refined = projected(n)
        if np.max(np.abs(refined - coeffs)) <= QUAD_REL_TOL * max(1.0, np.max(np.abs(refined))):
            return refined
        coeffs = refined
    return coeffs
