"""Independent ground-truth machinery: quadrature expectations, Black-Scholes
closed forms, and convergence-order fitting.

The one-step Euler increment is exactly Gaussian, so Gauss-Hermite quadrature
is spectrally accurate for smooth integrands and serves as the oracle against
which the FFT expectation engine is tested.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm


def _hermite_rule(nodes: int):
    u, w = np.polynomial.hermite.hermgauss(nodes)
    return u, w / np.sqrt(np.pi)


def quad_expectation(problem, t: float, x, v: Callable, dt: float, nodes: int = 64):
    """E[v(X')] with X' = x + mu(t,x) dt + sigma(t,x) sqrt(dt) Z, by Gauss-Hermite.

    ``x`` may be an array, in which case the expectation is taken row-wise.
    """
    if nodes < 16:
        raise ValueError(f"need at least 16 quadrature nodes, got {nodes}")
    u, w = _hermite_rule(nodes)
    x = np.asarray(x, dtype=float)
    mu = np.asarray(problem.drift(t, x), dtype=float)
    sig = np.asarray(problem.diffusion(t, x), dtype=float)
    shifted = x[..., None] + mu[..., None] * dt + np.sqrt(2.0 * dt) * sig[..., None] * u
    fx = np.asarray(v(shifted), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise FloatingPointError("non-finite integrand sample in quad_expectation")
    out = fx @ w
    return float(out) if out.ndim == 0 else out


def quad_expectation_brownian(problem, t: float, x, v: Callable, dt: float, nodes: int = 64):
    """E[v(X') dW] with dW = sqrt(dt) Z the Brownian increment of the step.

    Satisfies E[X' dW] = sigma*dt and the integration-by-parts identity
    E[v(X') dW] = sigma*dt*E[v'(X')] for smooth v.
    """
    if nodes < 16:
        raise ValueError(f"need at least 16 quadrature nodes, got {nodes}")
    u, w = _hermite_rule(nodes)
    x = np.asarray(x, dtype=float)
    mu = np.asarray(problem.drift(t, x), dtype=float)
    sig = np.asarray(problem.diffusion(t, x), dtype=float)
    z = np.sqrt(2.0) * u  # standard normal abscissae
    shifted = x[..., None] + mu[..., None] * dt + np.sqrt(dt) * sig[..., None] * z
    fx = np.asarray(v(shifted), dtype=float) * (np.sqrt(dt) * z)
    if not np.all(np.isfinite(fx)):
        raise FloatingPointError("non-finite integrand sample in quad_expectation_brownian")
    out = fx @ w
    return float(out) if out.ndim == 0 else out


def bs_call_price_delta(S, K: float, r: float, sigma: float, tau):
    """Black-Scholes call price and spot delta N(d1); tau = 0 gives the payoff limit."""
    S = np.asarray(S, dtype=float)
    tau = np.asarray(tau, dtype=float)
    vol = sigma * np.sqrt(np.maximum(tau, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(S / K) + (r + 0.5 * sigma**2) * tau) / vol
    expired = vol <= 0.0
    d1 = np.where(expired, np.where(S >= K, np.inf, -np.inf), d1)
    d2 = d1 - vol
    price = S * norm.cdf(d1) - K * np.exp(-r * tau) * norm.cdf(d2)
    price = np.where(expired, np.maximum(S - K, 0.0), price)
    delta = norm.cdf(d1)
    if price.ndim == 0:
        return float(price), float(delta)
    return price, delta


def black_scholes_reference(S0: float, K: float, r: float, sigma: float, T: float):
    """(Y0, Z0) of the call-option FBSDE: price and sigma*S0*N(d1)."""
    if sigma <= 0 or T <= 0:
        raise ValueError("black_scholes_reference needs sigma > 0 and T > 0")
    price, delta = bs_call_price_delta(S0, K, r, sigma, T)
    return price, sigma * S0 * delta


def estimate_order(steps: Sequence[int], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(dt) over a step sweep.

    dt is proportional to 1/P, so the fitted slope in log(P) is negated.
    """
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if steps.size < 3:
        raise ValueError("order estimation needs at least 3 step counts")
    if np.any(errors <= 0.0):
        raise ValueError("order estimation needs strictly positive errors")
    slope = np.polyfit(np.log(steps), np.log(errors), 1)[0]
    return float(-slope)


@dataclass(frozen=True)
class ConvergenceReport:
    """Errors at (0, x0) across a time-step sweep plus fitted orders."""

    steps: tuple[int, ...]
    errors_y: tuple[float, ...]
    errors_z: tuple[float, ...]
    order_y: float | None
    order_z: float | None
    reference: tuple[float, float]
    reference_tag: str
    y_values: tuple[float, ...] = ()
    z_values: tuple[float, ...] = ()

    def __post_init__(self):
        if not (len(self.steps) == len(self.errors_y) == len(self.errors_z)):
            raise ValueError("sweep lists must have equal length")
        if list(self.steps) != sorted(set(self.steps)):
            raise ValueError("step counts must be strictly increasing")
