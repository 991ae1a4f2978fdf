"""Conditional expectations of scaling functions under the one-step Euler transition.

For a state x at time t, the Euler step is X' = x + mu(t,x)*dt + sigma(t,x)*dW
with dW ~ N(0, dt).  Expectations of the grid scaling functions phi_r(X') and of
phi_r(X')*dW then reduce to finite odd-frequency cosine sums weighted by the
Gaussian characteristic function, all of which are evaluated with length-4J FFTs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


def char_increment(problem, t: float, x, rho, dt: float):
    """Characteristic function of the Euler increment X' - x at frequency rho.

    Returns exp(i*rho*mu(t,x)*dt - 0.5*rho^2*sigma(t,x)^2*dt).  ``rho`` may be
    an array; the result broadcasts accordingly.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rho = np.asarray(rho, dtype=float)
    mu = problem.drift(t, x)
    sig = problem.diffusion(t, x)
    return np.exp(1j * rho * mu * dt - 0.5 * rho**2 * sig**2 * dt)


def odd_frequency_transform(w) -> np.ndarray:
    """Evaluate Re{sum_k w_k exp(-i*C_k*r)} for r = 1-J..J, C_k = (2k-1)pi/(2J).

    ``w`` has shape (..., J); the output has shape (..., 2J).  The sum is an
    exact reduction to one length-4J DFT: w is placed at the odd indices
    1, 3, ..., 2J-1 of a zero array and the transform is read at r mod 4J.
    """
    w = np.asarray(w, dtype=complex)
    J = w.shape[-1]
    buf = np.zeros(w.shape[:-1] + (4 * J,), dtype=complex)
    buf[..., 1 : 2 * J : 2] = w
    spectrum = np.fft.fft(buf, axis=-1)
    idx = np.arange(1 - J, J + 1) % (4 * J)
    return np.ascontiguousarray(spectrum[..., idx].real)


def grid_value_transform(values) -> np.ndarray:
    """Evaluate vhat_k = sum_r v_r exp(-i*C_k*r) for k = 1..J from 2J grid values.

    Counterpart of :func:`odd_frequency_transform`: ``values`` (shape (..., 2J),
    indexed r = 1-J..J) is embedded at indices r mod 4J and the length-4J DFT is
    read at the odd frequencies.
    """
    values = np.asarray(values, dtype=float)
    J = values.shape[-1] // 2
    if values.shape[-1] != 2 * J:
        raise ValueError("grid value vector must have even length 2J")
    buf = np.zeros(values.shape[:-1] + (4 * J,), dtype=complex)
    idx = np.arange(1 - J, J + 1) % (4 * J)
    buf[..., idx] = values
    spectrum = np.fft.fft(buf, axis=-1)
    return spectrum[..., 1 : 2 * J : 2]


@dataclass(frozen=True)
class ExpectationKernel:
    """Dense expectation matrices for one time step on the wavelet grid.

    ``A[s, r]`` approximates E[phi_r(X') | X = x_s] and ``B[s, r]`` the
    Brownian-weighted E[phi_r(X') dW | X = x_s].  ``toeplitz`` is set when the
    step coefficients are state-independent, in which case both matrices are
    constant along diagonals.
    """

    A: np.ndarray
    B: np.ndarray
    t: float
    dt: float
    toeplitz: bool

    @property
    def J(self) -> int:
        return self.A.shape[0] // 2

    def apply_plain(self, values) -> np.ndarray:
        """(1/J) * A @ values: quick-SWIFT expectation for every grid row."""
        return (self.A @ np.asarray(values, dtype=float)) / self.J

    def apply_brownian(self, values) -> np.ndarray:
        return (self.B @ np.asarray(values, dtype=float)) / self.J


@dataclass(frozen=True)
class CompactKernel:
    """Factored kernel W[s,k] = exp(i*C_k*s) * Phi(t, x_s, rho_k) kept in frequency form.

    Mathematically equivalent to :class:`ExpectationKernel` (A @ v ==
    Re{W @ vhat}), but one step costs O(J^2) complex multiplies plus one
    length-4J FFT instead of a dense-matrix rebuild.  Used by the solver when
    the coefficients change every step.
    """

    WA: np.ndarray  # (2J, J) complex
    WB: np.ndarray
    t: float
    dt: float

    @property
    def J(self) -> int:
        return self.WA.shape[0] // 2

    def apply_plain(self, values) -> np.ndarray:
        return (self.WA @ grid_value_transform(values)).real / self.J

    def apply_brownian(self, values) -> np.ndarray:
        return (self.WB @ grid_value_transform(values)).real / self.J


def _weight_matrices(problem, grid, t, dt):
    """Per-row frequency weights (WA, WB) for a state-dependent step."""
    x = grid.points
    mu = np.broadcast_to(np.asarray(problem.drift(t, x), dtype=float), x.shape)
    sig = np.broadcast_to(np.asarray(problem.diffusion(t, x), dtype=float), x.shape)
    rho = grid.rho
    exponent = (1j * dt) * np.outer(mu, rho) - (0.5 * dt) * np.outer(sig**2, rho**2)
    WA = grid.phase_matrix * np.exp(exponent)
    WB = WA * ((1j * dt) * np.outer(sig, rho))
    return WA, WB


def build_compact_kernel(problem, grid, t: float, dt: float) -> CompactKernel:
    WA, WB = _weight_matrices(problem, grid, t, dt)
    return CompactKernel(WA=WA, WB=WB, t=t, dt=dt)


def build_kernel(problem, grid, t: float, dt: float, force_general: bool = False) -> ExpectationKernel:
    """Assemble the dense 2J x 2J expectation matrices for one time step.

    When mu(t, .) and sigma(t, .) are constant across the grid, A and B are
    Toeplitz; a single length-4J FFT then yields the diagonal generator and the
    matrices are filled by shifting (``toeplitz=True``).  Otherwise each row
    gets its own odd-frequency transform, batched into one FFT call.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = grid.points
    mu = np.broadcast_to(np.asarray(problem.drift(t, x), dtype=float), x.shape)
    sig = np.broadcast_to(np.asarray(problem.diffusion(t, x), dtype=float), x.shape)
    state_free = bool(np.all(mu == mu[0]) and np.all(sig == sig[0]))

    J = grid.J
    if state_free and not force_general:
        rho = grid.rho
        phi = np.exp(1j * rho * mu[0] * dt - 0.5 * rho**2 * sig[0] ** 2 * dt)
        # Diagonal generators g(d) = Re{sum_k u_k e^{+i C_k d}} for d = s - r.
        # Conjugating the weights turns the +i sum into the -i convention of the
        # length-4J transform: g(d) = Re{F(conj(u))[d mod 4J]}.
        gen_a = _long_generator(np.conj(phi))
        gen_b = _long_generator(np.conj(1j * sig[0] * dt * rho * phi))
        d = np.arange(2 * J)
        A = scipy.linalg.toeplitz(gen_a[d], gen_a[-d])
        B = scipy.linalg.toeplitz(gen_b[d], gen_b[-d])
        return ExpectationKernel(A=A, B=B, t=t, dt=dt, toeplitz=True)

    WA, WB = _weight_matrices(problem, grid, t, dt)
    stacked = odd_frequency_transform(np.concatenate([WA, WB], axis=0))
    A, B = stacked[: 2 * J], stacked[2 * J :]
    return ExpectationKernel(A=A, B=B, t=t, dt=dt, toeplitz=False)


def _long_generator(u) -> np.ndarray:
    """Re{sum_k u_k e^{-i C_k d}} on all residues d mod 4J, from one FFT."""
    u = np.asarray(u, dtype=complex)
    J = u.shape[-1]
    buf = np.zeros(4 * J, dtype=complex)
    buf[1 : 2 * J : 2] = u
    return np.fft.fft(buf).real


@dataclass(frozen=True)
class RowEvaluation:
    """Expectation weights for a single (possibly off-grid) starting state x."""

    a: np.ndarray
    b: np.ndarray
    x: float


def eval_row(problem, grid, t: float, dt: float, x: float) -> RowEvaluation:
    """Expectation weights a_r = E[phi_r(X')|X=x], b_r = E[phi_r(X') dW|X=x].

    Works for arbitrary x, which is how the recursion is finally evaluated at
    the initial state x0.
    """
    rho = grid.rho
    phi = char_increment(problem, t, x, rho, dt)
    w = np.exp(1j * rho * (x - grid.center)) * phi
    a = odd_frequency_transform(w)
    b = odd_frequency_transform((1j * dt * problem.diffusion(t, x)) * rho * w)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise FloatingPointError(f"non-finite expectation weights at x={x}, t={t}")
    return RowEvaluation(a=a, b=b, x=float(x))


def expect_plain(a_row, coeffs) -> float:
    """Quick-SWIFT expectation (1/J) sum_r coeffs_r * a_row_r."""
    a_row = np.asarray(a_row, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    if a_row.shape != coeffs.shape:
        raise ValueError(f"length mismatch: {a_row.shape} vs {coeffs.shape}")
    return float(a_row @ coeffs) / (a_row.shape[-1] // 2)


def expect_brownian(b_row, coeffs) -> float:
    """Brownian-weighted counterpart of :func:`expect_plain`."""
    return expect_plain(b_row, coeffs)
