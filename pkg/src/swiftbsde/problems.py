"""FBSDE problem instances, the theta-scheme table, and domain selection.

A problem is the decoupled pair

    dX = mu(t, X) dt + sigma(t, X) dW,        X_0 = x0,
    dY = -f(t, X, Y, Z) dt + Z dW,            Y_T = g(X_T),

with the discrete terminal condition Z_T = sigma(T, X_T) * g'(X_T).  The four
builtin benchmarks cover a smooth exact solution, a Black-Scholes call and a
bid-ask-spread option in log-asset coordinates, and a problem with state- and
time-dependent coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .oracles import black_scholes_reference, bs_call_price_delta

BUILTIN_NAMES = ("ex1", "ex2_call", "ex3_spread", "ex4")


@dataclass(frozen=True)
class FbsdeProblem:
    """Coefficients, terminal data and (when known) the exact solution.

    Coefficient callables must be pure and vectorized over the state argument.
    ``exact`` maps (t, x) to the pair (y, z).  ``lipschitz_y`` bounds the
    driver's Lipschitz constant in y and feeds the Picard contraction check.
    ``terminal_kinks`` lists abscissae where g or g' lose smoothness so that
    projection quadrature never straddles them.
    """

    drift: Callable
    diffusion: Callable
    driver: Callable
    terminal: Callable
    terminal_dx: Callable
    x0: float
    horizon_T: float
    exact: Optional[Callable] = None
    lipschitz_y: Optional[float] = None
    terminal_kinks: tuple[float, ...] = ()
    time_varying_coeffs: Optional[bool] = None
    state_varying_coeffs: Optional[bool] = None
    reference: Optional[tuple[float, float]] = None
    name: str = "custom"

    def __post_init__(self):
        if not self.horizon_T > 0:
            raise ValueError(f"horizon_T must be positive, got {self.horizon_T}")
        for t in (0.0, 0.5 * self.horizon_T, self.horizon_T):
            if np.any(np.asarray(self.diffusion(t, self.x0)) < 0):
                raise ValueError(f"diffusion is negative at (t={t}, x={self.x0})")
        if self.exact is not None:
            xs = self.x0 + np.array([-0.9217, -0.3331, 0.0, 0.4117, 1.0013])
            y_T = np.asarray(self.exact(self.horizon_T, xs)[0], dtype=float)
            g = np.asarray(self.terminal(xs), dtype=float)
            if np.max(np.abs(y_T - g)) > 1e-12 * max(1.0, float(np.max(np.abs(g)))):
                raise ValueError("exact solution does not match terminal condition at t = T")


@dataclass(frozen=True)
class ThetaScheme:
    """Time-integration weights: theta1 for the Y update, theta2 for Z."""

    theta1: float
    theta2: float
    label: str = "custom"

    def __post_init__(self):
        if not 0.0 <= self.theta1 <= 1.0:
            raise ValueError(f"theta1 must lie in [0, 1], got {self.theta1}")
        if not 0.0 < self.theta2 <= 1.0:
            raise ValueError(f"theta2 must lie in (0, 1], got {self.theta2}")


SCHEME_TABLE = {
    "A": (0.0, 1.0),
    "B": (0.5, 1.0),
    "C": (1.0, 1.0),
    "D": (0.5, 0.5),
}


def scheme_params(label) -> ThetaScheme:
    """Look up the tabulated schemes A-D, or wrap an explicit (theta1, theta2) pair."""
    if isinstance(label, ThetaScheme):
        return label
    if isinstance(label, str):
        key = label.strip().upper()
        if key not in SCHEME_TABLE:
            raise ValueError(f"unknown scheme {label!r}; expected one of {sorted(SCHEME_TABLE)}")
        t1, t2 = SCHEME_TABLE[key]
        return ThetaScheme(theta1=t1, theta2=t2, label=key)
    try:
        t1, t2 = (float(v) for v in label)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"scheme must be a label A-D or a (theta1, theta2) pair, got {label!r}") from exc
    return ThetaScheme(theta1=t1, theta2=t2, label="custom")


@dataclass(frozen=True)
class DomainSpec:
    """Cumulant-based computational range [kappa1 - L sqrt(kappa2), kappa1 + L sqrt(kappa2)]."""

    kappa1: float
    kappa2: float
    L: float
    lower: float = field(init=False)
    upper: float = field(init=False)

    def __post_init__(self):
        half = self.L * np.sqrt(self.kappa2)
        object.__setattr__(self, "lower", self.kappa1 - half)
        object.__setattr__(self, "upper", self.kappa1 + half)
        if not self.upper > self.lower:
            raise ValueError("degenerate domain: upper must exceed lower")


def compute_domain(problem: FbsdeProblem, L: float = 10.0) -> DomainSpec:
    """Domain from the first two cumulants of X_T: kappa1 = x0 + mu(0,x0) T, kappa2 = sigma^2(0,x0) T."""
    if L <= 0:
        raise ValueError(f"width multiplier L must be positive, got {L}")
    T = problem.horizon_T
    sig0 = float(problem.diffusion(0.0, problem.x0))
    if sig0 <= 0:
        raise ValueError("degenerate domain: diffusion vanishes at (0, x0)")
    kappa1 = problem.x0 + float(problem.drift(0.0, problem.x0)) * T
    kappa2 = sig0**2 * T
    return DomainSpec(kappa1=kappa1, kappa2=kappa2, L=float(L))


def _make_ex1() -> FbsdeProblem:
    def driver(t, x, y, z):
        s = np.sin(t + x)
        return y * z - z + 2.5 * y - s * np.cos(t + x) - 2.0 * s

    return FbsdeProblem(
        drift=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=lambda t, x: np.ones_like(np.asarray(x, dtype=float)),
        driver=driver,
        terminal=lambda x: np.sin(x + 1.0),
        terminal_dx=lambda x: np.cos(x + 1.0),
        x0=0.0,
        horizon_T=1.0,
        exact=lambda t, x: (np.sin(x + t), np.cos(x + t)),
        lipschitz_y=3.5,
        time_varying_coeffs=False,
        state_varying_coeffs=False,
        reference=(0.0, 1.0),
        name="ex1",
    )


def make_call_problem(
    S0: float = 100.0,
    K: float = 100.0,
    rate: float = 0.1,
    mu_bar: float = 0.2,
    sigma_bar: float = 0.25,
    horizon: float = 0.1,
) -> FbsdeProblem:
    """European call under Black-Scholes, solved in log-asset coordinates X = log S.

    The linear driver replicates the hedged payoff; the exact solution is the
    Black-Scholes price and sigma_bar * S * N(d1).
    """
    log_K = np.log(K)

    def exact(t, x):
        S = np.exp(np.asarray(x, dtype=float))
        price, delta = bs_call_price_delta(S, K, rate, sigma_bar, horizon - t)
        return price, sigma_bar * S * delta

    return FbsdeProblem(
        drift=lambda t, x: np.full_like(np.asarray(x, dtype=float), mu_bar - 0.5 * sigma_bar**2),
        diffusion=lambda t, x: np.full_like(np.asarray(x, dtype=float), sigma_bar),
        driver=lambda t, x, y, z: -rate * y - (mu_bar - rate) / sigma_bar * z,
        terminal=lambda x: np.maximum(np.exp(x) - K, 0.0),
        terminal_dx=lambda x: np.where(np.asarray(x) >= log_K, np.exp(x), 0.0),
        x0=float(np.log(S0)),
        horizon_T=horizon,
        exact=exact,
        lipschitz_y=rate,
        terminal_kinks=(float(log_K),),
        time_varying_coeffs=False,
        state_varying_coeffs=False,
        reference=black_scholes_reference(S0, K, rate, sigma_bar, horizon),
        name="ex2_call",
    )


#: (Y0, Z0) for the default bid-ask spread parameters, from an independent
#: Fourier-cosine solver run with a very large number of time steps.
SPREAD_REFERENCE = (2.9584544, 0.55319)


def make_spread_problem(
    S0: float = 100.0,
    rate: float = 0.01,
    mu_bar: float = 0.05,
    sigma_bar: float = 0.2,
    horizon: float = 0.25,
    K1: float = 95.0,
    K2: float = 105.0,
    borrow_rate: float = 0.06,
) -> FbsdeProblem:
    """Call spread under distinct lending and borrowing rates.

    The driver is nonlinear through min(y - z/sigma_bar, 0), which switches the
    financing cost between the two rates.  Payoff: long one K1 call, short two
    K2 calls.
    """
    log_K1, log_K2 = np.log(K1), np.log(K2)
    defaults = (S0, rate, mu_bar, sigma_bar, horizon, K1, K2, borrow_rate) == (
        100.0, 0.01, 0.05, 0.2, 0.25, 95.0, 105.0, 0.06)

    def terminal(x):
        S = np.exp(np.asarray(x, dtype=float))
        return np.maximum(S - K1, 0.0) - 2.0 * np.maximum(S - K2, 0.0)

    def terminal_dx(x):
        x = np.asarray(x, dtype=float)
        S = np.exp(x)
        return S * ((x >= log_K1).astype(float) - 2.0 * (x >= log_K2).astype(float))

    def driver(t, x, y, z):
        financing = (borrow_rate - rate) * np.minimum(y - z / sigma_bar, 0.0)
        return -rate * y - (mu_bar - rate) / sigma_bar * z - financing

    return FbsdeProblem(
        drift=lambda t, x: np.full_like(np.asarray(x, dtype=float), mu_bar - 0.5 * sigma_bar**2),
        diffusion=lambda t, x: np.full_like(np.asarray(x, dtype=float), sigma_bar),
        driver=driver,
        terminal=terminal,
        terminal_dx=terminal_dx,
        x0=float(np.log(S0)),
        horizon_T=horizon,
        lipschitz_y=borrow_rate,
        terminal_kinks=(float(log_K1), float(log_K2)),
        time_varying_coeffs=False,
        state_varying_coeffs=False,
        reference=SPREAD_REFERENCE if defaults else None,
        name="ex3_spread",
    )


def _make_ex4() -> FbsdeProblem:
    # Y_t = expit(t + X_t); the coefficients share the same sigmoid structure.
    def driver(t, x, y, z):
        e = np.exp(t + np.asarray(x, dtype=float))
        return -2.0 * y / (1.0 + 2.0 * e) - 0.5 * (y * z / (1.0 + e) - y**2 * z)

    def exact(t, x):
        s = expit(t + np.asarray(x, dtype=float))
        return s, s**2 * (1.0 - s)

    y0, z0 = exact(0.0, 1.0)
    return FbsdeProblem(
        drift=lambda t, x: 1.0 / (1.0 + 2.0 * np.exp(t + np.asarray(x, dtype=float))),
        diffusion=lambda t, x: expit(t + np.asarray(x, dtype=float)),
        driver=driver,
        terminal=lambda x: expit(1.0 + np.asarray(x, dtype=float)),
        terminal_dx=lambda x: expit(1.0 + np.asarray(x, dtype=float)) * (1.0 - expit(1.0 + np.asarray(x, dtype=float))),
        x0=1.0,
        horizon_T=1.0,
        exact=exact,
        lipschitz_y=2.5,
        time_varying_coeffs=True,
        state_varying_coeffs=True,
        reference=(float(y0), float(z0)),
        name="ex4",
    )


def make_builtin_problem(name: str, **overrides) -> FbsdeProblem:
    """Construct one of the builtin benchmarks: ex1, ex2_call, ex3_spread, ex4.

    ex2_call and ex3_spread accept parameter overrides (e.g. ``mu_bar=0.4``);
    the other two are fixed.
    """
    if name not in BUILTIN_NAMES:
        raise ValueError(f"unknown builtin problem {name!r}; expected one of {BUILTIN_NAMES}")
    if overrides and name in ("ex1", "ex4"):
        raise ValueError(f"builtin {name!r} takes no parameter overrides")
    if name == "ex2_call":
        return make_call_problem(**overrides)
    if name == "ex3_spread":
        return make_spread_problem(**overrides)
    return _make_ex1() if name == "ex1" else _make_ex4()


_EXPR_NAMESPACE = {
    "np": np,
    "pi": np.pi,
    "e": np.e,
    "exp": np.exp,
    "expit": expit,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "abs": np.abs,
    "sign": np.sign,
    "maximum": np.maximum,
    "minimum": np.minimum,
    "where": np.where,
}


def _expression_function(value, argnames: Sequence[str], label: str) -> Callable:
    """Turn a numeric constant or a numpy expression string into a callable."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        const = float(value)
        return lambda *args: const
    if not isinstance(value, str):
        raise ValueError(f"field {label!r} must be a number or an expression string")
    code = compile(value, f"<{label}>", "eval")
    for name in code.co_names:
        if name not in _EXPR_NAMESPACE and name not in argnames:
            raise ValueError(f"field {label!r} uses unknown name {name!r}")

    def fn(*args):
        local = dict(zip(argnames, args))
        return eval(code, {"__builtins__": {}}, {**_EXPR_NAMESPACE, **local})

    return fn


_SPEC_REQUIRED = ("drift", "diffusion", "driver", "terminal", "terminal_dx", "x0", "horizon_T")
_SPEC_OPTIONAL = (
    "exact_y",
    "exact_z",
    "lipschitz_y",
    "terminal_kinks",
    "time_varying_coeffs",
    "state_varying_coeffs",
    "name",
)


def problem_from_spec(spec) -> FbsdeProblem:
    """Build a problem from a builtin name or a structured document.

    Structured form: ``drift``/``diffusion`` are expressions in (t, x),
    ``driver`` in (t, x, y, z), ``terminal``/``terminal_dx`` in x, with numeric
    ``x0`` and ``horizon_T``.  Optional fields: ``exact_y``/``exact_z``
    (expressions in (t, x)), ``lipschitz_y``, ``terminal_kinks``,
    ``time_varying_coeffs``, ``state_varying_coeffs``, ``name``.  A plain
    string or ``{"builtin": name, ...overrides}`` selects a builtin.
    """
    if isinstance(spec, str):
        return make_builtin_problem(spec)
    if not isinstance(spec, dict):
        raise ValueError(f"problem spec must be a name or a mapping, got {type(spec).__name__}")
    if "builtin" in spec:
        extra = {k: v for k, v in spec.items() if k != "builtin"}
        return make_builtin_problem(spec["builtin"], **extra)

    unknown = set(spec) - set(_SPEC_REQUIRED) - set(_SPEC_OPTIONAL)
    if unknown:
        raise ValueError(f"unknown problem fields: {sorted(unknown)}")
    missing = [k for k in _SPEC_REQUIRED if k not in spec]
    if missing:
        raise ValueError(f"problem spec is missing fields: {missing}")

    exact = None
    if ("exact_y" in spec) != ("exact_z" in spec):
        raise ValueError("exact_y and exact_z must be given together")
    if "exact_y" in spec:
        fy = _expression_function(spec["exact_y"], ("t", "x"), "exact_y")
        fz = _expression_function(spec["exact_z"], ("t", "x"), "exact_z")
        exact = lambda t, x: (fy(t, x), fz(t, x))

    return FbsdeProblem(
        drift=_expression_function(spec["drift"], ("t", "x"), "drift"),
        diffusion=_expression_function(spec["diffusion"], ("t", "x"), "diffusion"),
        driver=_expression_function(spec["driver"], ("t", "x", "y", "z"), "driver"),
        terminal=_expression_function(spec["terminal"], ("x",), "terminal"),
        terminal_dx=_expression_function(spec["terminal_dx"], ("x",), "terminal_dx"),
        x0=float(spec["x0"]),
        horizon_T=float(spec["horizon_T"]),
        exact=exact,
        lipschitz_y=None if spec.get("lipschitz_y") is None else float(spec["lipschitz_y"]),
        terminal_kinks=tuple(float(k) for k in spec.get("terminal_kinks", ())),
        time_varying_coeffs=spec.get("time_varying_coeffs"),
        state_varying_coeffs=spec.get("state_varying_coeffs"),
        name=str(spec.get("name", "custom")),
    )
