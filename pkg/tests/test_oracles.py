import numpy as np
import pytest

from swiftbsde import (
    ConvergenceReport,
    black_scholes_reference,
    estimate_order,
    make_builtin_problem,
    quad_expectation,
    quad_expectation_brownian,
)


@pytest.fixture(scope="module")
def ex1():
    return make_builtin_problem("ex1")


class TestQuadExpectation:
    def test_normalization(self, ex1):
        assert quad_expectation(ex1, 0.0, 0.3, lambda x: np.ones_like(x), 0.25) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_mean(self, ex1):
        val = quad_expectation(ex1, 0.0, 0.3, lambda x: x, 0.25)
        assert val == pytest.approx(0.3, abs=1e-12)  # mu = 0 for ex1

    def test_mean_includes_drift(self):
        prob = make_builtin_problem("ex2_call")
        mu = float(prob.drift(0.0, 1.0))
        val = quad_expectation(prob, 0.0, 1.0, lambda x: x, 0.5)
        assert val == pytest.approx(1.0 + mu * 0.5, abs=1e-12)

    def test_sine_closed_form(self, ex1):
        dt = 0.5
        val = quad_expectation(ex1, 0.5, 0.0, lambda x: np.sin(x + 1.0), dt)
        assert val == pytest.approx(np.exp(-dt / 2) * np.sin(1.0), abs=1e-10)

    def test_node_doubling_saturates(self, ex1):
        v = lambda x: np.cos(2 * x) * np.exp(-0.1 * x**2)
        a = quad_expectation(ex1, 0.0, 0.4, v, 0.3, nodes=64)
        b = quad_expectation(ex1, 0.0, 0.4, v, 0.3, nodes=128)
        assert abs(a - b) < 1e-10

    def test_too_few_nodes_rejected(self, ex1):
        with pytest.raises(ValueError):
            quad_expectation(ex1, 0.0, 0.0, np.sin, 0.1, nodes=8)


class TestQuadExpectationBrownian:
    def test_constant_integrates_to_zero(self, ex1):
        assert quad_expectation_brownian(ex1, 0.0, 0.1, lambda x: np.ones_like(x), 0.25) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_identity_gives_sigma_dt(self):
        # E[X' dW] = sigma * dt for the Euler step
        prob = make_builtin_problem("ex2_call")
        sig = float(prob.diffusion(0.0, 1.0))
        dt = 0.3
        val = quad_expectation_brownian(prob, 0.0, 1.0, lambda x: x, dt)
        assert val == pytest.approx(sig * dt, abs=1e-12)

    def test_integration_by_parts_identity(self):
        # E[v(X') dW] = sigma * dt * E[v'(X')] for smooth v
        prob = make_builtin_problem("ex4")
        t, x, dt = 0.4, 1.2, 0.2
        sig = float(prob.diffusion(t, x))
        lhs = quad_expectation_brownian(prob, t, x, np.sin, dt, nodes=96)
        rhs = sig * dt * quad_expectation(prob, t, x, np.cos, dt, nodes=96)
        assert lhs == pytest.approx(rhs, abs=1e-8)


class TestBlackScholes:
    def test_benchmark_values(self):
        price, z0 = black_scholes_reference(100.0, 100.0, 0.1, 0.25, 0.1)
        assert price == pytest.approx(3.65997, abs=5e-6)
        assert z0 == pytest.approx(14.14823, abs=5e-6)

    def test_zero_volatility_limit(self):
        price, z0 = black_scholes_reference(110.0, 100.0, 0.0, 1e-8, 1.0)
        assert price == pytest.approx(10.0, abs=1e-6)
        assert z0 == pytest.approx(1e-8 * 110.0, rel=1e-6)  # delta -> 1 deep in the money

    def test_put_call_parity(self):
        S0, K, r, sigma, T = 105.0, 95.0, 0.03, 0.2, 0.75
        call, _ = black_scholes_reference(S0, K, r, sigma, T)
        # parity: put = call - S0 + K e^{-rT}; reprice the put as a call with
        # swapped roles via the symmetry C(S, K) - P(S, K) = S - K e^{-rT}
        put = call - S0 + K * np.exp(-r * T)
        from scipy.stats import norm

        d1 = (np.log(S0 / K) + (r + sigma**2 / 2) * T) / (sigma * np.sqrt(T))
        d2 = d1 - sigma * np.sqrt(T)
        put_direct = K * np.exp(-r * T) * norm.cdf(-d2) - S0 * norm.cdf(-d1)
        assert put == pytest.approx(put_direct, abs=1e-10)

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(ValueError):
            black_scholes_reference(100.0, 100.0, 0.1, 0.0, 1.0)
        with pytest.raises(ValueError):
            black_scholes_reference(100.0, 100.0, 0.1, 0.2, 0.0)


class TestEstimateOrder:
    def test_exact_second_order(self):
        P = np.array([8, 16, 32, 64])
        errors = 3.1 * (1.0 / P) ** 2
        assert estimate_order(P, errors) == pytest.approx(2.0, abs=1e-10)

    def test_exact_first_order(self):
        P = np.array([8, 16, 32, 64])
        assert estimate_order(P, 0.7 / P) == pytest.approx(1.0, abs=1e-10)

    def test_noisy_power_law(self):
        rng = np.random.default_rng(17)
        P = np.array([8, 16, 32, 64, 128])
        noise = 1.0 + 0.05 * rng.standard_normal(P.size)
        errors = 2.0 * (1.0 / P) ** 1.5 * noise
        assert estimate_order(P, errors) == pytest.approx(1.5, abs=0.15)

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            estimate_order([8, 16], [0.1, 0.05])

    def test_rejects_zero_errors(self):
        with pytest.raises(ValueError):
            estimate_order([8, 16, 32], [0.1, 0.0, 0.01])


class TestConvergenceReport:
    def test_lengths_must_match(self):
        with pytest.raises(ValueError):
            ConvergenceReport(
                steps=(8, 16, 32),
                errors_y=(0.1, 0.05),
                errors_z=(0.1, 0.05, 0.02),
                order_y=None,
                order_z=None,
                reference=(0.0, 1.0),
                reference_tag="exact",
            )

    def test_steps_must_increase(self):
        with pytest.raises(ValueError):
            ConvergenceReport(
                steps=(16, 8, 32),
                errors_y=(0.1, 0.05, 0.02),
                errors_z=(0.1, 0.05, 0.02),
                order_y=None,
                order_z=None,
                reference=(0.0, 1.0),
                reference_tag="exact",
            )
