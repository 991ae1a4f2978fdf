import numpy as np
import pytest

from swiftbsde import (
    ThetaScheme,
    compute_domain,
    make_builtin_problem,
    problem_from_spec,
    scheme_params,
)


class TestBuiltins:
    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="unknown builtin"):
            make_builtin_problem("ex9")

    def test_ex1_exact_initial_values(self):
        prob = make_builtin_problem("ex1")
        y0, z0 = prob.exact(0.0, 0.0)
        assert y0 == pytest.approx(0.0, abs=1e-15)
        assert z0 == pytest.approx(1.0, abs=1e-15)
        assert prob.x0 == 0.0 and prob.horizon_T == 1.0

    def test_ex2_at_the_money_payoff_is_zero(self):
        prob = make_builtin_problem("ex2_call")
        assert prob.terminal(np.log(100.0)) == pytest.approx(0.0, abs=1e-12)
        assert prob.x0 == pytest.approx(np.log(100.0))
        assert prob.horizon_T == 0.1

    def test_ex2_strike_derivative_is_right_sided(self):
        prob = make_builtin_problem("ex2_call")
        k = np.log(100.0)
        assert prob.terminal_dx(k) == pytest.approx(100.0)
        assert prob.terminal_dx(k - 1e-9) == 0.0

    def test_ex3_parameters(self):
        prob = make_builtin_problem("ex3_spread")
        assert prob.horizon_T == 0.25
        assert prob.terminal_kinks == (pytest.approx(np.log(95.0)), pytest.approx(np.log(105.0)))
        # long one 95-call, short two 105-calls
        assert prob.terminal(np.log(120.0)) == pytest.approx((120 - 95) - 2 * (120 - 105))

    def test_ex4_exact_initial_values_match_closed_form(self):
        prob = make_builtin_problem("ex4")
        y0, z0 = prob.exact(0.0, 1.0)
        e = np.exp(1.0)
        assert y0 == pytest.approx(e / (1 + e), abs=1e-12)
        assert z0 == pytest.approx(e**2 / (1 + e) ** 3, abs=1e-12)

    @pytest.mark.parametrize("name", ["ex1", "ex2_call", "ex4"])
    def test_exact_matches_terminal_at_T(self, name):
        prob = make_builtin_problem(name)
        dom = compute_domain(prob, 10.0)
        xs = np.linspace(dom.lower, dom.upper, 100)
        kinks = np.array(prob.terminal_kinks)
        if kinks.size:  # keep a safety margin around payoff kinks
            xs = xs[np.min(np.abs(xs[:, None] - kinks[None, :]), axis=1) > 1e-6]
        y_T = np.asarray(prob.exact(prob.horizon_T, xs)[0], dtype=float)
        np.testing.assert_allclose(y_T, prob.terminal(xs), atol=1e-12)

    def test_ex2_driver_is_linear(self):
        prob = make_builtin_problem("ex2_call")
        f = prob.driver
        t, x = 0.05, 4.6
        a, b = 1.3, -0.7
        y1, y2, z = 2.0, -1.0, 5.0
        lhs = f(t, x, a * y1 + b * y2, z)
        rhs = a * f(t, x, y1, z) + b * f(t, x, y2, z) - (a + b - 1) * f(t, x, 0.0, z)
        assert lhs == pytest.approx(rhs, abs=1e-12)
        z1, z2 = 3.0, -2.0
        lhs_z = f(t, x, y1, a * z1 + b * z2)
        rhs_z = a * f(t, x, y1, z1) + b * f(t, x, y1, z2) - (a + b - 1) * f(t, x, y1, 0.0)
        assert lhs_z == pytest.approx(rhs_z, abs=1e-12)

    def test_mu_bar_override_changes_drift_not_reference(self):
        base = make_builtin_problem("ex2_call")
        bumped = make_builtin_problem("ex2_call", mu_bar=0.4)
        assert bumped.drift(0.0, 1.0) == pytest.approx(0.4 - 0.5 * 0.25**2)
        assert bumped.reference == pytest.approx(base.reference)  # price is drift-free

    def test_overrides_rejected_for_fixed_examples(self):
        with pytest.raises(ValueError, match="no parameter overrides"):
            make_builtin_problem("ex1", mu_bar=0.3)


class TestSchemes:
    def test_tabulated_pairs(self):
        assert scheme_params("A") == ThetaScheme(0.0, 1.0, "A")
        assert scheme_params("B") == ThetaScheme(0.5, 1.0, "B")
        assert scheme_params("C") == ThetaScheme(1.0, 1.0, "C")
        assert scheme_params("D") == ThetaScheme(0.5, 0.5, "D")

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError, match="unknown scheme"):
            scheme_params("E")

    def test_custom_pair(self):
        s = scheme_params((0.3, 0.8))
        assert s.label == "custom"
        assert s.theta1 == 0.3 and s.theta2 == 0.8

    def test_zero_theta2_rejected(self):
        with pytest.raises(ValueError, match="theta2"):
            scheme_params((0.3, 0.0))


class TestDomain:
    def test_ex1_domain(self):
        dom = compute_domain(make_builtin_problem("ex1"), 10.0)
        assert dom.kappa1 == pytest.approx(0.0)
        assert dom.kappa2 == pytest.approx(1.0)
        assert (dom.lower, dom.upper) == (pytest.approx(-10.0), pytest.approx(10.0))

    def test_ex2_domain_values(self):
        dom = compute_domain(make_builtin_problem("ex2_call"), 10.0)
        assert dom.kappa1 == pytest.approx(np.log(100.0) + (0.2 - 0.03125) * 0.1)
        assert dom.kappa1 == pytest.approx(4.6220452, abs=5e-8)
        assert dom.kappa2 == pytest.approx(0.00625)
        assert (dom.upper - dom.lower) / 2 == pytest.approx(0.7905694, abs=5e-8)

    def test_endpoints_symmetric_about_center(self):
        for name in ("ex1", "ex2_call", "ex3_spread", "ex4"):
            dom = compute_domain(make_builtin_problem(name), 10.0)
            assert dom.upper - dom.kappa1 == pytest.approx(dom.kappa1 - dom.lower, rel=1e-14)

    def test_nonpositive_L_rejected(self):
        with pytest.raises(ValueError, match="L must be positive"):
            compute_domain(make_builtin_problem("ex1"), 0.0)

    def test_degenerate_diffusion_rejected(self):
        prob = problem_from_spec(
            {
                "drift": 0.0,
                "diffusion": "0.0 * x",
                "driver": 0.0,
                "terminal": "x",
                "terminal_dx": 1.0,
                "x0": 0.0,
                "horizon_T": 1.0,
            }
        )
        with pytest.raises(ValueError, match="degenerate domain"):
            compute_domain(prob, 10.0)


class TestProblemSpec:
    def test_builtin_shortcut(self):
        assert problem_from_spec("ex1").name == "ex1"
        assert problem_from_spec({"builtin": "ex2_call", "mu_bar": 0.4}).drift(0, 0) == pytest.approx(0.36875)

    def test_inline_spec_evaluates_expressions(self):
        prob = problem_from_spec(
            {
                "drift": "0.1 * x",
                "diffusion": 0.3,
                "driver": "-0.05 * y + 0.2 * z",
                "terminal": "maximum(exp(x) - 1.0, 0.0)",
                "terminal_dx": "where(x >= 0.0, exp(x), 0.0)",
                "x0": 0.2,
                "horizon_T": 2.0,
                "lipschitz_y": 0.05,
                "terminal_kinks": [0.0],
                "name": "inline",
            }
        )
        assert prob.drift(0.0, 2.0) == pytest.approx(0.2)
        assert prob.diffusion(0.0, 123.0) == 0.3
        assert prob.driver(0.0, 0.0, 2.0, 1.0) == pytest.approx(-0.1 + 0.2)
        assert prob.terminal(1.0) == pytest.approx(np.e - 1.0)
        assert prob.terminal_kinks == (0.0,)

    def test_missing_fields_rejected(self):
        with pytest.raises(ValueError, match="missing fields"):
            problem_from_spec({"drift": 0.0})

    def test_unknown_fields_rejected(self):
        with pytest.raises(ValueError, match="unknown problem fields"):
            problem_from_spec(
                {
                    "drift": 0.0,
                    "diffusion": 1.0,
                    "driver": 0.0,
                    "terminal": "x",
                    "terminal_dx": 1.0,
                    "x0": 0.0,
                    "horizon_T": 1.0,
                    "volatility": 0.2,
                }
            )

    def test_unsafe_expression_rejected(self):
        with pytest.raises(ValueError, match="unknown name"):
            problem_from_spec(
                {
                    "drift": "__import__('os').system('true')",
                    "diffusion": 1.0,
                    "driver": 0.0,
                    "terminal": "x",
                    "terminal_dx": 1.0,
                    "x0": 0.0,
                    "horizon_T": 1.0,
                }
            )

    def test_exact_pair_required_together(self):
        with pytest.raises(ValueError, match="together"):
            problem_from_spec(
                {
                    "drift": 0.0,
                    "diffusion": 1.0,
                    "driver": 0.0,
                    "terminal": "sin(x)",
                    "terminal_dx": "cos(x)",
                    "x0": 0.0,
                    "horizon_T": 1.0,
                    "exact_y": "sin(x)",
                }
            )

    def test_inconsistent_exact_terminal_rejected(self):
        with pytest.raises(ValueError, match="does not match terminal"):
            problem_from_spec(
                {
                    "drift": 0.0,
                    "diffusion": 1.0,
                    "driver": 0.0,
                    "terminal": "sin(x)",
                    "terminal_dx": "cos(x)",
                    "x0": 0.0,
                    "horizon_T": 1.0,
                    "exact_y": "cos(x + t)",
                    "exact_z": "sin(x + t)",
                }
            )
