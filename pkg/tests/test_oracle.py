"""Tests for the Monte Carlo oracle against closed forms."""

import math
import pytest
from pathlib import Path

# Add the project root to path for testing
import sys
sys.path.append(str(Path(__file__).parent.parent))

from src.analysis.analytic import (
    abs_exceed_prob, binomial_tail, chi_square_tail, conditional_abs_expectation, inner_product_variance,
    p_plus_gaussian, p_plus_rademacher
)
from src.evaluation.oracle import ORACLE_TARGETS, monte_carlo_oracle, unit_pair
from src.exceptions import PreconditionError


def _within(result, expected, z=5.0):
    return abs(result.estimate - expected) <= z * result.standard_error


class TestOracle:
    """Test cases for monte_carlo_oracle."""

    def test_collision_probability(self):
        """Test Pr(sign collision) = 1 - theta / pi."""
        result = monte_carlo_oracle("collision", 20000, {"theta": math.pi / 3}, seed=1)
        assert _within(result, 2.0 / 3.0)
        assert result.n == 20000
        assert result.params["theta"] == pytest.approx(math.pi / 3)

    def test_p_plus_gaussian(self):
        """Test the sampled P+ against the numerical integral."""
        result = monte_carlo_oracle("p_plus_gaussian", 20000, {"r": 0.3, "p": 50}, seed=2)
        assert _within(result, p_plus_gaussian(0.3, 50))

    def test_bivariate_quantities(self):
        """Test Pr(|X| > |Y|) and E[|X| given |X| > |Y|]."""
        exceed = monte_carlo_oracle("abs_exceed", 20000, {"r": 2.0, "rho": 0.3}, seed=3)
        assert _within(exceed, abs_exceed_prob(2.0, 0.3))
        conditional = monte_carlo_oracle("conditional_expectation", 40000, seed=4)
        assert _within(conditional, conditional_abs_expectation(1.0, 0.0, 1.0))

    def test_inner_product_unbiased(self):
        """Test that the sampled inner product averages to rho."""
        result = monte_carlo_oracle("inner_product", 5000, {"p": 16, "k": 8, "rho": 0.5}, seed=5)
        assert _within(result, 0.5)

    def test_tail_bounds_hold(self):
        """Test that sampled exceedance frequencies respect the tail bounds."""
        chi = monte_carlo_oracle("chi_square_tail", 20000, {"dof": 10, "t": 2.0}, seed=6)
        assert chi.estimate <= chi_square_tail(10, 2.0).probability + 3 * chi.standard_error
        binomial = monte_carlo_oracle("binomial_tail", 20000, seed=7)
        assert binomial.estimate <= binomial_tail(100, 0.1, 0.5).probability + 3 * binomial.standard_error

    def test_reproducible(self):
        """Test that equal seeds give equal estimates."""
        first = monte_carlo_oracle("collision", 5000, seed=9, batch_size=1000)
        second = monte_carlo_oracle("collision", 5000, seed=9, batch_size=1000)
        assert first.estimate == second.estimate

    def test_unknown_target(self):
        """Test that an unknown target name lists close matches."""
        with pytest.raises(PreconditionError, match="did you mean"):
            monte_carlo_oracle("colision", 1000)

    def test_too_few_samples(self):
        """Test the minimum sample count."""
        with pytest.raises(PreconditionError, match="samples"):
            monte_carlo_oracle("collision", 10)

    def test_targets_registered(self):
        """Test that every target carries defaults."""
        assert {"collision", "p_plus_gaussian", "n_plus_coverage", "oporp_rp_variance_ratio"} <= set(ORACLE_TARGETS)


@pytest.mark.slow
class TestOracleAcceptance:
    """Acceptance-scale checks of variances and coverage."""

    def test_inner_product_variance(self):
        """Test the Gaussian RP variance (1 + rho^2) / k for unit vectors."""
        params = {"projection": "gaussian", "p": 32, "k": 8, "rho": 0.5}
        result = monte_carlo_oracle("inner_product_variance", 100000, params, seed=10, batch_size=5000)
        assert _within(result, (1.0 + 0.25) / 8)

    def test_oporp_variance_ratio(self):
        """Test that OPORP reduces the Rademacher RP variance by (p - k) / (p - 1)."""
        result = monte_carlo_oracle("oporp_rp_variance_ratio", 100000, seed=11)
        assert _within(result, 48.0 / 63.0)

    def test_sensitivity_coverage(self):
        """Test that the l2 sensitivity bound fails at most delta_share of the time."""
        result = monte_carlo_oracle("sensitivity_coverage", 20000, {"delta_share": 0.05}, seed=12)
        assert result.estimate <= 0.05 + 3 * result.standard_error

    @pytest.mark.parametrize("kind", ["raw", "rp", "oporp"])
    @pytest.mark.parametrize("sigma", [0.1, 1.0])
    def test_noisy_inner_product_variance(self, kind, sigma):
        """Test noisy estimator variances against the closed form at p=64, k=16."""
        params = {"kind": kind, "sigma": sigma, "p": 64, "k": 16, "rho": 0.5}
        result = monte_carlo_oracle("inner_product_variance", 100000, params, seed=13)
        u, v = unit_pair(result.params)
        assert result.estimate == pytest.approx(inner_product_variance(kind, u, v, 16, sigma), rel=0.05)

    def test_n_plus_coverage(self):
        """Test that the N+ bound fails in at most delta of Gaussian draws at p=256, k=128, ||u||=10."""
        n = 10000
        result = monte_carlo_oracle("n_plus_coverage", n, seed=14, batch_size=1000)
        assert result.params["norm"] == 10.0 and result.params["delta"] == 0.01
        assert result.estimate <= 0.01 + 3.0 * math.sqrt(0.01 * 0.99 / n)

    @pytest.mark.parametrize("r", [0.1, 0.5, 1.0])
    def test_p_plus_rademacher(self, r):
        """Test the CLT approximation against sampled Rademacher projections at p=1000."""
        result = monte_carlo_oracle("p_plus_rademacher", 400000, {"r": r, "p": 1000}, seed=15)
        assert abs(result.estimate - p_plus_rademacher(r, 1000).value) <= 0.005


if __name__ == "__main__":
    pytest.main([__file__])
