"""Tests for the randomized-response sign mechanisms."""

import math
import pytest
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from pathlib import Path

# Add the project root to path for testing
import sys
sys.path.append(str(Path(__file__).parent.parent))

from src.core.randomness import RngStream
from src.exceptions import DataValidationError, PreconditionError, UnsupportedMechanismError
from src.mechanisms.dp_sign import (
    SignOPORPMechanism, SignRPRandomizedResponse, SignRPSmooth, apply_flip_plan, fallback_flip_probability,
    keep_probability, output_probabilities, signoporp, signrp_rr, smooth_multipliers
)
from src.models import DataVector, FlipDerivation, FlipPlan, PrivacyBudget, ProjectionKind, ProjectionSpec


class TestFlipPlans:
    """Test cases for keep probabilities and flip plans."""

    def test_keep_probability(self):
        """Test e^eps / (e^eps + 1) with the exact-bit limit."""
        assert keep_probability(0.0) == pytest.approx(0.5)
        assert keep_probability(math.log(3.0)) == pytest.approx(0.75)
        assert keep_probability(np.inf) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.001, 30.0))
    def test_keep_probability_above_one_half(self, eps_prime):
        """Test that any positive eps' keeps the true sign more often than not."""
        kept = float(keep_probability(eps_prime))
        assert 0.5 < kept <= 1.0

    def test_smooth_multipliers(self):
        """Test L_j = max(ceil(|x_j| / (beta colmax_j)), 1)."""
        lj = smooth_multipliers(np.array([0.1, 2.5, -3.0]), np.ones(3), 1.0)
        np.testing.assert_array_equal(lj, [1, 3, 3])
        lj = smooth_multipliers(np.array([0.1, 2.5, -3.0]), np.ones(3), 0.5)
        np.testing.assert_array_equal(lj, [1, 5, 6])

    def test_output_probabilities(self):
        """Test the exact Pr(+1) of each bit, including fair coins."""
        plan = FlipPlan(keep_probabilities=np.array([0.75, 0.75, 0.75]), eps_prime=np.full(3, math.log(3.0)),
                        derivation=FlipDerivation.RR, coin_mask=np.array([False, False, True]))
        probabilities = output_probabilities(np.array([1, -1, 1]), plan)
        np.testing.assert_allclose(probabilities, [0.75, 0.25, 0.5])

    def test_plan_rejects_flip_majority(self):
        """Test that keep probabilities at or below 1/2 are refused."""
        with pytest.raises(ValueError):
            FlipPlan(keep_probabilities=np.array([0.4]), eps_prime=np.array([0.1]),
                     derivation=FlipDerivation.RR, coin_mask=np.array([False]))

    def test_apply_flip_plan_rate(self):
        """Test the empirical flip rate against the plan."""
        k = 20000
        plan = FlipPlan(keep_probabilities=np.full(k, 0.8), eps_prime=np.full(k, math.log(4.0)),
                        derivation=FlipDerivation.RR, coin_mask=np.zeros(k, dtype=bool))
        signs = np.ones(k, dtype=np.int8)
        noisy = apply_flip_plan(signs, plan, np.random.default_rng(0))
        assert np.mean(noisy != signs) == pytest.approx(0.2, abs=0.015)

    def test_fallback_flip_probability(self):
        """Test 1 / (e^(eps/k) + 1)."""
        assert fallback_flip_probability(1.0, 1) == pytest.approx(1.0 / (math.e + 1.0))
        assert fallback_flip_probability(4.0, 4) == pytest.approx(1.0 / (math.e + 1.0))


class TestSignRPRandomizedResponse:
    """Test cases for DP-SignRP-RR."""

    def setup_method(self):
        """Set up test fixtures."""
        self.spec = ProjectionSpec(kind=ProjectionKind.GAUSSIAN, p=256, k=64, seed=11)
        self.u = DataVector(values=np.full(256, 0.7), bound=1.0)

    def test_pure_mode_below_beta(self):
        """Test that m < beta spends eps/k per bit over all k bits."""
        mechanism = SignRPRandomizedResponse(self.spec, PrivacyBudget(epsilon=2.0), norm_lower_bound=0.0)
        assert mechanism.n_plus == 64
        assert mechanism.capped
        assert mechanism.per_bit_epsilon == pytest.approx(2.0 / 64)
        assert mechanism.composed_epsilon == pytest.approx(2.0)

    def test_bounded_mode(self):
        """Test that m >= beta uses the N+ bound and eps' = eps / N+."""
        budget = PrivacyBudget(epsilon=1.0, delta=1e-6)
        mechanism = SignRPRandomizedResponse(self.spec, budget, norm_lower_bound=10.0)
        assert 1 <= mechanism.n_plus <= 64
        assert mechanism.per_bit_epsilon == pytest.approx(1.0 / mechanism.n_plus)
        assert mechanism.composed_epsilon == pytest.approx(1.0)

    def test_bounded_mode_needs_delta(self):
        """Test that m >= beta with delta = 0 is refused."""
        with pytest.raises(PreconditionError, match="delta > 0"):
            SignRPRandomizedResponse(self.spec, PrivacyBudget(epsilon=1.0), norm_lower_bound=10.0)

    def test_bounded_mode_needs_known_kind(self):
        """Test that only Gaussian and Rademacher projections have an N+ bound."""
        uniform = ProjectionSpec(kind=ProjectionKind.UNIFORM, p=256, k=64)
        with pytest.raises(UnsupportedMechanismError):
            SignRPRandomizedResponse(uniform, PrivacyBudget(epsilon=1.0, delta=1e-6), norm_lower_bound=10.0)

    def test_oporp_refused(self):
        """Test that the dense mechanism refuses an OPORP spec."""
        spec = ProjectionSpec(kind=ProjectionKind.OPORP, p=256, k=64)
        with pytest.raises(UnsupportedMechanismError):
            SignRPRandomizedResponse(spec, PrivacyBudget(epsilon=1.0))

    def test_row_below_norm_lower_bound(self):
        """Test that a row with ||u|| < m is refused."""
        mechanism = SignRPRandomizedResponse(self.spec, PrivacyBudget(epsilon=1.0, delta=1e-6),
                                             norm_lower_bound=20.0)
        with pytest.raises(PreconditionError, match="below the declared lower bound"):
            mechanism.privatize(self.u, 0)

    def test_flip_rate_and_provenance(self):
        """Test the observed flip rate and the recorded eps'."""
        spec = ProjectionSpec(kind=ProjectionKind.GAUSSIAN, p=16, k=4000, seed=2)
        u = DataVector(values=np.linspace(-0.9, 0.8, 16), bound=1.0)
        mechanism = SignRPRandomizedResponse(spec, PrivacyBudget(epsilon=4000.0))
        exact, plan = mechanism.flip_plan(u.values)
        sketch = mechanism.privatize(u, RngStream(seed=3).derive("noise"), row_id="r0")

        assert sketch.is_sign
        assert mechanism.expected_flip_fraction(u.values) == pytest.approx(1.0 / (math.e + 1.0))
        assert np.mean(sketch.payload != exact) == pytest.approx(1.0 / (math.e + 1.0), abs=0.03)
        assert sketch.provenance.mechanism == "sign:rr"
        assert sketch.provenance.eps_prime == pytest.approx(1.0)
        assert sketch.provenance.n_plus == 4000
        assert sketch.provenance.seed == 3

    def test_reproducible(self):
        """Test that equal streams give equal sign sketches."""
        budget = PrivacyBudget(epsilon=1.0)
        first = signrp_rr(self.spec, self.u, budget, 0.0, RngStream(seed=5).derive("row"))
        second = signrp_rr(self.spec, self.u, budget, 0.0, RngStream(seed=5).derive("row"))
        np.testing.assert_array_equal(first.payload, second.payload)

    def test_dimension_mismatch(self):
        """Test that a wrong input length raises DataValidationError."""
        mechanism = SignRPRandomizedResponse(self.spec, PrivacyBudget(epsilon=1.0))
        with pytest.raises(DataValidationError):
            mechanism.privatize(DataVector(values=[0.5, 0.5]), 0)


class TestSignRPSmooth:
    """Test cases for DP-SignRP-RR-smooth."""

    def setup_method(self):
        """Set up test fixtures."""
        self.spec = ProjectionSpec(kind=ProjectionKind.GAUSSIAN, p=32, k=16, seed=6)
        self.u = DataVector(values=np.linspace(0.1, 1.0, 32), bound=1.0)

    def test_needs_pure_budget(self):
        """Test that delta > 0 is refused."""
        with pytest.raises(PreconditionError, match="delta=0"):
            SignRPSmooth(self.spec, PrivacyBudget(epsilon=1.0, delta=1e-6))

    def test_needs_dense_projection(self):
        """Test that an OPORP spec is refused."""
        with pytest.raises(UnsupportedMechanismError):
            SignRPSmooth(ProjectionSpec(kind=ProjectionKind.OPORP, p=32, k=16), PrivacyBudget(epsilon=1.0))

    def test_per_bit_epsilon_from_multipliers(self):
        """Test eps'_j = L_j eps / k with L_j >= 1."""
        mechanism = SignRPSmooth(self.spec, PrivacyBudget(epsilon=2.0))
        _, plan = mechanism.flip_plan(self.u.values)
        np.testing.assert_allclose(plan.eps_prime, plan.lj * 2.0 / 16)
        assert np.all(plan.lj >= 1)
        assert plan.derivation == FlipDerivation.SMOOTH

    def test_provenance_histogram(self):
        """Test that provenance carries the L_j histogram instead of a single eps'."""
        sketch = SignRPSmooth(self.spec, PrivacyBudget(epsilon=2.0)).privatize(self.u, 1)
        assert sketch.provenance.eps_prime is None
        assert sum(sketch.provenance.lj_histogram.values()) == 16
        assert sketch.provenance.mechanism == "sign:rr_smooth"

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, 50.0), st.floats(0.1, 40.0), st.integers(0, 2**32 - 1))
    def test_smooth_never_flips_more_than_fallback(self, scale, epsilon, seed):
        """Test that smooth flip probabilities are at most 1/(e^(eps/k)+1), equal iff L_j = 1."""
        mechanism = SignRPSmooth(self.spec, PrivacyBudget(epsilon=epsilon))
        values = scale * np.random.default_rng(seed).uniform(-1.0, 1.0, size=32)
        _, plan = mechanism.flip_plan(values)
        fallback = fallback_flip_probability(epsilon, 16)
        flips = plan.flip_probabilities
        single = plan.lj == 1
        np.testing.assert_allclose(flips[single], fallback, rtol=1e-9)
        assert np.all(flips[~single] < fallback)


class TestSignOPORP:
    """Test cases for DP-SignOPORP."""

    def setup_method(self):
        """Set up test fixtures."""
        self.spec = ProjectionSpec(kind=ProjectionKind.OPORP, p=4, k=4, seed=8)
        self.u = DataVector(values=[0.0, 0.2, -0.25, 0.15], bound=1.0)

    def test_empty_bin_is_fair_coin(self):
        """Test that a projection equal to zero is emitted as a fair coin."""
        mechanism = SignOPORPMechanism(self.spec, PrivacyBudget(epsilon=1.0))
        probabilities = mechanism.output_probabilities(self.u.values)
        zero_bin = mechanism.bins_of(0)[0]
        assert probabilities[zero_bin] == 0.5
        others = np.delete(probabilities, zero_bin)
        assert np.all(others != 0.5)

    def test_repetitions_split_budget(self):
        """Test eps/t per run and one bin per run for each coordinate."""
        spec = ProjectionSpec(kind=ProjectionKind.OPORP, p=8, k=4, seed=8)
        mechanism = SignOPORPMechanism(spec, PrivacyBudget(epsilon=3.0), repetitions=2)
        assert mechanism.per_bit_epsilon == pytest.approx(1.5)
        assert len(mechanism.run_specs) == 2
        for coordinate in range(8):
            first, second = mechanism.bins_of(coordinate)
            assert 0 <= first < 2 <= second < 4

    def test_repetitions_must_divide_k(self):
        """Test that t must divide k."""
        with pytest.raises(PreconditionError, match="must divide"):
            SignOPORPMechanism(self.spec, PrivacyBudget(epsilon=1.0), repetitions=3)

    def test_requirements(self):
        """Test that a dense spec or delta > 0 is refused."""
        with pytest.raises(UnsupportedMechanismError):
            SignOPORPMechanism(ProjectionSpec(kind=ProjectionKind.GAUSSIAN, p=4, k=4), PrivacyBudget(epsilon=1.0))
        with pytest.raises(PreconditionError):
            SignOPORPMechanism(self.spec, PrivacyBudget(epsilon=1.0, delta=1e-6))

    def test_smooth_variant(self):
        """Test the smooth OPORP multipliers with unit column maxima."""
        sketch = signoporp(self.spec, self.u, PrivacyBudget(epsilon=1.0, beta=0.1), variant="rr_smooth", rng=0)
        assert sketch.provenance.mechanism == "sign:oporp_rr_smooth"
        assert sketch.provenance.lj_histogram is not None
        assert set(sketch.provenance.lj_histogram) <= {1, 2, 3}

    def test_unknown_variant(self):
        """Test that an unknown variant name is refused."""
        with pytest.raises(UnsupportedMechanismError, match="unknown DP-SignOPORP variant"):
            signoporp(self.spec, self.u, PrivacyBudget(epsilon=1.0), variant="g")


if __name__ == "__main__":
    pytest.main([__file__])
