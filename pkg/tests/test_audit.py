"""Tests for the exact privacy audits."""

import pytest
import numpy as np
from pathlib import Path

# Add the project root to path for testing
import sys
sys.path.append(str(Path(__file__).parent.parent))

from src.evaluation.audit import (
    MUTATIONS, audit_privacy, default_audit_matrix, gaussian_delta_on_grid, neighbor_grid
)
from src.exceptions import PreconditionError, UnsupportedMechanismError
from src.mechanisms.calibration import gaussian_delta_for_sigma
from src.models import AuditCase, DataVector, MechanismConfig, MechanismFamily, PrivacyScope


class TestNeighborGrid:
    """Test cases for grid neighbors."""

    def test_neighbors_stay_in_domain(self):
        """Test that zero shifts and out-of-bound neighbors are skipped."""
        u = DataVector(values=[0.5, 0.0], bound=1.0)
        neighbors = neighbor_grid(u, beta=1.0, points=5)
        assert len(neighbors) == 7
        assert all(shift != 0 for _, shift, _ in neighbors)
        assert all(np.all(np.abs(values) <= 1.0) for _, _, values in neighbors)

    def test_selected_coordinates(self):
        """Test that only the requested coordinates are perturbed."""
        u = DataVector(values=[0.1, 0.2, 0.3], bound=2.0)
        neighbors = neighbor_grid(u, beta=1.0, points=3, coordinates=[2])
        assert [coordinate for coordinate, _, _ in neighbors] == [2, 2]


class TestAuditPrivacy:
    """Test cases for audit_privacy."""

    def test_default_matrix_passes(self):
        """Test that every shipped mechanism passes its own claim."""
        reports = [audit_privacy(case) for case in default_audit_matrix(seed=0, epsilon=1.0)]
        failed = [(r.mechanism, r.scope.value, r.margin, r.notes) for r in reports if not r.passed]
        assert failed == []
        assert all(r.n_neighbors > 0 for r in reports)

    def test_halved_flip_fails(self):
        """Test that halving the flip probability is detected for sign mechanisms."""
        cases = default_audit_matrix(seed=0, epsilon=1.0, mutation="halved_flip")
        assert cases and all(case.mechanism.family == MechanismFamily.SIGN for case in cases)
        reports = [audit_privacy(case) for case in cases]
        assert not any(report.passed for report in reports)
        assert all(report.mutation == "halved_flip" for report in reports)

    def test_dropped_coin_fails(self):
        """Test that a deterministic empty-bin output is detected."""
        cases = default_audit_matrix(seed=0, epsilon=1.0, mutation="dropped_coin")
        assert len(cases) == 2
        for report in map(audit_privacy, cases):
            assert not report.passed
            assert report.max_log_ratio == float("inf")

    def test_unknown_mutation(self):
        """Test that an unknown mutation name is refused."""
        case = default_audit_matrix()[0].model_copy(update={"mutation": "doubled_eps"})
        with pytest.raises(PreconditionError, match="unknown mutation"):
            audit_privacy(case)

    def test_mutation_on_noise_mechanism(self):
        """Test that flip mutations do not apply to additive noise."""
        u = DataVector(values=[0.1, -0.2, 0.3, 0.0], bound=2.0)
        case = AuditCase(u=u, mechanism=MechanismConfig(variant="rp_g_opt", epsilon=1.0, k=4),
                         scope=PrivacyScope.DP_COMPOSED, mutation=MUTATIONS[0])
        with pytest.raises(UnsupportedMechanismError):
            audit_privacy(case)

    def test_baseline_not_auditable(self):
        """Test that non-private baselines are refused."""
        u = DataVector(values=[0.1, 0.2], bound=2.0)
        case = AuditCase(u=u, mechanism=MechanismConfig(family="baseline", variant="signrp_plain",
                                                        epsilon=1.0, k=4))
        with pytest.raises(UnsupportedMechanismError, match="not private"):
            audit_privacy(case)

    def test_idp_needs_idp_scope(self):
        """Test that iDP mechanisms are only audited against an iDP claim."""
        u = DataVector(values=[0.5, -0.4, 0.3, 0.2], bound=2.0)
        case = AuditCase(u=u, mechanism=MechanismConfig(family="idp", variant="rr", epsilon=1.0, k=8),
                         scope=PrivacyScope.DP_PER_BIT)
        with pytest.raises(PreconditionError, match="scope idp"):
            audit_privacy(case)

    def test_composed_and_per_bit_claims(self):
        """Test the composed eps and per-bit eps/k claims of RR signs."""
        u = DataVector(values=[0.2, -0.1, 0.25, 0.05], bound=2.0)
        cfg = MechanismConfig(family="sign", variant="rr", epsilon=1.0, delta=0.0, k=8)
        composed = audit_privacy(AuditCase(u=u, mechanism=cfg, scope=PrivacyScope.DP_COMPOSED))
        assert composed.passed
        assert composed.claimed_epsilon == pytest.approx(1.0)
        per_bit = audit_privacy(AuditCase(u=u, mechanism=cfg, scope=PrivacyScope.DP_PER_BIT))
        assert per_bit.claimed_epsilon == pytest.approx(1.0 / 8)
        assert per_bit.max_log_ratio <= per_bit.claimed_epsilon + 1e-9


class TestGaussianGrid:
    """Test cases for the numeric hockey-stick cross-check."""

    @pytest.mark.parametrize("shift,sigma,eps", [(1.0, 1.0, 1.0), (0.5, 2.0, 0.5), (2.0, 1.5, 2.0)])
    def test_grid_matches_closed_form(self, shift, sigma, eps):
        """Test that trapezoid integration agrees with the exact delta."""
        assert gaussian_delta_on_grid(shift, sigma, eps) == pytest.approx(
            gaussian_delta_for_sigma(shift, eps, sigma), abs=1e-5)


if __name__ == "__main__":
    pytest.main([__file__])
