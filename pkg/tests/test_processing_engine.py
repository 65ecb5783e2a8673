"""Tests for the dataset privatization engine."""

import pytest
import numpy as np
from pathlib import Path

# Add the project root to path for testing
import sys
sys.path.append(str(Path(__file__).parent.parent))

from src.core.processing_engine import PlainProjection, PrivatizationEngine, build_mechanism, sketch_matrix
from src.core.randomness import RngStream
from src.exceptions import DataValidationError
from src.mechanisms.dp_rp import DpRpMechanism
from src.mechanisms.dp_sign import SignOPORPMechanism, SignRPRandomizedResponse, SignRPSmooth
from src.mechanisms.idp_sign import IdpSignRPGaussian, IdpSignRPRandomizedResponse
from src.models import Dataset, MechanismConfig, ProjectionKind


class TestBuildMechanism:
    """Test cases for mapping configs to mechanisms."""

    def _build(self, **fields):
        cfg = MechanismConfig(**fields)
        engine = PrivatizationEngine(cfg, seed=0, jobs=1)
        return build_mechanism(cfg, engine.projection_spec(32))

    def test_families(self):
        """Test that each family and variant builds the matching mechanism."""
        assert isinstance(self._build(family="dp_rp", variant="rp_g_opt", epsilon=1.0, k=8), DpRpMechanism)
        assert isinstance(self._build(family="sign", variant="rr", epsilon=1.0, k=8), SignRPRandomizedResponse)
        assert isinstance(self._build(family="sign", variant="rr_smooth", epsilon=1.0, k=8), SignRPSmooth)
        oporp = self._build(family="sign", variant="oporp_rr_smooth", epsilon=1.0, k=8)
        assert isinstance(oporp, SignOPORPMechanism) and oporp.smooth
        assert isinstance(self._build(family="idp", variant="g", epsilon=1.0, delta=1e-6, k=8), IdpSignRPGaussian)
        assert isinstance(self._build(family="idp", variant="rr", epsilon=1.0, k=8), IdpSignRPRandomizedResponse)
        assert isinstance(self._build(family="baseline", variant="signrp_plain", epsilon=1.0, k=8), PlainProjection)

    def test_pure_variants_default_delta(self):
        """Test that pure variants get delta = 0 when none is given."""
        assert MechanismConfig(family="sign", variant="rr_smooth", epsilon=1.0).delta == 0.0
        assert MechanismConfig(family="dp_rp", variant="rp_l", epsilon=1.0).delta == 0.0

    def test_unknown_variant_suggests(self):
        """Test that an unknown variant lists close matches."""
        with pytest.raises(ValueError, match="did you mean"):
            MechanismConfig(family="dp_rp", variant="rp_gopt", epsilon=1.0)

    def test_projection_spec_from_seed(self):
        """Test that the public projection seed is derived from the run seed."""
        engine = PrivatizationEngine(MechanismConfig(variant="rp_g_opt", epsilon=1.0, k=8), seed=42, jobs=1)
        spec = engine.projection_spec(16)
        assert spec.seed == RngStream(seed=42).child_seed("projection")
        assert spec.kind == ProjectionKind.GAUSSIAN
        raw = PrivatizationEngine(MechanismConfig(variant="raw_g_opt", epsilon=1.0), seed=42, jobs=1)
        assert raw.projection_spec(16) is None


class TestPrivatizationEngine:
    """Test cases for PrivatizationEngine.privatize_dataset."""

    def setup_method(self):
        """Set up test fixtures."""
        rng = np.random.default_rng(0)
        self.dataset = Dataset.from_matrix(rng.uniform(-1.0, 1.0, size=(6, 16)), bound=1.0)
        self.cfg = MechanismConfig(family="sign", variant="rr", epsilon=8.0, k=32)

    def test_privatize_dataset(self):
        """Test a successful run over every row."""
        result = PrivatizationEngine(self.cfg, seed=3, jobs=1).privatize_dataset(self.dataset)
        assert result.success
        assert result.failed_rows == []
        assert result.payload_matrix().shape == (6, 32)
        assert [s.provenance.row_id for s in result.sketches] == self.dataset.ids()
        assert result.processing_time >= 0

    def test_independent_of_workers(self):
        """Test that the output does not depend on the number of workers."""
        single = PrivatizationEngine(self.cfg, seed=3, jobs=1).privatize_dataset(self.dataset)
        pooled = PrivatizationEngine(self.cfg, seed=3, jobs=2).privatize_dataset(self.dataset)
        np.testing.assert_array_equal(single.payload_matrix(), pooled.payload_matrix())

    def test_seed_changes_output(self):
        """Test that a different seed gives a different sketch matrix."""
        first = PrivatizationEngine(self.cfg, seed=3, jobs=1).privatize_dataset(self.dataset)
        second = PrivatizationEngine(self.cfg, seed=4, jobs=1).privatize_dataset(self.dataset)
        assert not np.array_equal(first.payload_matrix(), second.payload_matrix())

    def test_failed_rows_reported(self):
        """Test that rows below the norm lower bound fail individually."""
        dataset = Dataset.from_matrix(np.vstack([np.full(16, 0.75), np.full(16, 0.1)]), bound=1.0)
        cfg = MechanismConfig(family="sign", variant="rr", epsilon=1.0, delta=1e-6, k=16, norm_lower_bound=2.0)
        result = PrivatizationEngine(cfg, seed=0, jobs=1).privatize_dataset(dataset)
        assert not result.success
        assert result.failed_rows == [1]
        assert len(result.sketches) == 1
        assert result.error_message == "1 row(s) failed"

    def test_invalid_dataset(self):
        """Test that out-of-bound rows stop the run before privatization."""
        dataset = Dataset.from_matrix(np.array([[0.5, 2.0], [0.1, 0.2]]), bound=1.0)
        cfg = MechanismConfig(variant="rp_g_opt", epsilon=1.0, k=4)
        result = PrivatizationEngine(cfg, seed=0, jobs=1).privatize_dataset(dataset)
        assert not result.success
        assert "out of bound" in result.error_message
        assert result.sketches == []

    def test_sketch_matrix_raises_on_failure(self):
        """Test that sketch_matrix raises on the first failed row."""
        dataset = Dataset.from_matrix(np.vstack([np.full(16, 0.75), np.full(16, 0.1)]), bound=1.0)
        cfg = MechanismConfig(family="sign", variant="rr", epsilon=1.0, delta=1e-6, k=16, norm_lower_bound=2.0)
        engine = PrivatizationEngine(cfg, seed=0, jobs=1)
        mechanism = build_mechanism(cfg, engine.projection_spec(16))
        with pytest.raises(DataValidationError, match="row 1"):
            sketch_matrix(mechanism, cfg, dataset, seed=0)


if __name__ == "__main__":
    pytest.main([__file__])
