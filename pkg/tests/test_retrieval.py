"""Tests for synthetic data, the retrieval benchmark and k-NN classification."""

import pytest
import numpy as np
from pathlib import Path

# Add the project root to path for testing
import sys
sys.path.append(str(Path(__file__).parent.parent))

from src.evaluation.retrieval import (
    build_gold_standard, cosine_matrix, knn_classify, ordering_mechanisms, precision_recall_at, rank_database,
    run_classification,
    run_retrieval
)
from src.config import ORDERING_BENCHMARK, ORDERING_EPSILONS, ORDERING_SEEDS
from src.evaluation.synthetic import clustered_dataset, random_centers, retrieval_task, sphere_dataset
from src.exceptions import PreconditionError
from src.models import Dataset, MechanismConfig, RetrievalTask


class TestSyntheticData:
    """Test cases for synthetic datasets."""

    def test_sphere_norms_cycle(self):
        """Test that row norms cycle through the requested norms."""
        dataset = sphere_dataset(6, 8, [1.0, 5.0, 10.0], rng=0)
        norms = np.linalg.norm(dataset.matrix, axis=1)
        np.testing.assert_allclose(norms, [1.0, 5.0, 10.0, 1.0, 5.0, 10.0])
        assert dataset.bound >= np.max(np.abs(dataset.matrix))
        assert dataset.bound == float(int(dataset.bound))
        assert dataset.row_ids[0] == "row-0"

    def test_clustered_labels(self):
        """Test labels in range and rows of the requested norm."""
        dataset, labels = clustered_dataset(40, 8, 3, norm=2.0, rng=1)
        assert dataset.n == 40
        assert set(labels.tolist()) <= {0, 1, 2}
        np.testing.assert_allclose(np.linalg.norm(dataset.matrix, axis=1), 2.0)

    def test_clustered_norms_cycle(self):
        """Test that a norm sequence is cycled over the labeled rows."""
        dataset, _ = clustered_dataset(7, 8, 2, norm=[1.0, 4.0], rng=2)
        np.testing.assert_allclose(np.linalg.norm(dataset.matrix, axis=1), [1, 4, 1, 4, 1, 4, 1])

    def test_random_centers_unit(self):
        """Test that centers are unit vectors."""
        np.testing.assert_allclose(np.linalg.norm(random_centers(4, 5, rng=2), axis=1), 1.0)

    def test_retrieval_task_shares_bound(self):
        """Test that database and queries share one bound and the gold size is capped."""
        task = retrieval_task(30, 5, p=8, norms=[1.0, 3.0], rng=3, gold_size=100)
        assert task.database.bound == task.queries.bound
        assert task.gold_size == 30
        assert task.queries.row_ids[0] == "q-0"

    def test_reproducible(self):
        """Test that the same seed gives the same task."""
        first = retrieval_task(20, 4, p=8, rng=5)
        second = retrieval_task(20, 4, p=8, rng=5)
        np.testing.assert_array_equal(first.database.matrix, second.database.matrix)


class TestRetrievalMetrics:
    """Test cases for gold standards and precision/recall."""

    def test_precision_recall(self):
        """Test hits in the top R over R and over the gold size."""
        precision, recall = precision_recall_at([1, 2, 3], [2, 3, 4], R=2)
        assert precision == pytest.approx(0.5)
        assert recall == pytest.approx(1.0 / 3.0)

    def test_precision_recall_invalid(self):
        """Test that R < 1 and an empty gold set are refused."""
        with pytest.raises(PreconditionError):
            precision_recall_at([1], [1], R=0)
        with pytest.raises(PreconditionError):
            precision_recall_at([1], [], R=1)

    def test_gold_standard_ties_by_row_id(self):
        """Test exact-cosine gold neighbors with ties broken by row id."""
        database = Dataset.from_matrix(np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 0.0], [1.0, 1.0]]), bound=2.0,
                                       row_ids=["d", "c", "b", "a"])
        queries = Dataset.from_matrix(np.array([[1.0, 0.0]]), bound=2.0)
        task = build_gold_standard(RetrievalTask(database=database, queries=queries, gold_size=3))
        # Rows 1 and 2 tie at cosine 1; "b" sorts before "c"
        assert task.gold == [[2, 1, 3]]

    def test_cosine_matrix_zero_rows(self):
        """Test that zero rows get cosine 0."""
        similarities = cosine_matrix(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0], [2.0, 0.0]]))
        np.testing.assert_allclose(similarities, [[0.0, 1.0]])

    def test_rank_database_hamming(self):
        """Test that sign payloads are ranked by Hamming distance."""
        database = np.array([[1, 1, 1, 1], [1, -1, 1, 1], [-1, -1, -1, -1]])
        ranked = rank_database(np.array([[1, -1, 1, 1]]), database, is_sign=True, depth=3)
        np.testing.assert_array_equal(ranked, [[1, 0, 2]])

    def test_knn_classify(self):
        """Test majority voting and the metric check."""
        train = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]])
        labels = np.array([0, 0, 1, 1])
        predicted = knn_classify(train, labels, np.array([[1.0, 0.05], [0.05, 1.0]]), k=1)
        np.testing.assert_array_equal(predicted, [0, 1])
        with pytest.raises(PreconditionError):
            knn_classify(train, labels, train, metric="euclidean")


class TestBenchmarks:
    """Test cases for run_retrieval and run_classification."""

    def setup_method(self):
        """Set up test fixtures."""
        self.task = retrieval_task(80, 8, p=16, norms=[1.0], rng=0, gold_size=5).model_copy(
            update={"r_grid": [1, 5]})

    def test_run_retrieval_table(self):
        """Test the summary columns and that plain projections beat heavy noise."""
        plain = MechanismConfig(family="baseline", variant="rp_plain", epsilon=1.0, k=64)
        noisy = MechanismConfig(family="dp_rp", variant="rp_g_opt", epsilon=0.1, k=64)
        frame = run_retrieval(self.task, [plain, noisy], seeds=[0, 1], jobs=1)

        assert {"mechanism", "epsilon", "k", "R", "precision", "recall", "precision_std", "n_seeds"} <= set(
            frame.columns)
        assert len(frame) == 4
        assert frame["precision"].between(0.0, 1.0).all()
        assert (frame["n_seeds"] == 2).all()
        at_five = frame[frame["R"] == 5].set_index("mechanism")["precision"]
        assert at_five["baseline:rp_plain"] > at_five["dp_rp:rp_g_opt"]

    def test_per_seed_rows(self):
        """Test the per-seed table and the epsilon grid."""
        cfg = MechanismConfig(family="sign", variant="rr", epsilon=1.0, k=32)
        frame = run_retrieval(self.task, [cfg], seeds=[0, 1], epsilons=[1.0, 10.0], jobs=1, per_seed=True)
        assert len(frame) == 2 * 2 * 2
        assert frame["error"].isna().all()

    def test_failed_cells_recorded(self):
        """Test that a failing mechanism yields NaN rows with the error message."""
        cfg = MechanismConfig(family="sign", variant="rr", epsilon=1.0, delta=1e-6, k=32, norm_lower_bound=5.0)
        frame = run_retrieval(self.task, [cfg], seeds=[0], jobs=1, per_seed=True)
        assert frame["precision"].isna().all()
        assert frame["error"].str.contains("lower bound").all()

    def test_run_classification(self):
        """Test k-NN accuracy on well separated clusters."""
        centers = random_centers(3, 16, rng=4)
        train, train_labels = clustered_dataset(90, 16, 3, norm=1.0, rng=5, spread=0.3, centers=centers)
        test, test_labels = clustered_dataset(30, 16, 3, norm=1.0, rng=6, spread=0.3, centers=centers)
        cfg = MechanismConfig(family="baseline", variant="rp_plain", epsilon=1.0, k=32)
        frame = run_classification(train, train_labels, test, test_labels, [cfg], seeds=[0], jobs=1)
        assert len(frame) == 1
        assert frame.loc[0, "accuracy"] > 0.8

    def test_ordering_mechanisms(self):
        """Test that every ordering entry builds a valid config and unknown names are refused."""
        configs = ordering_mechanisms()
        assert [cfg.name for cfg in configs] == list(ORDERING_BENCHMARK)
        smooth = ordering_mechanisms(["sign:oporp_rr_smooth"], epsilon=5.0)[0]
        assert smooth.repetitions == 4 and smooth.k % smooth.repetitions == 0
        assert smooth.delta == 0.0
        with pytest.raises(PreconditionError):
            ordering_mechanisms(["sign:rr_unknown"])


@pytest.mark.slow
class TestBenchmarkOrderings:
    """Mechanism orderings on the default synthetic task over ten seeds."""

    def setup_method(self):
        """Set up test fixtures."""
        self.seeds = list(range(ORDERING_SEEDS))

    @staticmethod
    def _precision_at_10(frame):
        at_ten = frame[frame["R"] == 10]
        return {(row.mechanism, row.epsilon): row.precision for row in at_ten.itertuples()}

    def test_noise_and_sign_orderings(self):
        """Test the DP-RP and DP-SignOPORP orderings and monotonicity in epsilon."""
        names = ["dp_rp:rp_g", "dp_rp:rp_g_opt", "dp_rp:rp_g_opt_b", "sign:oporp_rr", "sign:oporp_rr_smooth"]
        frame = run_retrieval(retrieval_task(rng=0), ordering_mechanisms(names), self.seeds,
                              epsilons=ORDERING_EPSILONS, jobs=1)
        precision = self._precision_at_10(frame)

        for eps in ORDERING_EPSILONS:
            assert precision[("dp_rp:rp_g_opt", eps)] > precision[("dp_rp:rp_g", eps)]
            assert precision[("dp_rp:rp_g_opt_b", eps)] >= precision[("dp_rp:rp_g_opt", eps)]
        for eps in (5.0, 10.0):
            assert precision[("sign:oporp_rr_smooth", eps)] > precision[("sign:oporp_rr", eps)]
        for name in names:
            curve = [precision[(name, eps)] for eps in ORDERING_EPSILONS]
            assert curve == sorted(curve), name

    def test_idp_keeps_sign_utility(self):
        """Test that iDP-SignRP-RR at eps 0.5 keeps 90% of plain SignRP precision on norm-10 rows."""
        task = retrieval_task(rng=0, norms=[10.0])
        frame = run_retrieval(task, ordering_mechanisms(["idp:rr", "baseline:signrp_plain"]), self.seeds,
                              epsilons=[0.5], jobs=1)
        precision = self._precision_at_10(frame)
        assert precision[("idp:rr", 0.5)] >= 0.9 * precision[("baseline:signrp_plain", 0.5)]


if __name__ == "__main__":
    pytest.main([__file__])
