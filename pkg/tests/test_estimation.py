import numpy as np
import pytest
from sklearn.base import BaseEstimator

from helpers import EXAMPLE_MATRIX, decaying_matrix
from robord.data import SynthSpec, generate_synth, split_train_test, standardize
from robord.estimation import NoiseMatrixEstimator, SoftmaxClassifier, matrix_error
from robord.exceptions import (
    ConfigInvalid,
    DimensionMismatch,
    EmptyClassSupport,
    SingularEstimate,
)
from robord.noise import NoiseSpec, build_noise_matrix, corrupt_labels, invert_noise_matrix

APPENDIX_STYLE_ESTIMATE = np.array(
    [
        [0.80, 0.14, 0.03, 0.02],
        [0.10, 0.64, 0.15, 0.06],
        [0.03, 0.11, 0.63, 0.23],
        [0.02, 0.11, 0.18, 0.69],
    ]
)


class OracleHead(BaseEstimator):
    """Probability model that answers with a fixed row per true class."""

    def __init__(self, rows=None, labels=None):
        self.rows = rows
        self.labels = labels

    def fit(self, X, y):
        return self

    def predict_proba(self, X):
        return np.asarray(self.rows)[np.asarray(self.labels) - 1]


class TestSoftmaxClassifier:
    def test_separable_two_class_reaches_full_accuracy(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(-2, 0.3, (80, 2)), rng.normal(2, 0.3, (80, 2))])
        y = np.repeat([1, 2], 80)
        clf = SoftmaxClassifier(k=2, epochs=120, random_state=0, batch_size=32).fit(X, y)
        assert np.mean(clf.predict(X) == y) == 1.0

    def test_probabilities_normalized_and_interior(self):
        rng = np.random.default_rng(1)
        X = rng.normal(0, 1, (50, 3))
        y = rng.integers(1, 4, 50)
        clf = SoftmaxClassifier(k=3, epochs=10, random_state=1).fit(X, y)
        proba = clf.predict_proba(rng.normal(0, 1, (40, 3)))
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(proba > 0.0) and np.all(proba < 1.0)

    def test_zero_epochs_rejected(self):
        with pytest.raises(ConfigInvalid):
            SoftmaxClassifier(k=2, epochs=0).fit(np.zeros((4, 1)), [1, 1, 2, 2])

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        X = rng.normal(0, 1, (60, 2))
        y = rng.integers(1, 4, 60)
        a = SoftmaxClassifier(k=3, epochs=8, random_state=5).fit(X, y)
        b = SoftmaxClassifier(k=3, epochs=8, random_state=5).fit(X, y)
        np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))


class TestAnchorEstimation:
    def test_oracle_head_recovers_matrix_exactly(self):
        truth = EXAMPLE_MATRIX
        rng = np.random.default_rng(3)
        labels = np.concatenate([np.full(50, c) for c in range(1, 5)])
        X = rng.normal(0, 1, (labels.size, 2))
        est = NoiseMatrixEstimator(
            classifier=OracleHead(rows=truth, labels=labels), percentile=99.0
        ).fit(X, labels)
        np.testing.assert_allclose(est.matrix_.entries, truth, atol=1e-9)

    def test_rows_stochastic_for_percentile_99_and_100(self):
        data = generate_synth(SynthSpec(n=600, k=3, seed=4))
        matrix = build_noise_matrix(NoiseSpec(kind="uniform", k=3, rho=(0.15,) * 3))
        noisy = corrupt_labels(data.labels, matrix, seed=1)
        for pct in (99.0, 100.0):
            est = NoiseMatrixEstimator(
                classifier=SoftmaxClassifier(k=3, epochs=40, random_state=2),
                percentile=pct,
            ).fit(data.features, noisy)
            np.testing.assert_allclose(
                est.matrix_.entries.sum(axis=1), 1.0, atol=1e-12
            )
            assert est.matrix_.inverse is not None
            assert est.anchor_indices_.shape == (3,)

    def test_accurate_at_large_sample_size(self):
        # the anchor method operates in its intended regime once regions
        # hold a few thousand samples each
        k = 5
        data = generate_synth(SynthSpec(n=10_000, k=k, seed=5))
        matrix = invert_noise_matrix(
            build_noise_matrix(NoiseSpec(kind="uniform", k=k, rho=(0.15,) * k))
        )
        train, _ = split_train_test(data, 0.8, seed=0)
        train, _ = standardize(train, [])
        noisy = corrupt_labels(train.labels, matrix, seed=6)
        est = NoiseMatrixEstimator(
            classifier=SoftmaxClassifier(k=k, random_state=3)
        ).fit(train.features, noisy)
        max_abs, _ = matrix_error(est.matrix_, matrix)
        assert max_abs <= 0.1

    def test_percentile_validation(self):
        with pytest.raises(ConfigInvalid):
            NoiseMatrixEstimator(percentile=0.0).fit(np.zeros((4, 1)), [1, 1, 2, 2])
        with pytest.raises(ConfigInvalid):
            NoiseMatrixEstimator(percentile=101.0).fit(np.zeros((4, 1)), [1, 1, 2, 2])

    def test_empty_class_support(self):
        rows = np.array([[1.0, 0.0], [1.0, 0.0]])  # class 2 never predicted
        labels = np.array([1, 1, 2, 2])
        X = np.zeros((4, 1))
        with pytest.raises(EmptyClassSupport):
            NoiseMatrixEstimator(
                classifier=OracleHead(rows=rows, labels=labels)
            ).fit(X, labels)

    def test_singular_estimate_surfaces(self):
        rows = np.array([[0.5, 0.5], [0.5, 0.5]])
        labels = np.array([1, 1, 2, 2])
        with pytest.raises(SingularEstimate):
            NoiseMatrixEstimator(
                classifier=OracleHead(rows=rows, labels=labels)
            ).fit(np.zeros((4, 1)), labels)

    def test_clip_then_normalize_mode(self):
        truth = decaying_matrix([0.1, 0.1, 0.1], 3)
        labels = np.repeat([1, 2, 3], 30)
        est = NoiseMatrixEstimator(
            classifier=OracleHead(rows=truth, labels=labels),
            repair="clip_normalize",
        ).fit(np.zeros((90, 1)), labels)
        np.testing.assert_allclose(est.matrix_.entries, truth, atol=1e-12)

    def test_ties_resolve_to_lowest_sample_index(self):
        rows = np.array([[0.9, 0.1], [0.2, 0.8]])
        labels = np.array([1, 1, 1, 2, 2, 2])
        est = NoiseMatrixEstimator(
            classifier=OracleHead(rows=rows, labels=labels), percentile=100.0
        ).fit(np.zeros((6, 1)), labels)
        assert est.anchor_indices_[0] == 0  # first of the tied class-1 rows
        assert est.anchor_indices_[1] == 3


class TestMatrixError:
    def test_identical_is_zero(self):
        assert matrix_error(EXAMPLE_MATRIX, EXAMPLE_MATRIX) == (0.0, 0.0)

    def test_reference_estimate_deviation(self):
        max_abs, frob = matrix_error(APPENDIX_STYLE_ESTIMATE, EXAMPLE_MATRIX)
        assert max_abs == pytest.approx(0.08, abs=0.01)
        assert frob > max_abs

    def test_single_perturbed_pair(self):
        truth = EXAMPLE_MATRIX
        bumped = truth.copy()
        bumped[0, 1] += 0.01
        bumped[0, 0] -= 0.01  # keep the row stochastic
        max_abs, _ = matrix_error(bumped, truth)
        assert max_abs == pytest.approx(0.01, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            matrix_error(np.eye(3), np.eye(4))
