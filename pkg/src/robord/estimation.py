"""Noise-rate estimation from noisy labels via percentile anchor points.

A multiclass softmax network is fit to the noisy labels; for each class i
the sample whose predicted probability for i sits at a high percentile
(default the 99th) acts as an anchor, and its full predicted distribution
is read off as row i of the transition-matrix estimate.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import net as _net
from .exceptions import (
    ConfigInvalid,
    DimensionMismatch,
    EmptyClassSupport,
    KInvalid,
    LabelOutOfRange,
    NonFiniteLoss,
    SingularEstimate,
    SingularMatrix,
)
from .model import _check_train_config
from .noise import NoiseMatrix, invert_noise_matrix

ANCHOR_SUPPORT_FLOOR = 1e-6


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class SoftmaxClassifier(BaseEstimator):
    """Dense softmax classifier trained with the negative log likelihood.

    Same optimizer and initialisation scheme as the ordinal model.  The
    defaults (wider net, gentler learning rate, larger batches than the
    ordinal model) favour probability calibration over decision accuracy,
    since anchor-based noise estimation reads raw probabilities.  Labels
    are 1-based ranks treated as plain classes.
    """

    def __init__(
        self,
        k=None,
        hidden_sizes=(32, 32),
        activation="relu",
        learning_rate=0.001,
        epochs=300,
        batch_size=256,
        weight_decay=0.01,
        random_state=0,
    ):
        self.k = k
        self.hidden_sizes = hidden_sizes
        self.activation = activation
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = np.asarray(y)
        y_int = y.astype(np.int64)
        if np.any(y_int != y):
            raise LabelOutOfRange("labels must be integers")
        k = self.k if self.k is not None else int(y_int.max())
        if not isinstance(k, (int, np.integer)) or k < 2:
            raise KInvalid(f"k must be an integer >= 2, got {k!r}")
        if y_int.min() < 1 or y_int.max() > k:
            raise LabelOutOfRange(f"labels must lie in 1..{k}")
        _check_train_config(
            self.learning_rate, self.epochs, self.batch_size, self.weight_decay
        )
        n, d = X.shape
        rng = np.random.default_rng(self.random_state)
        network = _net.init_net(
            d, tuple(self.hidden_sizes), self.activation, rng, output_dim=k
        )
        params = network.params()
        opt = _net.AdamW(
            params,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
        )
        eye = np.eye(k)
        loss_curve = []
        # overflow of a diverging run is reported via NonFiniteLoss, not warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(self.epochs):
                order = rng.permutation(n)
                epoch_total = 0.0
                for start in range(0, n, self.batch_size):
                    idx = order[start : start + self.batch_size]
                    logits, cache = _net.forward(network, X[idx])
                    shifted = logits - logits.max(axis=1, keepdims=True)
                    log_norm = np.log(np.exp(shifted).sum(axis=1))
                    log_p = shifted - log_norm[:, None]
                    nll = -log_p[np.arange(idx.size), y_int[idx] - 1]
                    if not np.all(np.isfinite(nll)):
                        raise NonFiniteLoss(
                            f"non-finite loss at epoch {epoch + 1}, sample offset {start}"
                        )
                    epoch_total += float(nll.sum())
                    upstream = (np.exp(log_p) - eye[y_int[idx] - 1]) / idx.size
                    grads = _net.backward(network, cache, upstream)
                    opt.step(params, grads.params())
                loss_curve.append(epoch_total / n)
        self.net_ = network
        self.k_ = int(k)
        self.classes_ = np.arange(1, k + 1)
        self.n_features_in_ = d
        self.loss_curve_ = loss_curve
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        logits, _ = _net.forward(self.net_, X)
        return _softmax(logits)

    def predict(self, X) -> np.ndarray:
        return 1 + self.predict_proba(X).argmax(axis=1).astype(np.int64)


class NoiseMatrixEstimator(BaseEstimator):
    """Estimate the label-noise transition matrix from noisy data.

    Parameters
    ----------
    classifier : estimator with predict_proba, optional
        Probabilistic multiclass model; a fresh :class:`SoftmaxClassifier`
        by default.  It is cloned before fitting.
    percentile : float in (0, 100]
        Anchor position: for class i the anchor is the sample whose
        predicted probability for i is the ``percentile``-th order
        statistic over the whole training set (100 = the arg max).
    repair : {"normalize", "clip_normalize"}
        Row repair after reading anchors: renormalize only, or floor
        negatives at 0 first (softmax outputs never need the floor).

    Attributes
    ----------
    matrix_ : NoiseMatrix     row-stochastic estimate with inverse attached
    anchor_indices_ : ndarray anchor row index per class
    classifier_ : estimator   the fitted probability model
    """

    def __init__(self, classifier=None, percentile=99.0, repair="normalize"):
        self.classifier = classifier
        self.percentile = percentile
        self.repair = repair

    def fit(self, X, y):
        if not 0.0 < self.percentile <= 100.0:
            raise ConfigInvalid(
                f"percentile must lie in (0, 100], got {self.percentile!r}"
            )
        if self.repair not in ("normalize", "clip_normalize"):
            raise ConfigInvalid(f"unknown repair mode {self.repair!r}")
        base = self.classifier if self.classifier is not None else SoftmaxClassifier()
        clf = clone(base)
        clf.fit(X, y)
        X = check_array(X, dtype=np.float64)
        proba = clf.predict_proba(X)
        n, k = proba.shape
        rank = min(n - 1, max(0, int(np.ceil(self.percentile / 100.0 * n)) - 1))
        anchors = np.empty(k, dtype=np.int64)
        rows = np.empty((k, k))
        for i in range(k):
            p = proba[:, i]
            if p.max() < ANCHOR_SUPPORT_FLOOR:
                raise EmptyClassSupport(
                    f"all predicted probabilities for class {i + 1} are below"
                    f" {ANCHOR_SUPPORT_FLOOR}"
                )
            value = np.sort(p, kind="stable")[rank]
            anchors[i] = int(np.flatnonzero(p == value)[0])  # lowest index on ties
            rows[i] = proba[anchors[i]]
        if self.repair == "clip_normalize":
            rows = np.maximum(rows, 0.0)
        sums = rows.sum(axis=1, keepdims=True)
        if np.any(sums <= 0.0):
            raise EmptyClassSupport("a repaired row has no probability mass")
        rows = rows / sums
        try:
            self.matrix_ = invert_noise_matrix(NoiseMatrix(entries=rows))
        except SingularMatrix as exc:
            raise SingularEstimate(f"estimated matrix is not invertible: {exc}") from exc
        self.anchor_indices_ = anchors
        self.classifier_ = clf
        self.k_ = k
        self.n_features_in_ = X.shape[1]
        return self


def matrix_error(estimate, truth) -> tuple[float, float]:
    """(max absolute entry deviation, Frobenius norm) between two matrices."""
    a = estimate.entries if isinstance(estimate, NoiseMatrix) else np.asarray(estimate)
    b = truth.entries if isinstance(truth, NoiseMatrix) else np.asarray(truth)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.abs(diff).max()), float(np.linalg.norm(diff))
