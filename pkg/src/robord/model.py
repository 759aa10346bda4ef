"""Ordinal regression estimator: a scalar-score network cut by thresholds.

The predicted rank is ``1 + #{k : g(x) + b_k > 0}``.  Thresholds are
trained jointly with the network by mini-batch AdamW (no weight decay on
the thresholds, no projection or re-sorting); their ordering
``b_1 >= ... >= b_{K-1}`` is monitored after every update and reported in
a :class:`RankLog`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import net as _net
from .exceptions import (
    ConfigInvalid,
    DimensionMismatch,
    KInvalid,
    LabelOutOfRange,
    NonFiniteLoss,
)
from .losses import CE, IMC, batch_loss_grads
from .noise import NoiseMatrix, invert_noise_matrix


@dataclass
class RankLog:
    """Running census of threshold-ordering violations during training."""

    total_updates: int = 0
    unordered_updates: int = 0
    first_unordered_update: int | None = None
    final_ordered: bool = True

    def record(self, ordered: bool) -> None:
        self.total_updates += 1
        if not ordered:
            self.unordered_updates += 1
            if self.first_unordered_update is None:
                self.first_unordered_update = self.total_updates
        self.final_ordered = ordered


def initial_thresholds(k: int) -> np.ndarray:
    """Evenly spaced decreasing thresholds from +1 to -1 (ordered start)."""
    if not isinstance(k, (int, np.integer)) or k < 2:
        raise KInvalid(f"k must be an integer >= 2, got {k!r}")
    if k == 2:
        return np.array([0.0])
    return np.linspace(1.0, -1.0, k - 1)


def thresholds_ordered(b) -> bool:
    """True iff b_i >= b_{i+1} for all i (ties allowed)."""
    b = np.asarray(b, dtype=np.float64)
    return bool(np.all(b[:-1] >= b[1:]))


def predict_from_scores(g, b) -> np.ndarray:
    """Rank = 1 + number of thresholds with g + b_k strictly positive."""
    g = np.asarray(g, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return 1 + ((g[:, None] + b[None, :]) > 0.0).sum(axis=1).astype(np.int64)


def _check_train_config(learning_rate, epochs, batch_size, weight_decay):
    if not isinstance(epochs, (int, np.integer)) or epochs < 1:
        raise ConfigInvalid(f"epochs must be an integer >= 1, got {epochs!r}")
    if not isinstance(batch_size, (int, np.integer)) or batch_size < 1:
        raise ConfigInvalid(f"batch_size must be an integer >= 1, got {batch_size!r}")
    if not learning_rate > 0:
        raise ConfigInvalid(f"learning_rate must be > 0, got {learning_rate!r}")
    if weight_decay < 0:
        raise ConfigInvalid(f"weight_decay must be >= 0, got {weight_decay!r}")


def train_ordinal(
    X,
    y,
    k,
    *,
    base=CE,
    correction=None,
    hidden_sizes=(16,),
    activation="relu",
    learning_rate=0.01,
    epochs=300,
    batch_size=32,
    weight_decay=0.01,
    seed=0,
):
    """Fit the score network and thresholds; returns
    ``(net, thresholds, rank_log, loss_curve)``.

    ``correction`` is an inverse noise matrix applied to the loss, or None.
    Deterministic given ``seed`` (weight init and shuffling share one
    generator).  Aborts with :class:`NonFiniteLoss` if the loss leaves the
    finite range.
    """
    _check_train_config(learning_rate, epochs, batch_size, weight_decay)
    if base not in (CE, IMC):
        raise ConfigInvalid(f"trainable base loss must be 'ce' or 'imc', got {base!r}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if y.shape != (n,):
        raise DimensionMismatch("X and y lengths differ")
    if y.min() < 1 or y.max() > k:
        raise LabelOutOfRange(f"labels must lie in 1..{k}")
    if correction is not None and correction.shape != (k, k):
        raise DimensionMismatch(
            f"correction shape {correction.shape} does not match K={k}"
        )

    rng = np.random.default_rng(seed)
    network = _net.init_net(d, hidden_sizes, activation, rng, output_dim=1)
    b = initial_thresholds(k)
    params = [*network.params(), b]
    decay_mask = [True] * (len(params) - 1) + [False]
    opt = _net.AdamW(
        params,
        learning_rate=learning_rate,
        weight_decay=weight_decay,
        decay_mask=decay_mask,
    )
    rank_log = RankLog()
    loss_curve = []
    # overflow of a diverging run is reported via NonFiniteLoss, not warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            order = rng.permutation(n)
            epoch_total = 0.0
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                xb, yb = X[idx], y[idx]
                out, cache = _net.forward(network, xb)
                g = out[:, 0]
                values, d_g, d_b = batch_loss_grads(base, g, b, yb, correction)
                if not np.all(np.isfinite(values)):
                    raise NonFiniteLoss(
                        f"non-finite loss at epoch {epoch + 1}, sample offset {start}"
                    )
                epoch_total += float(values.sum())
                m = idx.size
                grads = _net.backward(network, cache, (d_g / m)[:, None])
                opt.step(params, [*grads.params(), d_b.mean(axis=0)])
                rank_log.record(thresholds_ordered(b))
            loss_curve.append(epoch_total / n)
    return network, b, rank_log, loss_curve


class OrdinalRegressor(BaseEstimator):
    """Ordinal regressor with a rank-distance-surrogate loss and optional
    label-noise correction.

    Parameters
    ----------
    k : int or None
        Number of ordered classes; inferred from the training labels when
        None.
    loss : {"ce", "imc"}
        Surrogate loss: per-threshold binary cross entropy or hinge.
    correction : None, array of shape (k, k), or NoiseMatrix
        Label-noise transition matrix.  When given, training minimises the
        inverse-weighted loss so that its expectation under the corruption
        matches the clean loss.
    hidden_sizes : tuple of int
        Hidden layer widths of the score network; () gives a linear model.
    activation : {"relu", "linear"}
        Hidden-layer activation.
    learning_rate, epochs, batch_size, weight_decay : optimizer settings
        Mini-batch AdamW with betas (0.9, 0.999); decay never touches the
        thresholds.
    random_state : int
        Seeds weight initialisation and shuffling; runs are deterministic.

    Attributes
    ----------
    net_ : DenseNet                 fitted score network (scalar output)
    thresholds_ : ndarray (k-1,)    fitted cut points
    k_ : int                        number of classes
    classes_ : ndarray              [1, ..., k]
    rank_log_ : RankLog             threshold-ordering census
    loss_curve_ : list of float     per-epoch mean training loss
    """

    def __init__(
        self,
        k=None,
        loss="ce",
        correction=None,
        hidden_sizes=(16,),
        activation="relu",
        learning_rate=0.01,
        epochs=300,
        batch_size=32,
        weight_decay=0.01,
        random_state=0,
    ):
        self.k = k
        self.loss = loss
        self.correction = correction
        self.hidden_sizes = hidden_sizes
        self.activation = activation
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.random_state = random_state

    def _resolve_correction(self, k):
        c = self.correction
        if c is None:
            return None
        if isinstance(c, NoiseMatrix):
            matrix = c if c.inverse is not None else invert_noise_matrix(c)
        else:
            arr = np.asarray(c, dtype=np.float64)
            matrix = invert_noise_matrix(NoiseMatrix(entries=arr))
        if matrix.k != k:
            raise DimensionMismatch(
                f"correction is {matrix.k}x{matrix.k} but K={k}"
            )
        return matrix.inverse

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = np.asarray(y)
        y_int = y.astype(np.int64)
        if np.any(y_int != y):
            raise LabelOutOfRange("labels must be integers")
        k = self.k if self.k is not None else int(y_int.max())
        if not isinstance(k, (int, np.integer)) or k < 2:
            raise KInvalid(f"k must be an integer >= 2, got {k!r}")
        inverse = self._resolve_correction(k)
        self.net_, self.thresholds_, self.rank_log_, self.loss_curve_ = train_ordinal(
            X,
            y_int,
            k,
            base=self.loss,
            correction=inverse,
            hidden_sizes=tuple(self.hidden_sizes),
            activation=self.activation,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
            seed=self.random_state,
        )
        self.k_ = int(k)
        self.classes_ = np.arange(1, k + 1)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        """Scalar scores g(x)."""
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        out, _ = _net.forward(self.net_, X)
        return out[:, 0]

    def predict(self, X) -> np.ndarray:
        return predict_from_scores(self.decision_function(X), self.thresholds_)

    def score(self, X, y) -> float:
        """Negative mean absolute rank distance (higher is better)."""
        return -float(np.mean(np.abs(self.predict(X) - np.asarray(y))))


def save_model(model: OrdinalRegressor, path) -> None:
    """Checkpoint a fitted estimator (network, thresholds, class count)."""
    check_is_fitted(model, "net_")
    _net.save_checkpoint(path, model.net_, thresholds=model.thresholds_, k=model.k_)


def load_model(path) -> OrdinalRegressor:
    """Rebuild a fitted estimator from a checkpoint (bit-exact parameters)."""
    network, thresholds, k = _net.load_checkpoint(path)
    if thresholds is None or k is None:
        raise ConfigInvalid(f"{path}: checkpoint lacks thresholds or k")
    model = OrdinalRegressor(k=k)
    model.net_ = network
    model.thresholds_ = thresholds
    model.k_ = int(k)
    model.classes_ = np.arange(1, k + 1)
    model.n_features_in_ = network.input_dim
    model.rank_log_ = None
    model.loss_curve_ = None
    return model
