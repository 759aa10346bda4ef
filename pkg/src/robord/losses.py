"""Ordinal losses over a scalar score and cut thresholds, plus corrected forms.

A model scores an input with ``g`` and cuts the real line with thresholds
``b_1 >= ... >= b_{K-1}``.  Three losses compare ``(g, b)`` against a label
``y`` in ``1..K``:

* rank distance -- counts cut violations; equals ``|predicted - y|`` for
  ordered thresholds.  Discrete, evaluation only.
* hinge ("imc") -- ``sum_i max(0, 1 - z_i (g + b_i))`` with ``z_i = +1``
  for ``i < y`` and ``-1`` otherwise.
* binary cross entropy ("ce") -- ``-sum_j [z_j log s(g + b_j)
  + (1 - z_j) log(1 - s(g + b_j))]`` with ``z_j = 1`` for ``j < y`` else 0
  and ``s`` the sigmoid.

Training on labels corrupted by a known transition matrix N uses the
corrected loss ``sum_j inv(N)[y_obs, j] * loss(g, b, j)``, whose
expectation under the corruption equals the clean loss.  Corrected values
may be negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .exceptions import (
    CorrectionMissing,
    DimensionMismatch,
    LabelOutOfRange,
    SpecInvalid,
)

CE = "ce"
IMC = "imc"
MAE = "mae"


@dataclass(frozen=True)
class LossSpec:
    """Base loss name plus an optional correction (an inverse noise matrix)."""

    base: str
    correction: np.ndarray | None = None

    def __post_init__(self):
        if self.base not in (CE, IMC, MAE):
            raise SpecInvalid(f"unknown base loss {self.base!r}")
        if self.correction is not None:
            if self.base == MAE:
                raise SpecInvalid("the rank-distance loss admits no correction")
            c = np.asarray(self.correction, dtype=np.float64)
            if c.ndim != 2 or c.shape[0] != c.shape[1]:
                raise DimensionMismatch(
                    f"correction must be square, got shape {c.shape}"
                )
            c = c.copy()
            c.setflags(write=False)
            object.__setattr__(self, "correction", c)


@dataclass(frozen=True)
class LossGrad:
    """Loss value with its gradient w.r.t. the score and each threshold."""

    value: float
    d_g: float
    d_b: np.ndarray


@lru_cache(maxsize=32)
def _z01(k: int) -> np.ndarray:
    """(K, K-1) encoding for ce: row j has 1 where threshold index < j."""
    z = (np.arange(k - 1)[None, :] < np.arange(k)[:, None]).astype(np.float64)
    z.setflags(write=False)
    return z


@lru_cache(maxsize=32)
def _zpm(k: int) -> np.ndarray:
    """(K, K-1) sign encoding for imc: +1 where threshold index < j, else -1."""
    z = 2.0 * _z01(k) - 1.0
    z.setflags(write=False)
    return z


def _check_thresholds(b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.size < 1:
        raise DimensionMismatch("thresholds must be a 1-D vector of length K-1")
    if not np.all(np.isfinite(b)):
        raise SpecInvalid("thresholds must be finite")
    return b


def _check_label(y, k: int) -> int:
    if not float(y).is_integer():
        raise LabelOutOfRange(f"label {y!r} is not an integer")
    y = int(y)
    if not 1 <= y <= k:
        raise LabelOutOfRange(f"label {y} outside 1..{k}")
    return y


def batch_loss_grads(base, g, b, y, correction=None):
    """Vectorised per-sample loss values and gradients.

    Parameters
    ----------
    base : "ce" or "imc"
    g : (B,) scores
    b : (K-1,) thresholds
    y : (B,) labels in 1..K; the observed (possibly noisy) labels when a
        correction is supplied
    correction : (K, K) inverse noise matrix, or None for the plain loss

    Returns
    -------
    values : (B,) per-sample losses
    d_g : (B,) per-sample gradients w.r.t. g
    d_b : (B, K-1) per-sample gradients w.r.t. each threshold
    """
    g = np.asarray(g, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    k = b.size + 1
    if correction is None:
        w = np.eye(k)[y - 1]
    else:
        if correction.shape != (k, k):
            raise DimensionMismatch(
                f"correction shape {correction.shape} does not match K={k}"
            )
        w = correction[y - 1]
    a = g[:, None] + b[None, :]
    if base == CE:
        z = _z01(k)
        # -log s(a) and -log(1 - s(a)) via the softplus identity: finite
        # for any representable a.
        sp_neg = np.logaddexp(0.0, -a)
        sp_pos = np.logaddexp(0.0, a)
        table = sp_neg @ z.T + sp_pos @ (1.0 - z).T
        d_a = expit(a) * w.sum(axis=1, keepdims=True) - w @ z
    elif base == IMC:
        z = _zpm(k)
        t = 1.0 - z[None, :, :] * a[:, None, :]
        table = np.maximum(t, 0.0).sum(axis=2)
        # subgradient 0 exactly at the hinge kink (strict inequality)
        d_a = -np.einsum("bj,ji,bji->bi", w, z, (t > 0.0).astype(np.float64))
    else:
        raise SpecInvalid(f"no gradients for base loss {base!r}")
    values = (w * table).sum(axis=1)
    return values, d_a.sum(axis=1), d_a


def _scalar(base, g, b, y, correction=None) -> LossGrad:
    values, d_g, d_b = batch_loss_grads(
        base, np.array([g], dtype=np.float64), b, np.array([y]), correction
    )
    return LossGrad(value=float(values[0]), d_g=float(d_g[0]), d_b=d_b[0])


def loss_mae(g, b, y) -> int:
    """Rank-distance loss: violated cuts below the label plus satisfied
    cuts at or above it."""
    b = _check_thresholds(b)
    y = _check_label(y, b.size + 1)
    a = float(g) + b
    idx = np.arange(1, b.size + 1)
    return int(((a < 0) & (idx < y)).sum() + ((a >= 0) & (idx >= y)).sum())


def loss_ce(g, b, y) -> LossGrad:
    """Binary cross-entropy ordinal loss with exact gradients."""
    b = _check_thresholds(b)
    y = _check_label(y, b.size + 1)
    return _scalar(CE, g, b, y)


def loss_imc(g, b, y) -> LossGrad:
    """Hinge ordinal loss with exact subgradients (0 at the kink)."""
    b = _check_thresholds(b)
    y = _check_label(y, b.size + 1)
    return _scalar(IMC, g, b, y)


def corrected_loss(spec: LossSpec, g, b, y_noisy) -> LossGrad:
    """Inverse-matrix-weighted sum of the base loss over all candidate labels.

    The weights are the row of ``spec.correction`` selected by the observed
    label, so the expectation over the corruption recovers the clean loss.
    """
    if spec.correction is None:
        raise CorrectionMissing("spec has no correction matrix")
    b = _check_thresholds(b)
    k = b.size + 1
    if spec.correction.shape != (k, k):
        raise DimensionMismatch(
            f"correction shape {spec.correction.shape} does not match K={k}"
        )
    y = _check_label(y_noisy, k)
    return _scalar(spec.base, g, b, y, spec.correction)


def loss_table(spec: LossSpec, g, b) -> np.ndarray:
    """Loss value at every candidate label, corrected when the spec says so.

    ``loss_table(spec, g, b)[y - 1] == corrected_loss(spec, g, b, y).value``
    for corrected specs; for plain specs it is the base loss at each label.
    """
    b = _check_thresholds(b)
    k = b.size + 1
    if spec.base == MAE:
        base = np.array([loss_mae(g, b, y) for y in range(1, k + 1)], dtype=np.float64)
    else:
        ys = np.arange(1, k + 1)
        base, _, _ = batch_loss_grads(spec.base, np.full(k, float(g)), b, ys, None)
    if spec.correction is None:
        return base
    if spec.correction.shape != (k, k):
        raise DimensionMismatch(
            f"correction shape {spec.correction.shape} does not match K={k}"
        )
    return spec.correction @ base
