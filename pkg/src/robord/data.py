"""Datasets: synthetic generation, CSV ingestion, standardization, splits."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (
    DimensionMismatch,
    EmptyDataset,
    KInvalid,
    LabelOutOfRange,
    ParseError,
    SpecInvalid,
    TooFewSamples,
)


@dataclass(frozen=True)
class OrdinalDataset:
    """Feature matrix with 1-based integer ranks; immutable once built.

    ``standardization`` records the (mean, std) used to scale the features,
    when they were scaled.
    """

    features: np.ndarray
    labels: np.ndarray
    k: int
    standardization: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {x.shape}")
        if lab.shape != (x.shape[0],):
            raise DimensionMismatch("label count does not match feature rows")
        if not isinstance(self.k, (int, np.integer)) or self.k < 2:
            raise KInvalid(f"k must be an integer >= 2, got {self.k!r}")
        if lab.size and (lab.min() < 1 or lab.max() > self.k):
            raise LabelOutOfRange(f"labels must lie in 1..{self.k}")
        x = x.copy()
        x.setflags(write=False)
        lab = lab.copy()
        lab.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", lab)
        if self.standardization is not None:
            mean, std = self.standardization
            mean = np.asarray(mean, dtype=np.float64)
            std = np.asarray(std, dtype=np.float64)
            if np.any(std <= 0):
                raise SpecInvalid("standardization std entries must be > 0")
            object.__setattr__(self, "standardization", (mean, std))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def with_labels(self, labels) -> "OrdinalDataset":
        return replace(self, labels=np.asarray(labels, dtype=np.int64))


@dataclass(frozen=True)
class SynthSpec:
    """Linear ordinal data: uniform features in [-3, 3]^d, labelled by how
    many decreasing margins the projection onto ``direction`` exceeds."""

    n: int = 2500
    d: int = 2
    k: int = 5
    direction: tuple[float, ...] | None = None
    margins: tuple[float, ...] | None = None
    seed: int = 0

    def resolved(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n < 1 or self.d < 1 or self.k < 2:
            raise SpecInvalid("need n >= 1, d >= 1, k >= 2")
        if self.direction is None:
            direction = np.ones(self.d) / np.sqrt(self.d)
        else:
            direction = np.asarray(self.direction, dtype=np.float64)
        if direction.shape != (self.d,):
            raise SpecInvalid(f"direction must have length d={self.d}")
        if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise SpecInvalid("direction must be a unit vector")
        if self.margins is None:
            margins = np.linspace(1.5, -1.5, self.k - 1)
        else:
            margins = np.asarray(self.margins, dtype=np.float64)
        if margins.shape != (self.k - 1,):
            raise SpecInvalid(f"margins must have length k-1={self.k - 1}")
        if not np.all(np.diff(margins) < 0):
            raise SpecInvalid("margins must be strictly decreasing")
        return direction, margins


def generate_synth(spec: SynthSpec) -> OrdinalDataset:
    """Sample the synthetic dataset; deterministic given ``spec.seed``."""
    direction, margins = spec.resolved()
    rng = np.random.default_rng(spec.seed)
    x = rng.uniform(-3.0, 3.0, size=(spec.n, spec.d))
    labels = synth_labels(x, direction, margins)
    return OrdinalDataset(features=x, labels=labels, k=spec.k)


def synth_labels(x, direction, margins) -> np.ndarray:
    """Clean labelling rule: 1 + #{margins m : direction.x + m > 0}."""
    score = np.asarray(x) @ np.asarray(direction)
    return 1 + (score[:, None] + np.asarray(margins)[None, :] > 0.0).sum(axis=1)


def _looks_numeric(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def load_csv(path, label_column="label", k=None) -> OrdinalDataset:
    """Read a comma-separated dataset.

    A header row is auto-detected (any non-numeric first-row cell).
    ``label_column`` selects the label by header name or 0-based index.
    Labels must be integers in 1..k; k defaults to the largest label seen.
    Parse failures report the file line and column.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise EmptyDataset(f"{path}: no rows")
    header = None
    if any(not _looks_numeric(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise EmptyDataset(f"{path}: header only, no data rows")
    width = len(rows[0])
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None:
            raise ParseError(
                f"{path}: label column {label_column!r} needs a header row"
            )
        try:
            label_idx = header.index(label_column)
        except ValueError as exc:
            raise ParseError(
                f"{path}: no column named {label_column!r} in header {header}"
            ) from exc
    else:
        label_idx = int(label_column)
        if label_idx < 0:
            label_idx += width
    if not 0 <= label_idx < width:
        raise ParseError(f"{path}: label column index {label_idx} out of range")
    first_data_line = 2 if header is not None else 1
    values = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(
                f"{path}: line {first_data_line + r} has {len(row)} cells, expected {width}"
            )
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError as exc:
                raise ParseError(
                    f"{path}: line {first_data_line + r}, column {c + 1}:"
                    f" non-numeric cell {cell.strip()!r}"
                ) from exc
    labels_f = values[:, label_idx]
    labels = labels_f.astype(np.int64)
    if np.any(labels != labels_f):
        bad = int(np.argmax(labels != labels_f))
        raise LabelOutOfRange(
            f"{path}: line {first_data_line + bad}: label {labels_f[bad]} is not an integer"
        )
    if k is None:
        k = int(labels.max()) if labels.size else 0
    if labels.size and (labels.min() < 1 or labels.max() > k):
        raise LabelOutOfRange(f"{path}: labels must lie in 1..{k}")
    features = np.delete(values, label_idx, axis=1)
    return OrdinalDataset(features=features, labels=labels, k=int(k))


def save_csv(dataset: OrdinalDataset, path, noisy_labels=None) -> None:
    """Write features + label (+ optional noisy_label column) with a header."""
    cols = [f"x{i + 1}" for i in range(dataset.d)] + ["label"]
    if noisy_labels is not None:
        noisy_labels = np.asarray(noisy_labels, dtype=np.int64)
        if noisy_labels.shape != (dataset.n,):
            raise DimensionMismatch("noisy label count does not match rows")
        cols.append("noisy_label")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(dataset.n):
            row = [f"{v:.17g}" for v in dataset.features[i]]
            row.append(str(int(dataset.labels[i])))
            if noisy_labels is not None:
                row.append(str(int(noisy_labels[i])))
            writer.writerow(row)


def standardize(train: OrdinalDataset, others=()) -> tuple[OrdinalDataset, list[OrdinalDataset]]:
    """Scale features to zero mean and unit variance, statistics from
    ``train`` only; the same transform is applied to every other dataset.

    Constant columns get std 1 (with a warning) instead of dividing by 0.
    """
    if train.n == 0:
        raise EmptyDataset("cannot standardize an empty training set")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    if np.any(std == 0.0):
        warnings.warn(
            "constant feature column(s); std forced to 1", RuntimeWarning, stacklevel=2
        )
        std = np.where(std == 0.0, 1.0, std)

    def apply(ds: OrdinalDataset) -> OrdinalDataset:
        return OrdinalDataset(
            features=(ds.features - mean) / std,
            labels=ds.labels,
            k=ds.k,
            standardization=(mean, std),
        )

    return apply(train), [apply(ds) for ds in others]


def take(dataset: OrdinalDataset, indices) -> OrdinalDataset:
    """Row subset, preserving k and standardization metadata."""
    idx = np.asarray(indices)
    return OrdinalDataset(
        features=dataset.features[idx],
        labels=dataset.labels[idx],
        k=dataset.k,
        standardization=dataset.standardization,
    )


def split_train_test(dataset: OrdinalDataset, train_fraction=0.8, seed=0):
    """Disjoint, exhaustive shuffled split; train gets floor(fraction * n)."""
    if dataset.n < 2:
        raise TooFewSamples("need at least 2 samples to split")
    if not 0.0 < train_fraction < 1.0:
        raise SpecInvalid("train_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    n_train = int(np.floor(train_fraction * dataset.n))
    return take(dataset, perm[:n_train]), take(dataset, perm[n_train:])


def kfold(dataset: OrdinalDataset, k_folds=5, seed=0):
    """Shuffled k-fold partition: list of (train, validation) pairs covering
    every sample exactly once as validation."""
    if k_folds < 2:
        raise SpecInvalid("need at least 2 folds")
    if dataset.n < k_folds:
        raise TooFewSamples(f"need at least {k_folds} samples for {k_folds} folds")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    folds = np.array_split(perm, k_folds)
    pairs = []
    for i, val_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        pairs.append((take(dataset, train_idx), take(dataset, val_idx)))
    return pairs
