"""Class-conditional label-noise matrices with inverse-distance decay.

The noise model flips a true rank ``i`` to rank ``j`` with probability
``rho_i / |i - j|``, so nearby ranks are confused more often than distant
ones.  The full corruption process is a K x K row-stochastic transition
matrix; its inverse drives the loss correction used for robust training.

Classes are 1-based in all user-facing I/O and 0-based in array indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    DimensionMismatch,
    InverseMissing,
    LabelOutOfRange,
    ParseError,
    SingularMatrix,
    SpecInvalid,
)

UNIFORM = "uniform"
CLASS_CONDITIONAL = "class_conditional"
EXPLICIT = "explicit"

ROW_SUM_TOL = 1e-12
IDENTITY_TOL = 1e-9
CONDITION_CAP = 1e8


@dataclass(frozen=True)
class NoiseSpec:
    """Recipe for a K x K label-noise transition matrix.

    ``kind`` is one of ``"uniform"`` (one flip rate shared by all classes),
    ``"class_conditional"`` (one flip rate per class), or ``"explicit"``
    (a fully specified matrix).  ``rho`` is a scalar for the uniform kind
    and a length-K sequence otherwise; entries must lie in [0, 1).
    """

    kind: str
    k: int
    rho: tuple[float, ...] | None = None
    explicit_matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (UNIFORM, CLASS_CONDITIONAL, EXPLICIT):
            raise SpecInvalid(f"unknown noise kind {self.kind!r}")
        if not isinstance(self.k, (int, np.integer)) or self.k < 2:
            raise SpecInvalid(f"k must be an integer >= 2, got {self.k!r}")
        if self.kind == EXPLICIT:
            if self.explicit_matrix is None:
                raise SpecInvalid("explicit kind requires explicit_matrix")
            m = np.asarray(self.explicit_matrix, dtype=np.float64)
            if m.shape != (self.k, self.k):
                raise SpecInvalid(
                    f"explicit_matrix must be {self.k}x{self.k}, got {m.shape}"
                )
            if np.any(m < 0.0) or np.any(m > 1.0):
                raise SpecInvalid("explicit_matrix entries must lie in [0, 1]")
            if np.max(np.abs(m.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
                raise SpecInvalid("explicit_matrix rows must sum to 1")
            object.__setattr__(self, "explicit_matrix", m)
            return
        if self.rho is None:
            raise SpecInvalid(f"{self.kind} kind requires rho")
        rho = np.atleast_1d(np.asarray(self.rho, dtype=np.float64))
        if self.kind == UNIFORM:
            if rho.size == 1:
                rho = np.full(self.k, rho[0])
            elif rho.size == self.k and np.all(rho == rho[0]):
                pass
            else:
                raise SpecInvalid("uniform kind takes a single rho value")
        if rho.shape != (self.k,):
            raise SpecInvalid(f"rho must have length k={self.k}, got {rho.shape}")
        if np.any(rho < 0.0) or np.any(rho >= 1.0):
            raise SpecInvalid("rho entries must lie in [0, 1)")
        # each diagonal must stay positive: off-diagonal mass < 1
        for i in range(self.k):
            mass = rho[i] * sum(1.0 / abs(i - j) for j in range(self.k) if j != i)
            if mass >= 1.0:
                raise SpecInvalid(
                    f"off-diagonal mass {mass:.4f} for class {i + 1} leaves a"
                    " non-positive diagonal"
                )
        object.__setattr__(self, "rho", tuple(float(r) for r in rho))


@dataclass(frozen=True)
class Diagnostics:
    """Health report for a noise matrix and (once computed) its inverse."""

    doubly_stochastic: bool
    max_column_sum_deviation: float
    diagonally_dominant: bool
    inverse_row_sums: np.ndarray | None = None
    min_inverse_entry_per_column: np.ndarray | None = None
    lipschitz_inflation: float | None = None


@dataclass(frozen=True)
class NoiseMatrix:
    """Row-stochastic transition matrix, optionally with a cached inverse."""

    entries: np.ndarray
    inverse: np.ndarray | None = None
    diagnostics: Diagnostics | None = None

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise SpecInvalid(f"entries must be square, got shape {m.shape}")
        if np.any(m < 0.0) or np.any(m > 1.0):
            raise SpecInvalid("entries must lie in [0, 1]")
        if np.max(np.abs(m.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise SpecInvalid("rows must sum to 1 within 1e-12")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        if self.inverse is not None:
            inv = np.asarray(self.inverse, dtype=np.float64).copy()
            if inv.shape != m.shape:
                raise DimensionMismatch("inverse shape does not match entries")
            if np.max(np.abs(m @ inv - np.eye(m.shape[0]))) > IDENTITY_TOL:
                raise SingularMatrix("entries @ inverse deviates from identity")
            inv.setflags(write=False)
            object.__setattr__(self, "inverse", inv)

    @property
    def k(self) -> int:
        return self.entries.shape[0]


def _base_diagnostics(entries: np.ndarray) -> Diagnostics:
    col_dev = float(np.max(np.abs(entries.sum(axis=0) - 1.0)))
    diag = np.diag(entries)
    dominant = bool(np.all(diag > entries.sum(axis=1) - diag))
    return Diagnostics(
        doubly_stochastic=col_dev <= IDENTITY_TOL,
        max_column_sum_deviation=col_dev,
        diagonally_dominant=dominant,
    )


def build_noise_matrix(spec: NoiseSpec) -> NoiseMatrix:
    """Construct the transition matrix described by ``spec``.

    Off-diagonals are ``rho_i / |i - j|``; each diagonal absorbs the
    remaining probability mass so every row sums to 1.
    """
    if spec.kind == EXPLICIT:
        entries = np.asarray(spec.explicit_matrix, dtype=np.float64)
    else:
        k = spec.k
        entries = np.zeros((k, k))
        for i in range(k):
            for j in range(k):
                if i != j:
                    entries[i, j] = spec.rho[i] / abs(i - j)
            entries[i, i] = 1.0 - entries[i].sum()
        if np.any(np.diag(entries) <= 0.0):
            raise SpecInvalid("noise rates leave a non-positive diagonal")
    return NoiseMatrix(entries=entries, diagnostics=_base_diagnostics(entries))


def invert_noise_matrix(matrix: NoiseMatrix) -> NoiseMatrix:
    """Return a copy of ``matrix`` with its inverse and full diagnostics.

    Uses a dense partial-pivoting solve; matrices whose condition number
    exceeds ``CONDITION_CAP`` are rejected as numerically singular.  Lack
    of diagonal dominance is recorded in the diagnostics, not an error.
    """
    entries = matrix.entries
    cond = np.linalg.cond(entries)
    if not np.isfinite(cond) or cond > CONDITION_CAP:
        raise SingularMatrix(f"condition estimate {cond:.3e} exceeds cap")
    try:
        inverse = np.linalg.inv(entries)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc
    if np.max(np.abs(entries @ inverse - np.eye(matrix.k))) > IDENTITY_TOL:
        raise SingularMatrix("inverse failed the identity check")
    base = _base_diagnostics(entries)
    diagnostics = Diagnostics(
        doubly_stochastic=base.doubly_stochastic,
        max_column_sum_deviation=base.max_column_sum_deviation,
        diagonally_dominant=base.diagonally_dominant,
        inverse_row_sums=inverse.sum(axis=1),
        min_inverse_entry_per_column=inverse.min(axis=0),
        lipschitz_inflation=float(np.abs(inverse).sum(axis=1).max()),
    )
    return NoiseMatrix(entries=entries, inverse=inverse, diagnostics=diagnostics)


def lipschitz_inflation(matrix: NoiseMatrix) -> float:
    """Largest absolute row sum of the inverse.

    This is the factor by which the loss correction can inflate gradient
    magnitudes; it is exactly 1 for the identity matrix and >= 1 for any
    row-stochastic invertible matrix.
    """
    if matrix.inverse is None:
        raise InverseMissing("call invert_noise_matrix first")
    return float(np.abs(matrix.inverse).sum(axis=1).max())


def corrupt_labels(labels, matrix: NoiseMatrix, seed: int) -> np.ndarray:
    """Resample each label from its transition row, deterministically.

    ``labels`` are 1-based ranks; each label ``i`` is replaced by a draw
    from row ``i`` of the matrix using a generator seeded with ``seed``.
    """
    lab = np.asarray(labels)
    if lab.size and not np.issubdtype(lab.dtype, np.integer):
        as_int = lab.astype(np.int64)
        if np.any(as_int != lab):
            raise LabelOutOfRange("labels must be integers")
        lab = as_int
    lab = lab.astype(np.int64)
    if lab.size and (lab.min() < 1 or lab.max() > matrix.k):
        raise LabelOutOfRange(f"labels must lie in 1..{matrix.k}")
    rng = np.random.default_rng(seed)
    u = rng.random(lab.size)
    cum = np.cumsum(matrix.entries, axis=1)
    return 1 + (u[:, None] > cum[lab - 1]).sum(axis=1).astype(np.int64)


def save_noise_matrix(matrix: NoiseMatrix, path, metadata: str | None = None) -> None:
    """Write the plain-text matrix format: ``K <int>`` then K rows of K
    decimals with 15 significant digits.  ``metadata`` becomes a trailing
    ``#`` comment line."""
    lines = [f"K {matrix.k}"]
    for row in matrix.entries:
        lines.append(" ".join(f"{v:.15g}" for v in row))
    if metadata:
        lines.append(f"# {metadata}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_noise_matrix(path) -> NoiseMatrix:
    """Read the plain-text matrix format written by :func:`save_noise_matrix`."""
    raw = [
        line.strip()
        for line in Path(path).read_text().splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not raw or not raw[0].startswith("K "):
        raise ParseError(f"{path}: first line must be 'K <int>'")
    try:
        k = int(raw[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: malformed header {raw[0]!r}") from exc
    if len(raw) - 1 < k:
        raise ParseError(f"{path}: expected {k} matrix rows, found {len(raw) - 1}")
    rows = []
    for r, line in enumerate(raw[1 : 1 + k], start=1):
        vals = line.split()
        if len(vals) != k:
            raise ParseError(f"{path}: row {r} has {len(vals)} entries, expected {k}")
        try:
            rows.append([float(v) for v in vals])
        except ValueError as exc:
            raise ParseError(f"{path}: row {r} has a non-numeric entry") from exc
    entries = np.array(rows)
    spec = NoiseSpec(kind=EXPLICIT, k=k, explicit_matrix=entries)
    return build_noise_matrix(spec)


def identity_noise(k: int) -> NoiseMatrix:
    """Noise-free transition matrix (rho = 0)."""
    return build_noise_matrix(NoiseSpec(kind=UNIFORM, k=k, rho=(0.0,) * k))
