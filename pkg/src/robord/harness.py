"""Multi-trial experiment protocol, metrics, grid search, and reports.

Each trial draws a fresh 80/20 split, standardizes with training
statistics, corrupts the training labels (and a copy of the test labels)
with the configured noise, and trains every requested variant with shared
hyperparameters.  Variants combine a base loss with a correction source:

* ``ce`` / ``imc``         -- plain loss, no correction
* ``ce-kr`` / ``imc-kr``   -- corrected with the known transition matrix
  of the condition's corruption (the clean condition's is the identity,
  so there the variant coincides with the plain loss)
* ``ce-est`` / ``imc-est`` -- corrected with a matrix estimated from the
  training labels via percentile anchors

Reported columns per variant (all MAE / zero-one pairs):

* ``clean_*``        -- trained on clean labels, scored on clean test labels
* ``noisy_*``        -- trained on corrupted labels, scored on clean test labels
* ``noisy_labels_*`` -- trained on corrupted labels, scored against the
  corrupted copy of the test labels

Sub-seeds derive from the master seed by fixed (purpose, trial, condition,
base-loss) keys, so adding a variant never perturbs the randomness of the
others, and the two corrected variants of a base loss share the exact
training trajectory randomness of the plain one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .data import (
    OrdinalDataset,
    SynthSpec,
    generate_synth,
    kfold,
    load_csv,
    split_train_test,
    standardize,
)
from .estimation import NoiseMatrixEstimator, SoftmaxClassifier, matrix_error
from .exceptions import (
    ConfigInvalid,
    DimensionMismatch,
    EmptyClassSupport,
    EmptyInput,
    NonFiniteLoss,
    RobordError,
    SingularEstimate,
)
from .model import OrdinalRegressor, RankLog
from .noise import NoiseMatrix, NoiseSpec, build_noise_matrix, corrupt_labels, identity_noise, invert_noise_matrix

VARIANTS = ("ce", "ce-kr", "ce-est", "imc", "imc-kr", "imc-est")
CONDITIONS = ("clean", "noisy")
METRIC_COLUMNS = (
    "clean_mae",
    "clean_zero_one",
    "noisy_mae",
    "noisy_zero_one",
    "noisy_labels_mae",
    "noisy_labels_zero_one",
)

_PURPOSE_CODES = {"split": 1, "corrupt_train": 2, "corrupt_test": 3, "train": 4, "estimate": 5, "grid": 6}
_CONDITION_CODES = {"clean": 0, "noisy": 1}
_BASE_CODES = {"": 0, "ce": 1, "imc": 2}


def derive_seed(master_seed, purpose, trial=0, condition="clean", base="") -> int:
    """Stable sub-seed for one role within one trial."""
    key = (
        _PURPOSE_CODES[purpose],
        int(trial),
        _CONDITION_CODES[condition],
        _BASE_CODES[base],
    )
    return int(np.random.SeedSequence(master_seed, spawn_key=key).generate_state(1)[0])


def parse_variant(variant: str) -> tuple[str, str]:
    """Split a variant name into (base loss, correction mode)."""
    if variant not in VARIANTS:
        raise ConfigInvalid(f"unknown variant {variant!r}; choose from {VARIANTS}")
    base, _, suffix = variant.partition("-")
    return base, suffix or "none"


@dataclass(frozen=True)
class Metrics:
    """Mean absolute rank distance and mean misclassification indicator."""

    mae: float
    zero_one: float


def evaluate(model, dataset: OrdinalDataset) -> Metrics:
    """Score a fitted model on a dataset."""
    pred = model.predict(dataset.features)
    diff = np.abs(pred - dataset.labels)
    return Metrics(mae=float(diff.mean()), zero_one=float((diff > 0).mean()))


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one experiment end to end."""

    noise: NoiseSpec
    synth: SynthSpec | None = None
    csv_path: str | None = None
    label_column: str | int = "label"
    k: int | None = None
    dataset_name: str = "synth"
    variants: tuple[str, ...] = VARIANTS
    trials: int = 20
    train_fraction: float = 0.8
    master_seed: int = 0
    learning_rate: float = 0.01
    epochs: int = 300
    batch_size: int = 32
    weight_decay: float = 0.01
    hidden_sizes: tuple[int, ...] = (16,)
    activation: str = "linear"
    percentile: float = 99.0
    # the estimation head is tuned for probability calibration, not accuracy
    estimation_hidden_sizes: tuple[int, ...] = (32, 32)
    estimation_activation: str = "relu"
    estimation_learning_rate: float = 0.001
    estimation_batch_size: int = 256
    repair: str = "normalize"

    def echo(self) -> list[str]:
        parts = [
            f"dataset={self.dataset_name}",
            f"noise={self.noise.kind}:rho={','.join(f'{r:g}' for r in (self.noise.rho or ()))}",
            f"k={self.noise.k}",
            f"variants={','.join(self.variants)}",
            f"trials={self.trials}",
            f"train_fraction={self.train_fraction}",
            f"master_seed={self.master_seed}",
            f"learning_rate={self.learning_rate}",
            f"epochs={self.epochs}",
            f"batch_size={self.batch_size}",
            f"weight_decay={self.weight_decay}",
            f"hidden_sizes={','.join(str(h) for h in self.hidden_sizes)}",
            f"activation={self.activation}",
            f"percentile={self.percentile}",
        ]
        return parts


@dataclass
class TrialRecord:
    trial: int
    values: dict = field(default_factory=dict)  # (variant, column) -> float
    ranks: dict = field(default_factory=dict)  # (variant, condition) -> RankLog
    est_error: dict = field(default_factory=dict)  # condition -> (max_abs, frobenius)
    failures: list = field(default_factory=list)


@dataclass
class TrialReport:
    plan: ExperimentPlan
    records: list[TrialRecord]
    wall_time: float

    def column(self, variant, column) -> np.ndarray:
        vals = [
            r.values[(variant, column)]
            for r in self.records
            if (variant, column) in r.values
        ]
        return np.array(vals)

    def rank_logs(self, variant=None, condition=None) -> list[RankLog]:
        out = []
        for r in self.records:
            for (v, c), log in sorted(r.ranks.items()):
                if (variant is None or v == variant) and (
                    condition is None or c == condition
                ):
                    out.append(log)
        return out

    def failures(self) -> list[str]:
        return [f for r in self.records for f in r.failures]


def load_plan_dataset(plan: ExperimentPlan) -> OrdinalDataset:
    if plan.synth is not None:
        return generate_synth(plan.synth)
    if plan.csv_path is not None:
        return load_csv(plan.csv_path, label_column=plan.label_column, k=plan.k)
    raise ConfigInvalid("plan needs a synth spec or a csv path")


def _fit_variant(plan, base, inverse_matrix, train_x, labels, seed):
    model = OrdinalRegressor(
        k=plan.noise.k,
        loss=base,
        correction=inverse_matrix,
        hidden_sizes=plan.hidden_sizes,
        activation=plan.activation,
        learning_rate=plan.learning_rate,
        epochs=plan.epochs,
        batch_size=plan.batch_size,
        weight_decay=plan.weight_decay,
        random_state=seed,
    )
    return model.fit(train_x, labels)


def _estimate(plan, k, features, labels, seed) -> NoiseMatrix:
    classifier = SoftmaxClassifier(
        k=k,
        hidden_sizes=plan.estimation_hidden_sizes,
        activation=plan.estimation_activation,
        learning_rate=plan.estimation_learning_rate,
        epochs=plan.epochs,
        batch_size=plan.estimation_batch_size,
        weight_decay=plan.weight_decay,
        random_state=seed,
    )
    est = NoiseMatrixEstimator(
        classifier=classifier, percentile=plan.percentile, repair=plan.repair
    )
    est.fit(features, labels)
    return est.matrix_


def run_experiment(plan: ExperimentPlan) -> TrialReport:
    """Run every trial of the plan and collect per-variant metrics.

    A trial whose estimation or training fails is recorded under
    ``failures`` for the affected variant and excluded from that
    variant's aggregates; other variants of the trial still count.
    """
    if plan.trials < 1:
        raise ConfigInvalid(f"trials must be >= 1, got {plan.trials}")
    if not plan.variants:
        raise ConfigInvalid("plan has no variants")
    for v in plan.variants:
        parse_variant(v)
    data = load_plan_dataset(plan)
    if plan.noise.k != data.k:
        raise DimensionMismatch(
            f"noise spec is for K={plan.noise.k} but data has K={data.k}"
        )
    k = data.k
    matrix = invert_noise_matrix(build_noise_matrix(plan.noise))
    identity = invert_noise_matrix(identity_noise(k))
    needs_est = any(v.endswith("-est") for v in plan.variants)
    start = time.perf_counter()
    records = []
    for trial in range(plan.trials):
        rec = TrialRecord(trial=trial)
        train, test = split_train_test(
            data, plan.train_fraction, derive_seed(plan.master_seed, "split", trial)
        )
        train, (test,) = standardize(train, [test])
        noisy_train = corrupt_labels(
            train.labels, matrix, derive_seed(plan.master_seed, "corrupt_train", trial)
        )
        noisy_test = corrupt_labels(
            test.labels, matrix, derive_seed(plan.master_seed, "corrupt_test", trial)
        )
        labels_for = {"clean": train.labels, "noisy": noisy_train}
        estimated: dict[str, NoiseMatrix | None] = {}
        for cond in CONDITIONS:
            if not needs_est:
                continue
            try:
                est = _estimate(
                    plan,
                    k,
                    train.features,
                    labels_for[cond],
                    derive_seed(plan.master_seed, "estimate", trial, cond),
                )
                estimated[cond] = est
                truth = matrix if cond == "noisy" else identity
                rec.est_error[cond] = matrix_error(est, truth)
            except (SingularEstimate, EmptyClassSupport, NonFiniteLoss) as exc:
                estimated[cond] = None
                rec.failures.append(
                    f"trial {trial} {cond} estimation: {type(exc).__name__}: {exc}"
                )
        for variant in plan.variants:
            base, mode = parse_variant(variant)
            for cond in CONDITIONS:
                if mode == "none":
                    correction = None
                elif mode == "kr":
                    # the known corruption of the clean condition is "none":
                    # correcting clean labels with the noisy-condition matrix
                    # would optimize a biased, per-sample-unbounded objective
                    correction = matrix if cond == "noisy" else None
                else:
                    correction = estimated.get(cond)
                    if correction is None:
                        rec.failures.append(
                            f"trial {trial} {variant} {cond}: skipped, no estimate"
                        )
                        continue
                seed = derive_seed(plan.master_seed, "train", trial, cond, base)
                try:
                    model = _fit_variant(
                        plan, base, correction, train.features, labels_for[cond], seed
                    )
                except RobordError as exc:
                    rec.failures.append(
                        f"trial {trial} {variant} {cond}: {type(exc).__name__}: {exc}"
                    )
                    continue
                m = evaluate(model, test)
                rec.values[(variant, f"{cond}_mae")] = m.mae
                rec.values[(variant, f"{cond}_zero_one")] = m.zero_one
                rec.ranks[(variant, cond)] = model.rank_log_
                if cond == "noisy":
                    mn = evaluate(model, test.with_labels(noisy_test))
                    rec.values[(variant, "noisy_labels_mae")] = mn.mae
                    rec.values[(variant, "noisy_labels_zero_one")] = mn.zero_one
        records.append(rec)
    return TrialReport(
        plan=plan, records=records, wall_time=time.perf_counter() - start
    )


def rank_report(logs: list[RankLog]) -> str:
    """Average ordering violations formatted as ``unordered / total``;
    any run ending unordered is flagged up front."""
    if not logs:
        raise EmptyInput("no rank logs to summarize")
    mean_unordered = float(np.mean([log.unordered_updates for log in logs]))
    mean_total = float(np.mean([log.total_updates for log in logs]))
    summary = f"{mean_unordered:.1f} / {mean_total:g}"
    bad = sum(1 for log in logs if not log.final_ordered)
    if bad:
        summary = f"FINAL THRESHOLDS UNORDERED IN {bad}/{len(logs)} RUNS! " + summary
    return summary


def _aggregate(values: np.ndarray) -> tuple[float, float, int]:
    if values.size == 0:
        return float("nan"), float("nan"), 0
    return float(values.mean()), float(values.std()), int(values.size)


def report_csv(report: TrialReport) -> str:
    """Deterministic CSV: plan echo as comments, then one row per
    (dataset, variant, column) with mean and std over completed trials.
    Wall time is deliberately excluded."""
    lines = [f"# plan {part}" for part in report.plan.echo()]
    lines.append("dataset,variant,column,mean,std,trials")
    name = report.plan.dataset_name
    for variant in report.plan.variants:
        for column in METRIC_COLUMNS:
            mean, std, n = _aggregate(report.column(variant, column))
            lines.append(f"{name},{variant},{column},{mean!r},{std!r},{n}")
        for cond in CONDITIONS:
            logs = report.rank_logs(variant, cond)
            if not logs:
                continue
            unordered = np.array([log.unordered_updates for log in logs], dtype=float)
            totals = np.array([log.total_updates for log in logs], dtype=float)
            ordered_frac = float(np.mean([log.final_ordered for log in logs]))
            lines.append(
                f"{name},{variant},rank_{cond}_unordered,"
                f"{float(unordered.mean())!r},{float(unordered.std())!r},{unordered.size}"
            )
            lines.append(
                f"{name},{variant},rank_{cond}_total,"
                f"{float(totals.mean())!r},{float(totals.std())!r},{totals.size}"
            )
            lines.append(
                f"{name},{variant},rank_{cond}_final_ordered_frac,"
                f"{ordered_frac!r},0.0,{totals.size}"
            )
    for cond in CONDITIONS:
        errs = [r.est_error[cond] for r in report.records if cond in r.est_error]
        if not errs:
            continue
        max_abs = np.array([e[0] for e in errs])
        frob = np.array([e[1] for e in errs])
        truth = "known-matrix" if cond == "noisy" else "identity"
        lines.append(
            f"{name},estimation,est_{cond}_max_abs_vs_{truth},"
            f"{float(max_abs.mean())!r},{float(max_abs.std())!r},{max_abs.size}"
        )
        lines.append(
            f"{name},estimation,est_{cond}_frobenius_vs_{truth},"
            f"{float(frob.mean())!r},{float(frob.std())!r},{frob.size}"
        )
    for failure in report.failures():
        lines.append(f'{name},failures,failure,,,"{failure}"')
    return "\n".join(lines) + "\n"


def report_table(report: TrialReport) -> str:
    """Human-readable summary table (mean +/- std per variant and column)."""
    name = report.plan.dataset_name
    headers = ["variant", "clean MAE", "noisy MAE", "clean 0-1", "noisy 0-1"]
    cols = ("clean_mae", "noisy_mae", "clean_zero_one", "noisy_zero_one")
    rows = []
    for variant in report.plan.variants:
        row = [variant]
        for column in cols:
            mean, std, n = _aggregate(report.column(variant, column))
            row.append("-" if n == 0 else f"{mean:.3f} +/- {std:.3f}")
        rows.append(row)
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    out = [f"dataset: {name} ({len(report.records)} trials)"]
    out.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in rows:
        out.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    for variant in report.plan.variants:
        for cond in CONDITIONS:
            logs = report.rank_logs(variant, cond)
            if logs:
                out.append(
                    f"rank ({variant}, {cond} labels): {rank_report(logs)}"
                )
    for cond in CONDITIONS:
        errs = [r.est_error[cond] for r in report.records if cond in r.est_error]
        if errs:
            max_abs = np.array([e[0] for e in errs])
            out.append(
                f"estimated matrix max-entry error ({cond} labels):"
                f" {max_abs.mean():.3f} +/- {max_abs.std():.3f}"
            )
    failures = report.failures()
    if failures:
        out.append(f"failed runs: {len(failures)}")
        out.extend(f"  {f}" for f in failures)
    return "\n".join(out) + "\n"


@dataclass
class GridSearchResult:
    best_learning_rate: float
    best_hidden_size: int
    scores: dict  # (lr, hidden) -> mean CV MAE on noisy validation labels
    excluded: dict  # (lr, hidden) -> diagnostic message


def grid_search(plan: ExperimentPlan, lr_grid, hidden_grid, base="ce") -> GridSearchResult:
    """Pick (learning rate, hidden size) by 5-fold cross-validation.

    The whole dataset is corrupted with the plan's noise, and each cell is
    scored by the mean validation MAE of the *uncorrected* base loss
    against the noisy validation labels.  Cells whose training diverges
    are excluded with a diagnostic.  Ties prefer the smaller hidden size,
    then the smaller learning rate.
    """
    if not lr_grid or not hidden_grid:
        raise ConfigInvalid("grids must be non-empty")
    data = load_plan_dataset(plan)
    if plan.noise.k != data.k:
        raise DimensionMismatch(
            f"noise spec is for K={plan.noise.k} but data has K={data.k}"
        )
    matrix = build_noise_matrix(plan.noise)
    noisy = data.with_labels(
        corrupt_labels(data.labels, matrix, derive_seed(plan.master_seed, "grid"))
    )
    folds = kfold(noisy, 5, seed=derive_seed(plan.master_seed, "grid", 1))
    scores, excluded = {}, {}
    for lr, hidden in product(lr_grid, hidden_grid):
        hidden_sizes = (int(hidden),) if int(hidden) > 0 else ()
        cell_plan = replace(plan, learning_rate=float(lr), hidden_sizes=hidden_sizes)
        fold_scores = []
        try:
            for fold_index, (ftrain, fval) in enumerate(folds):
                ftrain, (fval,) = standardize(ftrain, [fval])
                seed = derive_seed(plan.master_seed, "grid", 2 + fold_index, "noisy", base)
                model = _fit_variant(
                    cell_plan, base, None, ftrain.features, ftrain.labels, seed
                )
                fold_scores.append(evaluate(model, fval).mae)
        except NonFiniteLoss as exc:
            excluded[(float(lr), int(hidden))] = f"NonFiniteLoss: {exc}"
            continue
        scores[(float(lr), int(hidden))] = float(np.mean(fold_scores))
    if not scores:
        raise NonFiniteLoss("every grid cell diverged")
    best = min(scores, key=lambda cell: (scores[cell], cell[1], cell[0]))
    return GridSearchResult(
        best_learning_rate=best[0],
        best_hidden_size=best[1],
        scores=scores,
        excluded=excluded,
    )
