"""Noise-robust ordinal regression.

Learn ordinal models (a scalar score network plus ordered cut thresholds)
from labels corrupted by class-conditional noise, using inverse-matrix
loss correction, with tools to simulate noise, estimate the transition
matrix from data, and reproduce the full multi-trial experiment protocol.
"""

from .data import OrdinalDataset, SynthSpec, generate_synth, kfold, load_csv, save_csv, split_train_test, standardize
from .estimation import NoiseMatrixEstimator, SoftmaxClassifier, matrix_error
from .harness import (
    ExperimentPlan,
    GridSearchResult,
    Metrics,
    TrialReport,
    evaluate,
    grid_search,
    rank_report,
    report_csv,
    report_table,
    run_experiment,
)
from .losses import LossGrad, LossSpec, corrected_loss, loss_ce, loss_imc, loss_mae, loss_table
from .model import (
    OrdinalRegressor,
    RankLog,
    initial_thresholds,
    load_model,
    predict_from_scores,
    save_model,
    thresholds_ordered,
)
from .noise import (
    Diagnostics,
    NoiseMatrix,
    NoiseSpec,
    build_noise_matrix,
    corrupt_labels,
    identity_noise,
    invert_noise_matrix,
    lipschitz_inflation,
    load_noise_matrix,
    save_noise_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "Diagnostics",
    "ExperimentPlan",
    "GridSearchResult",
    "LossGrad",
    "LossSpec",
    "Metrics",
    "NoiseMatrix",
    "NoiseMatrixEstimator",
    "NoiseSpec",
    "OrdinalDataset",
    "OrdinalRegressor",
    "RankLog",
    "SoftmaxClassifier",
    "SynthSpec",
    "TrialReport",
    "build_noise_matrix",
    "corrected_loss",
    "corrupt_labels",
    "evaluate",
    "generate_synth",
    "grid_search",
    "identity_noise",
    "initial_thresholds",
    "invert_noise_matrix",
    "kfold",
    "lipschitz_inflation",
    "load_csv",
    "load_model",
    "load_noise_matrix",
    "loss_ce",
    "loss_imc",
    "loss_mae",
    "loss_table",
    "matrix_error",
    "predict_from_scores",
    "rank_report",
    "report_csv",
    "report_table",
    "run_experiment",
    "save_csv",
    "save_model",
    "save_noise_matrix",
    "split_train_test",
    "standardize",
    "thresholds_ordered",
]
