"""Command-line interface.

Subcommands: synth, corrupt, noise-matrix, train, estimate-noise,
evaluate, experiment, grid-search.  Failures exit nonzero with a
machine-readable JSON error on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import SynthSpec, generate_synth, load_csv, save_csv
from .estimation import NoiseMatrixEstimator, SoftmaxClassifier, matrix_error
from .exceptions import ConfigInvalid, ParseError, RobordError
from .harness import (
    VARIANTS,
    ExperimentPlan,
    derive_seed,
    evaluate,
    grid_search,
    rank_report,
    report_csv,
    report_table,
    run_experiment,
)
from .model import OrdinalRegressor, load_model, save_model
from .noise import (
    CLASS_CONDITIONAL,
    UNIFORM,
    NoiseSpec,
    build_noise_matrix,
    corrupt_labels,
    invert_noise_matrix,
    lipschitz_inflation,
    load_noise_matrix,
    save_noise_matrix,
)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _hidden(text: str) -> tuple[int, ...]:
    sizes = _ints(text)
    return tuple(s for s in sizes if s > 0)


def _label_column(text: str):
    return int(text) if text.lstrip("-").isdigit() else text


def _add_noise_args(p: argparse.ArgumentParser):
    p.add_argument("--rho", type=float, default=0.15, help="shared flip rate")
    p.add_argument(
        "--rho-per-class", type=_floats, default=None, help="comma list, one rate per class"
    )
    p.add_argument(
        "--noise-matrix", default=None, metavar="PATH", help="read an explicit matrix file"
    )


def _add_train_args(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--hidden", type=_hidden, default=(16,), help="comma list of layer widths; 0 for none")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--activation", choices=["relu", "linear"], default=None)
    p.add_argument("--seed", type=int, default=0)


def _add_data_args(p: argparse.ArgumentParser, require=True):
    p.add_argument("--data", required=require, metavar="CSV", help="dataset file")
    p.add_argument("--label-column", type=_label_column, default="label")
    p.add_argument("--k", type=int, default=None, help="number of classes")


def _noise_spec(args, k: int) -> NoiseSpec:
    if args.noise_matrix:
        loaded = load_noise_matrix(args.noise_matrix)
        if loaded.k != k:
            raise ConfigInvalid(
                f"matrix file is {loaded.k}x{loaded.k} but data has K={k}"
            )
        return NoiseSpec(kind="explicit", k=k, explicit_matrix=loaded.entries)
    if args.rho_per_class is not None:
        return NoiseSpec(kind=CLASS_CONDITIONAL, k=k, rho=args.rho_per_class)
    return NoiseSpec(kind=UNIFORM, k=k, rho=(args.rho,) * k)


def _resolve_activation(args, source_is_synth: bool) -> str:
    if args.activation is not None:
        return args.activation
    return "linear" if source_is_synth else "relu"


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n=args.n,
        d=args.d,
        k=args.k if args.k is not None else 5,
        margins=args.margins,
        seed=args.seed,
    )
    dataset = generate_synth(spec)
    save_csv(dataset, args.out)
    print(f"wrote {dataset.n} rows x {dataset.d} features, K={dataset.k} -> {args.out}")
    return 0


def cmd_corrupt(args) -> int:
    dataset = load_csv(args.data, label_column=args.label_column, k=args.k)
    matrix = build_noise_matrix(_noise_spec(args, dataset.k))
    noisy = corrupt_labels(dataset.labels, matrix, args.seed)
    save_csv(dataset, args.out, noisy_labels=noisy)
    flipped = int((noisy != dataset.labels).sum())
    print(f"corrupted {flipped}/{dataset.n} labels -> {args.out}")
    return 0


def cmd_noise_matrix(args) -> int:
    if args.k is None and not args.noise_matrix:
        raise ConfigInvalid("--k is required unless --noise-matrix is given")
    k = args.k if args.k is not None else load_noise_matrix(args.noise_matrix).k
    matrix = build_noise_matrix(_noise_spec(args, k))
    if args.invert:
        matrix = invert_noise_matrix(matrix)
    if args.out:
        save_noise_matrix(matrix, args.out)
        print(f"wrote {matrix.k}x{matrix.k} matrix -> {args.out}")
    else:
        for row in matrix.entries:
            print(" ".join(f"{v:.6f}" for v in row))
    if args.invert:
        print("inverse:")
        for row in matrix.inverse:
            print(" ".join(f"{v:.6f}" for v in row))
        d = matrix.diagnostics
        print(
            f"doubly_stochastic={d.doubly_stochastic}"
            f" diagonally_dominant={d.diagonally_dominant}"
            f" lipschitz_inflation={lipschitz_inflation(matrix):.6f}"
        )
    return 0


def cmd_train(args) -> int:
    dataset = load_csv(args.data, label_column=args.label_column, k=args.k)
    correction = None
    if args.correction == "known":
        correction = build_noise_matrix(_noise_spec(args, dataset.k))
    elif args.correction == "estimated":
        # the estimation head keeps its own calibration-oriented defaults
        classifier = SoftmaxClassifier(
            k=dataset.k,
            epochs=args.epochs,
            random_state=derive_seed(args.seed, "estimate"),
        )
        estimator = NoiseMatrixEstimator(classifier=classifier, percentile=args.percentile)
        estimator.fit(dataset.features, dataset.labels)
        correction = estimator.matrix_
    model = OrdinalRegressor(
        k=dataset.k,
        loss=args.loss,
        correction=correction,
        hidden_sizes=args.hidden,
        activation=_resolve_activation(args, source_is_synth=False),
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        weight_decay=args.weight_decay,
        random_state=args.seed,
    )
    model.fit(dataset.features, dataset.labels)
    if args.out:
        save_model(model, args.out)
    metrics = evaluate(model, dataset)
    print(
        json.dumps(
            {
                "train_mae": metrics.mae,
                "train_zero_one": metrics.zero_one,
                "final_loss": model.loss_curve_[-1],
                "rank": rank_report([model.rank_log_]),
                "checkpoint": args.out,
            }
        )
    )
    return 0


def cmd_estimate_noise(args) -> int:
    dataset = load_csv(args.data, label_column=args.label_column, k=args.k)
    classifier = SoftmaxClassifier(
        k=dataset.k,
        hidden_sizes=args.hidden,
        activation=_resolve_activation(args, source_is_synth=False),
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        weight_decay=args.weight_decay,
        random_state=args.seed,
    )
    estimator = NoiseMatrixEstimator(classifier=classifier, percentile=args.percentile)
    estimator.fit(dataset.features, dataset.labels)
    metadata = f"percentile={args.percentile:g} seed={args.seed}"
    payload = {"k": dataset.k, "percentile": args.percentile, "seed": args.seed}
    if args.truth:
        max_abs, frob = matrix_error(estimator.matrix_, load_noise_matrix(args.truth))
        metadata += f" max_abs_vs_truth={max_abs:.6g}"
        payload["max_abs_vs_truth"] = max_abs
        payload["frobenius_vs_truth"] = frob
    save_noise_matrix(estimator.matrix_, args.out, metadata=metadata)
    payload["out"] = args.out
    print(json.dumps(payload))
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    dataset = load_csv(args.data, label_column=args.label_column, k=args.k or model.k_)
    metrics = evaluate(model, dataset)
    print(json.dumps({"mae": metrics.mae, "zero_one": metrics.zero_one, "n": dataset.n}))
    return 0


def _experiment_plan(args) -> ExperimentPlan:
    source_is_synth = args.data is None
    if source_is_synth:
        k = args.k if args.k is not None else 5
        synth = SynthSpec(n=args.n, d=args.d, k=k, seed=args.seed)
        csv_path = None
        name = "synth"
    else:
        dataset = load_csv(args.data, label_column=args.label_column, k=args.k)
        k = dataset.k
        synth = None
        csv_path = args.data
        name = Path(args.data).stem
    return ExperimentPlan(
        noise=_noise_spec(args, k),
        synth=synth,
        csv_path=csv_path,
        label_column=args.label_column,
        k=k,
        dataset_name=name,
        variants=tuple(args.variants),
        trials=args.trials,
        train_fraction=args.train_fraction,
        master_seed=args.seed,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        weight_decay=args.weight_decay,
        hidden_sizes=args.hidden,
        activation=_resolve_activation(args, source_is_synth),
        percentile=args.percentile,
    )


def cmd_experiment(args) -> int:
    report = run_experiment(_experiment_plan(args))
    if args.out:
        Path(args.out).write_text(report_csv(report))
    print(report_table(report), end="")
    print(f"wall time: {report.wall_time:.1f}s" + (f"; report -> {args.out}" if args.out else ""))
    return 0


def cmd_grid_search(args) -> int:
    plan = _experiment_plan(args)
    result = grid_search(plan, args.lr_grid, args.hidden_grid, base=args.loss)
    for (lr, hidden), score in sorted(result.scores.items()):
        print(f"lr={lr:g} hidden={hidden}: cv_mae={score:.4f}")
    for (lr, hidden), message in sorted(result.excluded.items()):
        print(f"lr={lr:g} hidden={hidden}: excluded ({message})")
    print(
        json.dumps(
            {"best_lr": result.best_learning_rate, "best_hidden": result.best_hidden_size}
        )
    )
    return 0


def _variants(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robord",
        description="Noise-robust ordinal regression: data tools, training, and the experiment harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit a synthetic ordinal CSV")
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--margins", type=_floats, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("corrupt", help="add a noisy-label column to a CSV")
    _add_data_args(p)
    _add_noise_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("noise-matrix", help="build, invert, and print a noise matrix")
    p.add_argument("--k", type=int, default=None)
    _add_noise_args(p)
    p.add_argument("--invert", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_noise_matrix)

    p = sub.add_parser("train", help="train a single model on a CSV")
    _add_data_args(p)
    _add_noise_args(p)
    _add_train_args(p)
    p.add_argument("--loss", choices=["ce", "imc"], default="ce")
    p.add_argument("--correction", choices=["none", "known", "estimated"], default="none")
    p.add_argument("--percentile", type=float, default=99.0)
    p.add_argument("--out", default=None, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate-noise", help="estimate a noise matrix from noisy labels")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--percentile", type=float, default=99.0)
    p.add_argument("--truth", default=None, help="matrix file to compare against")
    p.add_argument("--out", required=True)
    # calibration-oriented defaults for the probability head
    p.set_defaults(func=cmd_estimate_noise, hidden=(32, 32), lr=0.001, batch_size=256)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a CSV")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.set_defaults(func=cmd_evaluate)

    for cmd_name, func in (("experiment", cmd_experiment), ("grid-search", cmd_grid_search)):
        p = sub.add_parser(
            cmd_name,
            help="run the multi-trial protocol" if cmd_name == "experiment" else "5-fold CV over (lr, hidden)",
        )
        p.add_argument("--config", default=None, help="key=value file mirroring the flags")
        _add_data_args(p, require=False)
        p.add_argument("--n", type=int, default=2500, help="synthetic rows (when no --data)")
        p.add_argument("--d", type=int, default=2, help="synthetic features (when no --data)")
        _add_noise_args(p)
        _add_train_args(p)
        p.add_argument("--variants", type=_variants, default=VARIANTS)
        p.add_argument("--trials", type=int, default=20)
        p.add_argument("--train-fraction", type=float, default=0.8)
        p.add_argument("--percentile", type=float, default=99.0)
        if cmd_name == "experiment":
            p.add_argument("--out", default=None, help="report CSV path")
        else:
            p.add_argument("--loss", choices=["ce", "imc"], default="ce")
            p.add_argument("--lr-grid", type=_floats, default=(0.001, 0.003, 0.01))
            p.add_argument("--hidden-grid", type=_ints, default=(16, 64, 128))
        p.set_defaults(func=func)
    return parser


def _config_tokens(path: str) -> list[str]:
    """Turn a key=value config file into argv tokens (user flags win)."""
    tokens = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}: line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
        else:
            tokens.extend([flag, value])
    return tokens


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("experiment", "grid-search") and "--config" in argv:
        config_path = argv[argv.index("--config") + 1]
        argv = [argv[0], *_config_tokens(config_path), *argv[1:]]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RobordError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
