import numpy as np
import pytest

from robord.data import SynthSpec
from robord.exceptions import ConfigInvalid, DimensionMismatch, EmptyInput, NonFiniteLoss
from robord.harness import (
    ExperimentPlan,
    Metrics,
    derive_seed,
    evaluate,
    grid_search,
    parse_variant,
    rank_report,
    report_csv,
    report_table,
    run_experiment,
)
from robord.model import RankLog
from robord.noise import NoiseSpec


def uniform_noise(rho, k):
    return NoiseSpec(kind="uniform", k=k, rho=(rho,) * k)


def tiny_plan(**overrides):
    defaults = dict(
        noise=uniform_noise(0.15, 3),
        synth=SynthSpec(n=120, k=3, seed=0),
        variants=("ce", "ce-kr"),
        trials=2,
        epochs=3,
        hidden_sizes=(),
        activation="linear",
        master_seed=0,
    )
    defaults.update(overrides)
    return ExperimentPlan(**defaults)


class StubModel:
    def __init__(self, offset):
        self.offset = offset

    def predict(self, X):
        return self.labels + self.offset

    def bind(self, dataset):
        self.labels = dataset.labels.copy()
        return self


class TestEvaluate:
    def make_dataset(self, labels, k):
        from robord.data import OrdinalDataset

        labels = np.asarray(labels)
        return OrdinalDataset(
            features=np.zeros((labels.size, 1)), labels=labels, k=k
        )

    def test_perfect_predictor(self):
        ds = self.make_dataset([1, 2, 3], 3)
        assert evaluate(StubModel(0).bind(ds), ds) == Metrics(0.0, 0.0)

    def test_off_by_one_everywhere(self):
        ds = self.make_dataset([1, 2, 3, 1], 4)
        assert evaluate(StubModel(1).bind(ds), ds) == Metrics(1.0, 1.0)

    def test_half_off_by_two(self):
        from robord.data import OrdinalDataset

        ds = OrdinalDataset(features=np.zeros((4, 1)), labels=np.array([1, 1, 2, 2]), k=4)

        class Half:
            def predict(self, X):
                return np.array([1, 3, 2, 4])

        m = evaluate(Half(), ds)
        assert m == Metrics(1.0, 0.5)

    def test_zero_one_never_exceeds_mae(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            labels = rng.integers(1, 5, 30)
            ds = self.make_dataset(labels, 6)

            class Noisy:
                def predict(self, X, rng=rng):
                    return np.clip(labels + rng.integers(-2, 3, labels.size), 1, 6)

            m = evaluate(Noisy(), ds)
            assert m.zero_one <= m.mae + 1e-15


class TestSeeds:
    def test_stable_values(self):
        a = derive_seed(0, "train", 3, "noisy", "ce")
        b = derive_seed(0, "train", 3, "noisy", "ce")
        assert a == b

    def test_components_matter(self):
        base = derive_seed(0, "train", 0, "clean", "ce")
        assert derive_seed(1, "train", 0, "clean", "ce") != base
        assert derive_seed(0, "split", 0, "clean", "ce") != base
        assert derive_seed(0, "train", 1, "clean", "ce") != base
        assert derive_seed(0, "train", 0, "noisy", "ce") != base
        assert derive_seed(0, "train", 0, "clean", "imc") != base


class TestVariants:
    def test_parse(self):
        assert parse_variant("ce") == ("ce", "none")
        assert parse_variant("ce-kr") == ("ce", "kr")
        assert parse_variant("imc-est") == ("imc", "est")

    def test_unknown_rejected(self):
        with pytest.raises(ConfigInvalid):
            parse_variant("mae")


class TestRankReport:
    def test_all_ordered(self):
        logs = [RankLog(total_updates=100, unordered_updates=0) for _ in range(3)]
        assert rank_report(logs) == "0.0 / 100"

    def test_mean_of_mixed_logs(self):
        logs = [
            RankLog(total_updates=100, unordered_updates=1),
            RankLog(total_updates=100, unordered_updates=0),
        ]
        assert rank_report(logs) == "0.5 / 100"

    def test_unordered_final_flagged(self):
        logs = [RankLog(total_updates=10, unordered_updates=2, final_ordered=False)]
        out = rank_report(logs)
        assert "UNORDERED" in out and "1/1" in out

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            rank_report([])


class TestRunExperiment:
    def test_tiny_run_collects_all_columns(self):
        report = run_experiment(tiny_plan())
        assert len(report.records) == 2
        for rec in report.records:
            for variant in ("ce", "ce-kr"):
                for col in (
                    "clean_mae",
                    "clean_zero_one",
                    "noisy_mae",
                    "noisy_zero_one",
                    "noisy_labels_mae",
                    "noisy_labels_zero_one",
                ):
                    assert (variant, col) in rec.values
                assert (variant, "clean") in rec.ranks
                assert (variant, "noisy") in rec.ranks
        assert not report.failures()
        assert report.wall_time > 0

    def test_byte_identical_reports_for_same_master_seed(self):
        a = report_csv(run_experiment(tiny_plan()))
        b = report_csv(run_experiment(tiny_plan()))
        assert a == b

    def test_master_seed_changes_results(self):
        a = report_csv(run_experiment(tiny_plan()))
        b = report_csv(run_experiment(tiny_plan(master_seed=1)))
        assert a != b

    def test_identity_noise_makes_correction_a_no_op(self):
        report = run_experiment(tiny_plan(noise=uniform_noise(0.0, 3)))
        for rec in report.records:
            for col in ("clean_mae", "noisy_mae", "noisy_labels_mae"):
                assert rec.values[("ce", col)] == rec.values[("ce-kr", col)]

    def test_single_trial_report_has_zero_std(self):
        report = run_experiment(tiny_plan(trials=1))
        csv_text = report_csv(report)
        row = next(
            line
            for line in csv_text.splitlines()
            if line.startswith("synth,ce,clean_mae,")
        )
        assert row.endswith(",0.0,1")

    def test_wall_time_not_in_report_file(self):
        report = run_experiment(tiny_plan(trials=1))
        assert "wall" not in report_csv(report)

    def test_estimated_variant_records_matrix_error(self):
        plan = tiny_plan(
            synth=SynthSpec(n=200, k=3, seed=0),
            variants=("ce-kr", "ce-est"),
            trials=1,
            epochs=4,
        )
        report = run_experiment(plan)
        assert "noisy" in report.records[0].est_error
        assert "clean" in report.records[0].est_error
        max_abs, frob = report.records[0].est_error["noisy"]
        assert 0.0 <= max_abs <= 1.0 and frob >= max_abs
        table = report_table(report)
        assert "estimated matrix max-entry error" in table

    def test_noise_dimension_checked(self):
        with pytest.raises(DimensionMismatch):
            run_experiment(tiny_plan(noise=uniform_noise(0.15, 4)))

    def test_trials_validated(self):
        with pytest.raises(ConfigInvalid):
            run_experiment(tiny_plan(trials=0))

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigInvalid):
            run_experiment(tiny_plan(variants=("ce", "nope")))


class TestReportFormats:
    def test_csv_structure(self):
        report = run_experiment(tiny_plan(trials=1))
        lines = report_csv(report).splitlines()
        assert lines[0].startswith("# plan dataset=synth")
        header_idx = next(i for i, l in enumerate(lines) if not l.startswith("#"))
        assert lines[header_idx] == "dataset,variant,column,mean,std,trials"
        data_rows = [l for l in lines[header_idx + 1 :] if l]
        assert all(l.split(",")[0] == "synth" for l in data_rows)
        assert any(",rank_noisy_total," in l for l in data_rows)

    def test_table_mentions_all_variants(self):
        report = run_experiment(tiny_plan(trials=1))
        table = report_table(report)
        assert "ce-kr" in table and "clean MAE" in table
        assert "rank (ce, noisy labels):" in table


class TestGridSearch:
    def test_single_cell_returned(self):
        plan = tiny_plan(trials=1)
        result = grid_search(plan, [0.01], [0], base="ce")
        assert result.best_learning_rate == 0.01
        assert result.best_hidden_size == 0
        assert len(result.scores) == 1

    def test_divergent_cell_excluded_with_diagnostic(self):
        plan = tiny_plan(trials=1, hidden_sizes=(4,), activation="relu")
        result = grid_search(plan, [0.01, 1e200], [4], base="ce")
        assert (1e200, 4) in result.excluded
        assert "NonFiniteLoss" in result.excluded[(1e200, 4)]
        assert (0.01, 4) in result.scores

    def test_best_cell_minimizes_score(self):
        plan = tiny_plan(trials=1)
        result = grid_search(plan, [0.003, 0.01], [0, 4], base="ce")
        best = (result.best_learning_rate, result.best_hidden_size)
        assert result.scores[best] == min(result.scores.values())

    def test_all_divergent_raises(self):
        plan = tiny_plan(trials=1, hidden_sizes=(4,), activation="relu")
        with pytest.raises(NonFiniteLoss):
            grid_search(plan, [1e200], [4], base="ce")

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigInvalid):
            grid_search(tiny_plan(), [], [16])
