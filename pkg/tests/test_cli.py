import json

import numpy as np
import pytest

from robord.cli import main
from robord.data import load_csv
from robord.noise import load_noise_matrix


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def synth_csv(tmp_path, capsys):
    path = tmp_path / "data.csv"
    code, _, _ = run_cli(
        capsys, "synth", "--n", "200", "--k", "3", "--seed", "1", "--out", str(path)
    )
    assert code == 0
    return path


class TestSynthAndCorrupt:
    def test_synth_writes_csv(self, synth_csv):
        data = load_csv(synth_csv, label_column="label", k=3)
        assert data.n == 200 and data.d == 2

    def test_corrupt_adds_noisy_column(self, synth_csv, tmp_path, capsys):
        out = tmp_path / "noisy.csv"
        code, stdout, _ = run_cli(
            capsys,
            "corrupt",
            "--data", str(synth_csv),
            "--k", "3",
            "--rho", "0.2",
            "--seed", "3",
            "--out", str(out),
        )
        assert code == 0 and "corrupted" in stdout
        header = out.read_text().splitlines()[0]
        assert header.endswith("noisy_label")
        clean = load_csv(out, label_column="label", k=3)
        noisy = load_csv(out, label_column="noisy_label", k=3)
        assert np.any(clean.labels != noisy.labels)


class TestNoiseMatrixCommand:
    def test_build_invert_print(self, capsys):
        code, stdout, _ = run_cli(
            capsys, "noise-matrix", "--k", "4", "--rho", "0.15", "--invert"
        )
        assert code == 0
        assert "0.725000" in stdout
        assert "lipschitz_inflation=2.55" in stdout

    def test_save_and_reload(self, tmp_path, capsys):
        path = tmp_path / "m.txt"
        code, _, _ = run_cli(
            capsys, "noise-matrix", "--k", "3", "--rho", "0.1", "--out", str(path)
        )
        assert code == 0
        assert load_noise_matrix(path).k == 3

    def test_per_class_rates(self, capsys):
        code, stdout, _ = run_cli(
            capsys, "noise-matrix", "--k", "3", "--rho-per-class", "0.1,0.2,0.1"
        )
        assert code == 0
        assert "0.600000" in stdout  # middle-class diagonal

    def test_missing_k_is_machine_readable_error(self, capsys):
        code, _, stderr = run_cli(capsys, "noise-matrix", "--rho", "0.1")
        assert code == 1
        payload = json.loads(stderr)
        assert payload["error"] == "ConfigInvalid"


class TestTrainEvaluate:
    def test_train_then_evaluate_roundtrip(self, synth_csv, tmp_path, capsys):
        ckpt = tmp_path / "model.ckpt"
        code, stdout, _ = run_cli(
            capsys,
            "train",
            "--data", str(synth_csv),
            "--k", "3",
            "--loss", "ce",
            "--epochs", "30",
            "--hidden", "0",
            "--activation", "linear",
            "--out", str(ckpt),
        )
        assert code == 0
        payload = json.loads(stdout)
        assert payload["train_mae"] <= 0.2
        assert ckpt.exists()

        code, stdout, _ = run_cli(
            capsys, "evaluate", "--model", str(ckpt), "--data", str(synth_csv), "--k", "3"
        )
        assert code == 0
        result = json.loads(stdout)
        assert result["n"] == 200
        assert result["zero_one"] <= result["mae"]

    def test_train_with_known_correction(self, synth_csv, capsys):
        code, stdout, _ = run_cli(
            capsys,
            "train",
            "--data", str(synth_csv),
            "--k", "3",
            "--correction", "known",
            "--rho", "0.15",
            "--epochs", "5",
        )
        assert code == 0
        assert "rank" in json.loads(stdout)

    def test_bad_file_fails_cleanly(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x,label\noops,1\n")
        code, _, stderr = run_cli(
            capsys, "train", "--data", str(path), "--k", "2", "--epochs", "1"
        )
        assert code == 1
        assert json.loads(stderr)["error"] == "ParseError"


class TestEstimateNoise:
    def test_writes_matrix_with_sidecar(self, tmp_path, capsys):
        data_path = tmp_path / "d.csv"
        run_cli(capsys, "synth", "--n", "300", "--k", "3", "--seed", "2", "--out", str(data_path))
        noisy_path = tmp_path / "noisy.csv"
        run_cli(
            capsys, "corrupt", "--data", str(data_path), "--k", "3",
            "--rho", "0.15", "--seed", "4", "--out", str(noisy_path),
        )
        truth_path = tmp_path / "truth.txt"
        run_cli(capsys, "noise-matrix", "--k", "3", "--rho", "0.15", "--out", str(truth_path))
        est_path = tmp_path / "est.txt"
        code, stdout, _ = run_cli(
            capsys,
            "estimate-noise",
            "--data", str(noisy_path),
            "--label-column", "noisy_label",
            "--k", "3",
            "--epochs", "40",
            "--truth", str(truth_path),
            "--out", str(est_path),
        )
        assert code == 0
        payload = json.loads(stdout)
        assert "max_abs_vs_truth" in payload
        text = est_path.read_text()
        assert text.startswith("K 3\n")
        assert "# percentile=99 seed=0 max_abs_vs_truth=" in text
        assert load_noise_matrix(est_path).k == 3


class TestExperimentCommand:
    def test_experiment_writes_report(self, tmp_path, capsys):
        out = tmp_path / "report.csv"
        code, stdout, _ = run_cli(
            capsys,
            "experiment",
            "--n", "120", "--k", "3",
            "--variants", "ce,ce-kr",
            "--trials", "1",
            "--epochs", "3",
            "--hidden", "0",
            "--seed", "0",
            "--out", str(out),
        )
        assert code == 0
        assert "clean MAE" in stdout and "wall time" in stdout
        lines = out.read_text().splitlines()
        assert "dataset,variant,column,mean,std,trials" in lines

    def test_config_file_mirrors_flags(self, tmp_path, capsys):
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        cfg = tmp_path / "plan.cfg"
        cfg.write_text(
            "# tiny smoke plan\n"
            "n = 120\n"
            "k = 3\n"
            "variants = ce\n"
            "trials = 1\n"
            "epochs = 3\n"
            "hidden = 0\n"
            "seed = 0\n"
        )
        code_a, _, _ = run_cli(capsys, "experiment", "--config", str(cfg), "--out", str(out_a))
        code_b, _, _ = run_cli(
            capsys,
            "experiment",
            "--n", "120", "--k", "3", "--variants", "ce", "--trials", "1",
            "--epochs", "3", "--hidden", "0", "--seed", "0", "--out", str(out_b),
        )
        assert code_a == 0 and code_b == 0
        assert out_a.read_text() == out_b.read_text()

    def test_flags_override_config(self, tmp_path, capsys):
        cfg = tmp_path / "plan.cfg"
        cfg.write_text("n = 120\nk = 3\nvariants = ce\ntrials = 1\nepochs = 3\nhidden = 0\n")
        out = tmp_path / "r.csv"
        code, _, _ = run_cli(
            capsys, "experiment", "--config", str(cfg), "--trials", "2", "--out", str(out)
        )
        assert code == 0
        assert ",clean_mae," in out.read_text()
        row = next(l for l in out.read_text().splitlines() if ",clean_mae," in l)
        assert row.rstrip().endswith(",2")  # two trials ran

    def test_grid_search_command(self, capsys):
        code, stdout, _ = run_cli(
            capsys,
            "grid-search",
            "--n", "120", "--k", "3",
            "--trials", "1",
            "--epochs", "3",
            "--loss", "ce",
            "--lr-grid", "0.01",
            "--hidden-grid", "0",
        )
        assert code == 0
        assert json.loads(stdout.splitlines()[-1]) == {"best_lr": 0.01, "best_hidden": 0}
