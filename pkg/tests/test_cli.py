import io
import json
import os

import numpy as np
import pandas as pd
import pytest

from refocus.cli import run_ablation
from refocus.config import get_settings
from refocus.main import EXIT_CONFIG, EXIT_IO, EXIT_OK, build_parser, main
from refocus.models import ExperimentConfig


@pytest.fixture
def toy_config(write_config, toy_experiment):
    return write_config(toy_experiment)


def read_stdout_csv(capsys) -> pd.DataFrame:
    return pd.read_csv(io.StringIO(capsys.readouterr().out))


class TestTrain:
    def test_writes_artifacts(self, toy_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--config", str(toy_config), "--out", str(out)]) == EXIT_OK
        for name in ("checkpoint.json", "history.csv", "metrics.json", "timing.json", "pick_trace.json"):
            assert (out / name).is_file(), name
        row = read_stdout_csv(capsys).iloc[0]
        assert row["model"] == "refocus"
        assert row["val_mse"] > 0
        history = pd.read_csv(out / "history.csv")
        assert list(history.columns) == ["epoch", "train_loss", "val_mse", "val_mae"]
        assert 1 <= len(history) <= 2
        trace = json.loads((out / "pick_trace.json").read_text())
        assert len(trace["chosen_channel"]) == 5
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["test"] is not None and metrics["persistence_test"] is not None

    def test_same_seed_same_metrics(self, toy_config, tmp_path):
        for name in ("a", "b"):
            assert main(["train", "--config", str(toy_config), "--out", str(tmp_path / name)]) == EXIT_OK
        assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()
        assert (tmp_path / "a" / "checkpoint.json").read_bytes() == (tmp_path / "b" / "checkpoint.json").read_bytes()

    def test_unknown_key_is_config_error(self, write_config, toy_experiment, tmp_path, capsys):
        path = write_config({**toy_experiment, "learning_rate": 0.1}, name="bad.json")
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
        assert "learning_rate" in capsys.readouterr().err

    def test_out_of_range_value_names_key(self, write_config, toy_experiment, tmp_path, capsys):
        path = write_config({**toy_experiment, "beta": 1.5}, name="bad.json")
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
        assert "beta" in capsys.readouterr().err

    def test_missing_dataset_is_io_error(self, write_config, tmp_path):
        path = write_config({"dataset": str(tmp_path / "missing.csv"), "T": 8, "F": 4, "K": 3})
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "x")]) == EXIT_IO

    def test_series_too_short_is_config_error(self, write_csv, write_config, tmp_path):
        csv = write_csv(np.ones((2, 16)))
        path = write_config({"dataset": str(csv), "T": 8, "F": 4, "K": 3})
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "x")]) == EXIT_CONFIG


class TestEval:
    def test_persistence_on_constant_series(self, write_csv, write_config, tmp_path, capsys):
        csv = write_csv(np.full((2, 60), 7.0))
        path = write_config({"dataset": str(csv), "model": "persistence", "T": 8, "F": 4,
                             "D": 8, "Q": 8, "N": 1, "K": 3})
        out = tmp_path / "run"
        assert main(["train", "--config", str(path), "--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        assert main(["eval", "--config", str(path), "--checkpoint", str(out / "checkpoint.json")]) == EXIT_OK
        row = read_stdout_csv(capsys).iloc[0]
        assert row["split"] == "test"
        assert row["model"] == "persistence"
        assert row["mse"] == 0.0 and row["mae"] == 0.0

    def test_refocus_checkpoint_reproduces_val(self, toy_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--config", str(toy_config), "--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        metrics = json.loads((out / "metrics.json").read_text())
        assert main(["eval", "--config", str(toy_config), "--checkpoint", str(out / "checkpoint.json"),
                     "--split", "val", "--format", "json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["mse"] == pytest.approx(metrics["val"]["mse"], rel=1e-12)

    def test_corrupt_checkpoint(self, toy_config, tmp_path):
        bad = tmp_path / "ckpt.json"
        bad.write_text('{"magic": "nope"}')
        assert main(["eval", "--config", str(toy_config), "--checkpoint", str(bad)]) == EXIT_IO


class TestVerify:
    def test_ket_scope(self, tmp_path, capsys):
        assert main(["verify", "ket", "--out", str(tmp_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "assertions passed" in out
        report = json.loads((tmp_path / "verify.json").read_text())
        assert report["summary"]["all_passed"] is True

    def test_json_output(self, capsys):
        assert main(["verify", "gdecay", "--format", "json"]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["scope"] == "gdecay"
        assert report["summary"]["informational"] >= 1

    def test_gradcheck(self, capsys):
        assert main(["gradcheck"]) == EXIT_OK
        frame = read_stdout_csv(capsys)
        assert set(frame["check"]) == {"parameters", "input"}
        assert frame["passed"].all()


class TestSpectrum:
    def test_identity_transform(self, ett_csv, tmp_path, capsys):
        assert main(["spectrum", str(ett_csv), "--out", str(tmp_path)]) == EXIT_OK
        spectrum = pd.read_csv(tmp_path / "spectrum.csv")
        assert list(spectrum.columns) == ["channel", "f", "energy_before", "energy_after"]
        assert len(spectrum) == 7 * 51
        np.testing.assert_allclose(spectrum["energy_after"], spectrum["energy_before"])
        gap = read_stdout_csv(capsys)
        assert len(gap) == 7

    def test_lowpass_empties_mid_band(self, ett_csv, capsys):
        assert main(["spectrum", str(ett_csv), "--transform", "lowpass"]) == EXIT_OK
        gap = read_stdout_csv(capsys)
        assert (gap["mid_gap_after"] < 1e-12).all()
        assert (gap["mid_gap_before"] > 0).all()

    def test_ameo_json(self, ett_csv, capsys):
        assert main(["spectrum", str(ett_csv), "--transform", "ameo", "--K", "8", "--format", "json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["mid_gap"]) == 7
        dc = [r for r in payload["spectrum"] if r["f"] == 0]
        assert all(r["energy_after"] < r["energy_before"] for r in dc)

    def test_missing_input(self, tmp_path):
        assert main(["spectrum", str(tmp_path / "none.csv")]) == EXIT_IO

    def test_kernel_default_matches_model(self):
        args = build_parser().parse_args(["spectrum", "data.csv"])
        assert args.K == ExperimentConfig.model_fields["K"].default == 25


class TestSynth:
    ARGS = ["synth", "--channels", "3", "--length", "64", "--key-bin", "5", "--carriers", "0", "1"]

    def test_seeded_output_is_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert main(self.ARGS + ["--seed", "3", "--out", str(tmp_path / name)]) == EXIT_OK
        a = (tmp_path / "a" / "synth_shared_key.csv").read_bytes()
        assert a == (tmp_path / "b" / "synth_shared_key.csv").read_bytes()
        frame = pd.read_csv(tmp_path / "a" / "synth_shared_key.csv")
        assert list(frame.columns) == ["date", "ch0", "ch1", "ch2"]
        assert len(frame) == 64

    def test_stdout(self, capsys):
        assert main(self.ARGS + ["--snr", "0"]) == EXIT_OK
        frame = read_stdout_csv(capsys)
        np.testing.assert_array_equal(frame["ch2"], 0.0)

    def test_invalid_key_bin(self, capsys):
        assert main(["synth", "--length", "64", "--key-bin", "40"]) == EXIT_CONFIG
        assert "key_bin" in capsys.readouterr().err

    def test_seed_precedence(self, monkeypatch, capsys):
        def run(*extra):
            get_settings.cache_clear()
            assert main(self.ARGS + list(extra)) == EXIT_OK
            return capsys.readouterr().out

        flag_five = run("--seed", "5")
        flag_six = run("--seed", "6")
        monkeypatch.setenv("REFOCUS_SEED", "5")
        assert run() == flag_five
        assert run("--seed", "6") == flag_six
        assert flag_five != flag_six


class TestAblate:
    def test_selected_arms(self, write_config, toy_experiment, tmp_path, capsys):
        path = write_config({**toy_experiment, "max_epochs": 1, "seeds": [1, 2]})
        out = tmp_path / "ablate"
        assert main(["ablate", "--config", str(path), "--out", str(out),
                     "--arms", "neither", "ameo_only"]) == EXIT_OK
        frame = pd.read_csv(out / "ablation.csv")
        assert frame["arm"].tolist() == ["neither", "ameo_only"]
        assert frame["seeds"].astype(str).tolist() == ["1 2", "1 2"]
        rows = json.loads((out / "ablation.json").read_text())
        assert set(rows[0]["per_seed_val_mse"]) == {"1", "2"}

    def test_seed_flag_runs_single_seed(self, write_config, toy_experiment, tmp_path, capsys):
        path = write_config({**toy_experiment, "max_epochs": 1, "seeds": [1, 2, 3]})
        assert main(["ablate", "--config", str(path), "--out", str(tmp_path / "a"),
                     "--arms", "neither", "--seed", "9", "--format", "json"]) == EXIT_OK
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["seeds"] == [9]


@pytest.mark.slow
def test_ablation_ordering_on_shared_key():
    exp = ExperimentConfig.model_validate({
        "name": "ordering",
        "synth": {"kind": "shared_key", "channels": 4, "length": 1500, "key_bin": 150,
                  "carriers": [0, 1], "snr": 10.0},
        "T": 48, "F": 24, "D": 32, "Q": 16, "N": 1, "K": 12, "beta": 0.5,
        "lr": 1e-3, "batch_size": 32, "max_epochs": 15, "patience": 3,
    })
    rows = run_ablation(exp, [1, 2, 3], ["ameo+ket", "ket_only", "neither"])
    val = {row.arm: row.val_mse for row in rows}
    assert val["ameo+ket"] <= val["ket_only"] <= val["neither"]


ETTH1_SETTINGS = {"T": 96, "F": 96, "D": 128, "Q": 64, "N": 2, "K": 25, "beta": 0.5,
                  "lr": 1e-4, "batch_size": 32, "max_epochs": 20}


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get("REFOCUS_ETTH1"), reason="set REFOCUS_ETTH1 to the ETTh1.csv path")
def test_etth1_quantitative(write_config, tmp_path):
    def run(name, **extra):
        path = write_config({"dataset": os.environ["REFOCUS_ETTH1"], **ETTH1_SETTINGS, **extra},
                            name=f"{name}.json")
        assert main(["train", "--config", str(path), "--out", str(tmp_path / name)]) == EXIT_OK
        return json.loads((tmp_path / name / "metrics.json").read_text())

    refocus = run("refocus")
    linear = run("linear", model="linear")
    assert refocus["test"]["mse"] < 0.55
    assert refocus["test"]["mse"] < refocus["persistence_test"]["mse"]
    assert refocus["test"]["mse"] < linear["test"]["mse"]
