import json

import numpy as np
import pytest
from click.testing import CliRunner

from pyrfeat import cli as climod
from pyrfeat import deepfeat, fusion
from pyrfeat.cli import cli, load_config, main
from pyrfeat.errors import ValidationError


@pytest.fixture
def runner():
    return CliRunner()


def write_config(path, dataset_root, **overrides):
    cfg = {
        "seed": 7,
        "dataset": {"root": str(dataset_root)},
        "deep_stub": True,
        "nca": {"iters": 5},
        "k": 20,
        "schemes": ["50:50"],
        "repeats": 2,
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def config_path(tmp_path, dataset_dir):
    return write_config(tmp_path / "config.json", dataset_dir)


class TestConfig:
    def test_defaults_fill_in(self, config_path):
        cfg = load_config(config_path)
        assert cfg["seed"] == 7
        assert cfg["lpq_window"] == 5
        assert cfg["nca"]["iters"] == 5
        assert cfg["nca"]["step"] == 1.0
        assert cfg["svm"]["C"] == 1.0

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 1, "typo_key": 2}))
        with pytest.raises(ValidationError, match="typo_key"):
            load_config(path)

    def test_unknown_nested_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 1, "nca": {"momentum": 0.9}}))
        with pytest.raises(ValidationError, match="nca.momentum"):
            load_config(path)

    def test_seed_mandatory(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"k": 10}))
        with pytest.raises(ValidationError, match="seed"):
            load_config(path)

    def test_seed_must_be_int(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": "7"}))
        with pytest.raises(ValidationError, match="integer"):
            load_config(path)

    def test_bad_scheme_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 1, "schemes": ["85:15"]}))
        with pytest.raises(ValidationError, match="unknown scheme"):
            load_config(path)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{nope")
        with pytest.raises(ValidationError, match="JSON"):
            load_config(path)

    def test_loads_do_not_share_state(self, tmp_path):
        a = tmp_path / "a.json"
        a.write_text(json.dumps({"seed": 1, "nca": {"iters": 3}}))
        b = tmp_path / "b.json"
        b.write_text(json.dumps({"seed": 2}))
        cfg_a = load_config(a)
        cfg_b = load_config(b)
        assert cfg_a["nca"]["iters"] == 3
        assert cfg_b["nca"]["iters"] == 100


class TestExtract:
    def test_writes_matrix(self, runner, tmp_path, config_path):
        out = tmp_path / "m.phfm"
        result = runner.invoke(
            cli, ["extract", "-c", str(config_path), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        matrix = fusion.load_matrix(out)
        assert matrix.values.shape == (8, fusion.TOTAL_COLUMNS)
        assert matrix.provenance["config"]["seed"] == 7
        assert "jobs" not in matrix.provenance["config"]

    def test_csv_flag_adds_export(self, runner, tmp_path, config_path):
        out = tmp_path / "m.phfm"
        result = runner.invoke(
            cli, ["extract", "-c", str(config_path), "--out", str(out), "--csv"]
        )
        assert result.exit_code == 0, result.output
        header = out.with_suffix(".csv").read_text().splitlines()[0]
        assert header.startswith("id,label,c0,")
        assert header.endswith(f"c{fusion.TOTAL_COLUMNS - 1}")

    def test_cache_env_var(self, runner, tmp_path, config_path, monkeypatch):
        cache = tmp_path / "cache"
        monkeypatch.setenv(climod.CACHE_ENV, str(cache))
        result = runner.invoke(
            cli, ["extract", "-c", str(config_path), "--out", str(tmp_path / "m.phfm")]
        )
        assert result.exit_code == 0, result.output
        assert len(list(cache.glob("*.npy"))) == 8

    def test_lock_released_after_run(self, runner, tmp_path, config_path):
        out = tmp_path / "m.phfm"
        result = runner.invoke(
            cli, ["extract", "-c", str(config_path), "--out", str(out)]
        )
        assert result.exit_code == 0
        assert not (tmp_path / climod.LOCK_NAME).exists()


@pytest.fixture
def matrix_path(runner, tmp_path, config_path):
    out = tmp_path / "m.phfm"
    result = runner.invoke(cli, ["extract", "-c", str(config_path), "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


class TestSelect:
    def test_writes_selection_artifacts(self, runner, tmp_path, config_path, matrix_path):
        out_dir = tmp_path / "sel"
        result = runner.invoke(
            cli,
            ["select", "-c", str(config_path), "--matrix", str(matrix_path),
             "--out-dir", str(out_dir)],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads((out_dir / "selected.json").read_text())
        assert len(payload["selected_columns"]) == 20
        assert payload["k"] == 20
        assert payload["surviving_columns"] + payload["eliminated_columns"] == fusion.TOTAL_COLUMNS
        assert len(payload["objective_trace"]) >= 1
        header = (out_dir / "selection.csv").read_text().splitlines()[0]
        assert header == "column,source,level,channel,local_index,weight,rank"

    def test_k_override_and_too_large(self, runner, tmp_path, config_path, matrix_path):
        out_dir = tmp_path / "sel2"
        result = runner.invoke(
            cli,
            ["select", "-c", str(config_path), "--matrix", str(matrix_path),
             "--out-dir", str(out_dir), "--k", "5"],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads((out_dir / "selected.json").read_text())
        assert len(payload["selected_columns"]) == 5

        big = tmp_path / "sel3"
        result = runner.invoke(
            cli,
            ["select", "-c", str(config_path), "--matrix", str(matrix_path),
             "--out-dir", str(big), "--k", str(fusion.TOTAL_COLUMNS)],
        )
        assert result.exit_code != 0
        assert not (big / "selected.json").exists()
        assert not list(big.glob("*.tmp"))

    def test_zero_deep_columns_never_selected(self, runner, tmp_path, config_path, matrix_path):
        out_dir = tmp_path / "sel4"
        runner.invoke(
            cli,
            ["select", "-c", str(config_path), "--matrix", str(matrix_path),
             "--out-dir", str(out_dir)],
        )
        payload = json.loads((out_dir / "selected.json").read_text())
        deep = set(fusion.FeatureLayout().deep_indices().tolist())
        assert not deep & set(payload["selected_columns"])

    def test_locked_dir_rejected(self, runner, tmp_path, config_path, matrix_path):
        out_dir = tmp_path / "sel5"
        out_dir.mkdir()
        (out_dir / climod.LOCK_NAME).touch()
        result = runner.invoke(
            cli,
            ["select", "-c", str(config_path), "--matrix", str(matrix_path),
             "--out-dir", str(out_dir)],
        )
        assert result.exit_code != 0
        assert isinstance(result.exception, ValidationError)
        assert "locked" in str(result.exception)


@pytest.fixture
def selection_dir(runner, tmp_path, config_path, matrix_path):
    out_dir = tmp_path / "sel"
    result = runner.invoke(
        cli,
        ["select", "-c", str(config_path), "--matrix", str(matrix_path),
         "--out-dir", str(out_dir)],
    )
    assert result.exit_code == 0, result.output
    return out_dir


class TestEvaluate:
    def test_writes_report_set(self, runner, tmp_path, config_path, matrix_path, selection_dir):
        out_dir = tmp_path / "eval"
        result = runner.invoke(
            cli,
            ["evaluate", "-c", str(config_path), "--matrix", str(matrix_path),
             "--selection", str(selection_dir / "selected.json"),
             "--out-dir", str(out_dir)],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((out_dir / "report.json").read_text())
        assert report["n_samples"] == 8
        assert report["n_features_used"] == 20
        assert report["fold_safe"] is False
        assert list(report["schemes"]) == ["50:50"]
        block = report["schemes"]["50:50"]
        assert block["repeats"] == 2
        assert set(block["primary"]["metrics"]) == set(
            ("sensitivity", "specificity", "accuracy", "f1", "gmean")
        )
        assert block["aggregate"]["accuracy"]["std"] >= 0.0
        csv_lines = (out_dir / "report.csv").read_text().splitlines()
        assert csv_lines[0] == "scheme,sensitivity,specificity,accuracy,f1,gmean"
        assert csv_lines[1].startswith("50:50,")
        confusion = (out_dir / "confusion_50-50.csv").read_text().splitlines()
        assert confusion[0] == ",pred_benign,pred_malign"
        assert confusion[1].startswith("true_benign,")

    def test_layout_mismatch_rejected(self, runner, tmp_path, config_path, matrix_path, selection_dir):
        tampered = tmp_path / "tampered.json"
        payload = json.loads((selection_dir / "selected.json").read_text())
        payload["layout_hash"] = "0" * 16
        tampered.write_text(json.dumps(payload))
        result = runner.invoke(
            cli,
            ["evaluate", "-c", str(config_path), "--matrix", str(matrix_path),
             "--selection", str(tampered), "--out-dir", str(tmp_path / "eval2")],
        )
        assert result.exit_code != 0
        assert "layout" in str(result.exception)

    def test_fold_safe_runs(self, runner, tmp_path, config_path, matrix_path, selection_dir):
        out_dir = tmp_path / "eval3"
        result = runner.invoke(
            cli,
            ["evaluate", "-c", str(config_path), "--matrix", str(matrix_path),
             "--selection", str(selection_dir / "selected.json"),
             "--out-dir", str(out_dir), "--fold-safe", "--repeats", "1"],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((out_dir / "report.json").read_text())
        assert report["fold_safe"] is True
        assert report["n_features_used"] is None


class TestRunAll:
    def test_full_artifact_set(self, runner, tmp_path, config_path):
        out_dir = tmp_path / "run"
        result = runner.invoke(
            cli, ["all", "-c", str(config_path), "--out-dir", str(out_dir)]
        )
        assert result.exit_code == 0, result.output
        for name in ("matrix.phfm", "selection.csv", "selected.json",
                     "report.json", "report.csv", "confusion_50-50.csv"):
            assert (out_dir / name).exists(), name
        assert not (out_dir / climod.LOCK_NAME).exists()

    def test_plot_writes_png(self, runner, tmp_path, config_path):
        pytest.importorskip("matplotlib")
        out_dir = tmp_path / "runp"
        result = runner.invoke(
            cli, ["all", "-c", str(config_path), "--out-dir", str(out_dir), "--plot"]
        )
        assert result.exit_code == 0, result.output
        assert (out_dir / "report.png").stat().st_size > 0

    def test_rerun_is_byte_identical(self, runner, tmp_path, config_path):
        first = tmp_path / "run1"
        second = tmp_path / "run2"
        for out_dir in (first, second):
            result = runner.invoke(
                cli, ["all", "-c", str(config_path), "--out-dir", str(out_dir)]
            )
            assert result.exit_code == 0, result.output
        for name in ("matrix.phfm", "selection.csv", "selected.json",
                     "report.json", "report.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


class TestStubDeep:
    def test_round_trips_through_reader(self, runner, tmp_path, dataset_dir):
        out = tmp_path / "stub.phfd"
        result = runner.invoke(
            cli, ["stub-deep", "--root", str(dataset_dir), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        store = deepfeat.read_store(out)
        assert len(store) == 8 * 4
        assert store.metadata.get("stub") is True

    def test_csv_variant(self, runner, tmp_path, dataset_dir):
        out = tmp_path / "stub.csv"
        result = runner.invoke(
            cli, ["stub-deep", "--root", str(dataset_dir), "--out", str(out), "--csv"]
        )
        assert result.exit_code == 0, result.output
        assert out.read_text().splitlines()[0].startswith("id,level,f0,")
        assert len(deepfeat.read_store(out)) == 32


class TestDescribe:
    def test_histogram_masses(self, runner, tmp_path, dataset_dir):
        image = sorted(dataset_dir.glob("*/*.png"))[0]
        out = tmp_path / "hist.csv"
        result = runner.invoke(cli, ["describe", str(image), "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "id,level,channel,descriptor,bin,count"
        rows = [line.split(",") for line in lines[1:]]
        mass = {}
        for _, level, channel, desc, _, count in rows:
            mass[(int(level), channel, desc)] = mass.get(
                (int(level), channel, desc), 0
            ) + int(count)
        side = {0: 64, 1: 32, 2: 16, 3: 8}
        for level, n in side.items():
            for channel in "RGB":
                assert mass[(level, channel, "lpq")] == (n - 4) ** 2
                assert mass[(level, channel, "lbp")] == (n - 2) ** 2

    def test_dump_pyramid(self, runner, tmp_path, dataset_dir):
        image = sorted(dataset_dir.glob("*/*.png"))[0]
        out = tmp_path / "hist.csv"
        dump = tmp_path / "planes"
        result = runner.invoke(
            cli,
            ["describe", str(image), "--out", str(out), "--dump-pyramid", str(dump)],
        )
        assert result.exit_code == 0, result.output
        index = json.loads((dump / "pyramid_index.json").read_text())
        assert len(index) == 4 * 3
        for entry in index:
            plane = np.load(dump / entry["file"])
            assert plane.dtype == np.float64
            expected = 64 // (2 ** entry["level"])
            assert plane.shape == (expected, expected)


class TestExitCodes:
    def run_main(self, monkeypatch, argv):
        monkeypatch.setattr("sys.argv", ["pyrfeat"] + argv)
        try:
            main()
        except SystemExit as exc:
            return exc.code or 0
        return 0

    def test_success_is_zero(self, monkeypatch, tmp_path, config_path):
        code = self.run_main(
            monkeypatch,
            ["extract", "-c", str(config_path), "--out", str(tmp_path / "m.phfm")],
        )
        assert code == 0

    def test_usage_error_is_two(self, monkeypatch, config_path):
        code = self.run_main(monkeypatch, ["extract", "-c", str(config_path)])
        assert code == 2

    def test_validation_error_is_two(self, monkeypatch, tmp_path, dataset_dir):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"dataset": {"root": str(dataset_dir)}}))
        code = self.run_main(
            monkeypatch,
            ["extract", "-c", str(bad), "--out", str(tmp_path / "m.phfm")],
        )
        assert code == 2

    def test_io_error_is_one(self, monkeypatch, tmp_path, dataset_dir):
        cfg = write_config(
            tmp_path / "c.json", dataset_dir,
            deep_stub=False, deep_store="/nonexistent/deep.phfd",
        )
        code = self.run_main(
            monkeypatch,
            ["extract", "-c", str(cfg), "--out", str(tmp_path / "m.phfm")],
        )
        assert code == 1

    def test_lock_conflict_is_two(self, monkeypatch, tmp_path, config_path):
        (tmp_path / climod.LOCK_NAME).touch()
        code = self.run_main(
            monkeypatch,
            ["extract", "-c", str(config_path), "--out", str(tmp_path / "m.phfm")],
        )
        assert code == 2
