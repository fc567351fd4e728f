"""End-to-end command tests through main(argv)."""

import hashlib
import json

import pytest

from concurve.cli import main, replay_from_manifest


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def gen_small_toy2(tmp_path, name="toy2.csv", n=300, seed=1):
    path = tmp_path / name
    assert main(["gen", "toy2", "--n", str(n), "--seed", str(seed),
                 "--out", str(path)]) == 0
    return path


class TestGen:
    def test_toy2_schema(self, tmp_path):
        path = gen_small_toy2(tmp_path)
        header = path.read_text().splitlines()[0]
        assert header == "x1,x2,y,split"

    def test_same_flags_identical_hash(self, tmp_path):
        a = gen_small_toy2(tmp_path, "a.csv")
        b = gen_small_toy2(tmp_path, "b.csv")
        assert sha(a) == sha(b)

    def test_rho_outside_published_settings_rejected(self, tmp_path, capsys):
        code = main(["gen", "toy1", "--rho", "0.5",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "rho" in capsys.readouterr().err

    def test_rho_free_allows_it(self, tmp_path):
        code = main(["gen", "toy1", "--rho", "0.5", "--rho-free", "--n", "200",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 0

    def test_unknown_generator_exits_with_usage(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "iris", "--out", str(tmp_path / "x.csv")])
        assert exc.value.code == 2

    def test_manifest_written(self, tmp_path):
        path = gen_small_toy2(tmp_path)
        manifest = json.loads((tmp_path / "toy2.csv.manifest.json").read_text())
        assert manifest["status"] == "completed"
        assert manifest["command"] == "gen"
        assert manifest["dataset"]["sha256"] == sha(path)


TRAIN_ARGS = ["--epochs", "2", "--batch-size", "64", "--seed", "3"]


class TestTrain:
    def test_emits_all_artifacts(self, tmp_path):
        data = gen_small_toy2(tmp_path)
        out = tmp_path / "run"
        assert main(["train", str(data), "--out-dir", str(out),
                     "--lambda", "0.1", *TRAIN_ARGS]) == 0
        for name in ("report.csv", "checkpoint.json", "importance.csv",
                     "corr_features.csv", "corr_contributions.csv",
                     "shapes.csv", "manifest.json"):
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "completed"
        assert len(manifest["produced"]) == 6

    def test_negative_lambda_rejected(self, tmp_path, capsys):
        data = gen_small_toy2(tmp_path)
        code = main(["train", str(data), "--out-dir", str(tmp_path / "r"),
                     "--lambda", "-1"])
        assert code == 2

    def test_preset_config_conflict(self, tmp_path):
        data = gen_small_toy2(tmp_path)
        cfg = tmp_path / "train.cfg"
        cfg.write_text("lr=0.001\n")
        code = main(["train", str(data), "--out-dir", str(tmp_path / "r"),
                     "--preset", "toy", "--config", str(cfg)])
        assert code == 2

    def test_shape_grid_rows(self, tmp_path):
        data = gen_small_toy2(tmp_path)
        out = tmp_path / "run"
        main(["train", str(data), "--out-dir", str(out), *TRAIN_ARGS])
        lines = (out / "shapes.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 2 * 256  # header + 256 rows per feature

    def test_byte_identical_reruns(self, tmp_path):
        data = gen_small_toy2(tmp_path)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        flags = ["--lambda", "0.05", *TRAIN_ARGS]
        main(["train", str(data), "--out-dir", str(out1), *flags])
        main(["train", str(data), "--out-dir", str(out2), *flags])
        for name in ("report.csv", "checkpoint.json", "importance.csv",
                     "corr_features.csv", "corr_contributions.csv", "shapes.csv"):
            assert sha(out1 / name) == sha(out2 / name), name

    def test_manifest_marks_failed_run(self, tmp_path):
        # evaluation split is empty -> fit fails after the manifest is written
        path = tmp_path / "train_only.csv"
        rows = "\n".join(f"{i * 0.01},{i * 0.02},train" for i in range(50))
        path.write_text("x1,y,split\n" + rows + "\n")
        out = tmp_path / "run"
        code = main(["train", str(path), "--out-dir", str(out), *TRAIN_ARGS])
        assert code == 1
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "failed"
        assert manifest["error"]
        assert manifest["outputs"]  # planned inventory was recorded up front

    def test_replay_from_manifest(self, tmp_path):
        data = gen_small_toy2(tmp_path)
        out = tmp_path / "run"
        main(["train", str(data), "--out-dir", str(out), *TRAIN_ARGS])
        before = sha(out / "report.csv")
        assert replay_from_manifest(out / "manifest.json") == 0
        assert sha(out / "report.csv") == before


class TestSweep:
    def test_record_count_and_outputs(self, tmp_path):
        data = gen_small_toy2(tmp_path)
        out = tmp_path / "sweep"
        code = main(["sweep", str(data), "--out-dir", str(out),
                     "--lambdas", "3", "--seeds", "2", *TRAIN_ARGS])
        assert code == 0
        lines = (out / "records.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 6
        for name in ("tradeoff.csv", "verbose.csv", "tradeoff.svg",
                     "verbose.svg", "manifest.json"):
            assert (out / name).exists(), name

    def test_missing_file_exits_2(self, tmp_path, capsys):
        code = main(["sweep", str(tmp_path / "nope.csv"),
                     "--out-dir", str(tmp_path / "s")])
        assert code == 2
        assert "no such file" in capsys.readouterr().err

    def test_rerun_identical_csv_bytes(self, tmp_path):
        data = gen_small_toy2(tmp_path)
        flags = ["--lambdas", "2", "--seeds", "2", *TRAIN_ARGS]
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["sweep", str(data), "--out-dir", str(out1), *flags])
        main(["sweep", str(data), "--out-dir", str(out2), *flags])
        assert sha(out1 / "records.csv") == sha(out2 / "records.csv")
        assert sha(out1 / "tradeoff.csv") == sha(out2 / "tradeoff.csv")
        assert sha(out1 / "verbose.csv") == sha(out2 / "verbose.csv")
        assert sha(out1 / "tradeoff.svg") == sha(out2 / "tradeoff.svg")


class TestBench:
    def test_cell_table(self, tmp_path):
        out = tmp_path / "bench"
        code = main(["bench", "--features", "2,4,8", "--batches", "8,16",
                     "--reps", "2", "--out-dir", str(out)])
        assert code == 0
        lines = (out / "bench.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 6


class TestReport:
    def test_renders_svgs_for_train_run(self, tmp_path):
        data = gen_small_toy2(tmp_path)
        out = tmp_path / "run"
        main(["train", str(data), "--out-dir", str(out), *TRAIN_ARGS])
        assert main(["report", str(out)]) == 0
        for name in ("shapes.svg", "importance.svg", "corr_features.svg",
                     "corr_contributions.svg"):
            assert (out / name).exists(), name

    def test_empty_dir_is_usage_error(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", str(empty)]) == 2

    def test_missing_dir_is_usage_error(self, tmp_path):
        assert main(["report", str(tmp_path / "missing")]) == 2


class TestSeasonalPath:
    def test_gen_and_train_seasonal(self, tmp_path):
        data = tmp_path / "seasonal.csv"
        assert main(["gen", "seasonal", "--hours", "504", "--seed", "2",
                     "--shape", "smooth", "--out", str(data)]) == 0
        out = tmp_path / "run"
        code = main(["train", str(data), "--preset", "seasonal",
                     "--out-dir", str(out), "--epochs", "2"])
        assert code == 0
        corr = (out / "corr_contributions.csv").read_text().splitlines()
        assert corr[0] == "feature,t#0,t#1"
