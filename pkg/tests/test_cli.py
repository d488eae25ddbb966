import csv
import hashlib
import json

import numpy as np
import pytest

from hsicd import datacube
from hsicd.cli import main
from hsicd.evaluation import auc, roc_curve
from hsicd.models import BinaryMask, ChangeMap

SMALL_SCENE = ["--height", "20", "--width", "20", "--bands", "6", "--regions", "2", "--region-size", "4", "--seed", "3"]


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("HSICD_LOG_LEVEL", "HSICD_WORKERS", "HSICD_CONFIG_PATH", "HSICD_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def digest(*paths):
    return [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]


@pytest.fixture
def scene(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--out-dir", str(tmp_path / "scene"), *SMALL_SCENE)
    assert code == 0
    return tmp_path / "scene"


class TestSynth:
    def test_writes_scene_and_summary(self, tmp_path, capsys):
        code, out, _ = run(capsys, "synth", "--out-dir", str(tmp_path / "s"), *SMALL_SCENE)
        assert code == 0
        summary = json.loads(out)
        assert (summary["height"], summary["width"], summary["bands"], summary["seed"]) == (20, 20, 6, 3)
        assert summary["changed_pixels"] == 2 * 16
        assert summary["changed_pixels"] == datacube.load_mask(tmp_path / "s" / "mask").changed_count
        assert set(summary["files"]) == {"t1", "t2", "mask"}

    def test_reruns_are_byte_identical(self, tmp_path, capsys):
        outputs = []
        for name in ("a", "b"):
            _, out, _ = run(capsys, "synth", "--out-dir", str(tmp_path / name), *SMALL_SCENE)
            outputs.append(digest(*(tmp_path / name / f for f in ("t1.bin", "t2.bin", "mask.bin", "t1.json"))))
        assert outputs[0] == outputs[1]

    def test_no_change_regions(self, tmp_path, capsys):
        code, out, _ = run(capsys, "synth", "--out-dir", str(tmp_path / "s"), "--height", "8", "--width", "8", "--regions", "0")
        assert code == 0
        assert json.loads(out)["changed_pixels"] == 0
        assert datacube.load_mask(tmp_path / "s" / "mask").changed_count == 0

    def test_default_output_dir(self, tmp_path, capsys):
        code, _, _ = run(capsys, "synth", "--height", "8", "--width", "8", "--regions", "0")
        assert code == 0
        assert (tmp_path / "runs" / "scene" / "t1.json").exists()


class TestDetect:
    def test_ad_on_identical_cubes_is_zero(self, scene, tmp_path, capsys):
        t1 = str(scene / "t1")
        code, out, _ = run(capsys, "detect", "--t1", t1, "--t2", t1, "--out", str(tmp_path / "ad"), "--method", "ad")
        assert code == 0
        assert not datacube.load_change_map(tmp_path / "ad").score.any()
        assert json.loads(out)["score_max"] == 0.0

    def test_jmpt_report_and_determinism(self, scene, tmp_path, capsys):
        args = ["detect", "--t1", str(scene / "t1"), "--t2", str(scene / "t2")]
        code, first_out, _ = run(capsys, *args, "--out", str(tmp_path / "r1" / "score"))
        assert code == 0
        _, second_out, _ = run(capsys, *args, "--out", str(tmp_path / "r1" / "score"))
        assert first_out == second_out
        change_map = datacube.load_change_map(tmp_path / "r1" / "score")
        assert change_map.shape == (20, 20)

        first_bytes = (tmp_path / "r1" / "score.bin").read_bytes()
        run(capsys, *args, "--out", str(tmp_path / "r2" / "score"))
        assert (tmp_path / "r2" / "score.bin").read_bytes() == first_bytes

        report = json.loads((tmp_path / "r1" / "score.report.json").read_text())
        assert report["method"] == "jmpt"
        assert report["config"]["patch_size"] == 3
        assert report["config"]["fusion"] == {"a": 0.5, "b": 0.5}
        assert report["score_min"] == pytest.approx(float(change_map.score.min()), abs=1e-6)
        assert report["wall_time_s"] >= 0

    def test_flags_override_config_file(self, scene, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"method": "ed", "patch_size": 5}))
        code, _, _ = run(
            capsys, "detect", "--config", str(cfg), "--t1", str(scene / "t1"), "--t2", str(scene / "t2"),
            "--out", str(tmp_path / "score"), "--method", "aad",
        )
        assert code == 0
        report = json.loads((tmp_path / "score.report.json").read_text())
        assert report["method"] == "aad"
        assert report["config"]["patch_size"] == 5

    def test_png_and_mask_exports(self, scene, tmp_path, capsys):
        code, out, _ = run(
            capsys, "detect", "--t1", str(scene / "t1"), "--t2", str(scene / "t2"), "--out", str(tmp_path / "score"),
            "--method", "ed", "--png", str(tmp_path / "score.png"), "--mask-out", str(tmp_path / "pred"),
            "--binarize", "percentile", "--q", "90",
        )
        assert code == 0
        outputs = json.loads(out)["outputs"]
        assert (tmp_path / "score.png").exists()
        predicted = datacube.load_mask(outputs["mask"])
        assert predicted.changed_count == 40

    def test_missing_input_is_a_data_error(self, tmp_path, capsys):
        code, out, err = run(capsys, "detect", "--t1", "nope", "--t2", "nope", "--out", str(tmp_path / "x"))
        assert code == 2
        assert out == ""
        error = json.loads(err.strip().splitlines()[-1])
        assert error["error"] == "data"
        assert "nope.json" in error["message"]

    def test_unwritable_preview_is_a_data_error(self, scene, tmp_path, capsys):
        (tmp_path / "blocker").write_text("")
        code, out, err = run(
            capsys, "detect", "--t1", str(scene / "t1"), "--t2", str(scene / "t2"), "--out", str(tmp_path / "score"),
            "--method", "ad", "--png", str(tmp_path / "blocker" / "score.png"),
        )
        assert code == 2
        assert out == ""
        error = json.loads(err.strip().splitlines()[-1])
        assert error["error"] == "data"
        assert "blocker" in error["message"]

    def test_unwritable_report_is_a_data_error(self, scene, tmp_path, capsys):
        (tmp_path / "score.report.json").mkdir()
        code, _, err = run(
            capsys, "detect", "--t1", str(scene / "t1"), "--t2", str(scene / "t2"), "--out", str(tmp_path / "score"),
            "--method", "ad",
        )
        assert code == 2
        assert json.loads(err.strip().splitlines()[-1])["error"] == "data"

    def test_dimension_mismatch(self, scene, tmp_path, capsys):
        run(capsys, "synth", "--out-dir", str(tmp_path / "other"), "--height", "10", "--width", "10", "--bands", "6", "--regions", "0")
        code, _, err = run(capsys, "detect", "--t1", str(scene / "t1"), "--t2", str(tmp_path / "other" / "t2"), "--out", str(tmp_path / "x"))
        assert code == 2
        assert "co-registered" in err

    def test_invalid_config_is_a_usage_error(self, scene, tmp_path, capsys):
        code, _, err = run(
            capsys, "detect", "--t1", str(scene / "t1"), "--t2", str(scene / "t2"), "--out", str(tmp_path / "x"),
            "--fusion-a", "0", "--fusion-b", "0",
        )
        assert code == 1
        assert json.loads(err.strip().splitlines()[-1])["error"] == "config"


class TestEval:
    def write_case(self, tmp_path, scores, labels):
        datacube.save_change_map(ChangeMap(np.array(scores, dtype=float)), tmp_path / "scores")
        datacube.save_mask(BinaryMask(np.array(labels, dtype=np.uint8)), tmp_path / "mask")

    def test_perfect_scores(self, tmp_path, capsys):
        self.write_case(tmp_path, [[0.0, 0.25], [0.5, 1.0]], [[0, 0], [1, 1]])
        code, out, _ = run(capsys, "eval", "--scores", str(tmp_path / "scores"), "--mask", str(tmp_path / "mask"),
                           "--out-prefix", str(tmp_path / "ev"))
        assert code == 0
        assert json.loads(out)["auc"] == 1.0
        metrics = json.loads((tmp_path / "ev.metrics.json").read_text())
        assert metrics["auc"] == 1.0
        assert metrics["separability"]["changed"]["p0"] == 0.5
        with open(tmp_path / "ev.roc.csv") as f:
            assert next(csv.reader(f)) == ["threshold", "fpr", "tpr"]

    def test_diagonal(self, tmp_path, capsys):
        self.write_case(tmp_path, [[0.3, 0.3], [0.3, 0.3]], [[0, 1], [1, 0]])
        run(capsys, "eval", "--scores", str(tmp_path / "scores"), "--mask", str(tmp_path / "mask"),
            "--out-prefix", str(tmp_path / "ev"))
        assert json.loads((tmp_path / "ev.metrics.json").read_text())["auc"] == 0.5

    def test_json_auc_equals_library_auc(self, scene, tmp_path, capsys):
        run(capsys, "detect", "--t1", str(scene / "t1"), "--t2", str(scene / "t2"), "--out", str(tmp_path / "score"), "--method", "ad")
        code, out, _ = run(capsys, "eval", "--scores", str(tmp_path / "score"), "--mask", str(scene / "mask"),
                           "--out-prefix", str(tmp_path / "ev"))
        assert code == 0
        expected = auc(roc_curve(datacube.load_change_map(tmp_path / "score"), datacube.load_mask(scene / "mask")))
        assert json.loads(out)["auc"] == expected
        assert json.loads((tmp_path / "ev.metrics.json").read_text())["auc"] == expected

    def test_output_prefix_under_a_regular_file(self, tmp_path, capsys):
        self.write_case(tmp_path, [[0.0, 1.0]], [[0, 1]])
        (tmp_path / "blocker").write_text("")
        code, out, err = run(capsys, "eval", "--scores", str(tmp_path / "scores"), "--mask", str(tmp_path / "mask"),
                             "--out-prefix", str(tmp_path / "blocker" / "ev"))
        assert code == 2
        assert out == ""
        error = json.loads(err.strip().splitlines()[-1])
        assert error["error"] == "data"
        assert "ev.roc.csv" in error["message"]

    def test_unwritable_metrics_file(self, tmp_path, capsys):
        self.write_case(tmp_path, [[0.0, 1.0]], [[0, 1]])
        (tmp_path / "ev.metrics.json").mkdir()
        code, _, err = run(capsys, "eval", "--scores", str(tmp_path / "scores"), "--mask", str(tmp_path / "mask"),
                           "--out-prefix", str(tmp_path / "ev"))
        assert code == 2
        assert "ev.metrics.json" in json.loads(err.strip().splitlines()[-1])["message"]

    def test_empty_class(self, tmp_path, capsys):
        self.write_case(tmp_path, [[0.1, 0.2]], [[0, 0]])
        code, _, err = run(capsys, "eval", "--scores", str(tmp_path / "scores"), "--mask", str(tmp_path / "mask"),
                           "--out-prefix", str(tmp_path / "ev"))
        assert code == 2
        assert "changed class is empty" in err


class TestSweepPatch:
    def sweep(self, capsys, scene, out, *extra):
        return run(capsys, "sweep-patch", "--t1", str(scene / "t1"), "--t2", str(scene / "t2"),
                   "--mask", str(scene / "mask"), "--out", str(out), *extra)

    def test_single_patch_size(self, scene, tmp_path, capsys):
        code, out, _ = self.sweep(capsys, scene, tmp_path / "sweep.csv", "--w-min", "3", "--w-max", "3")
        assert code == 0
        with open(tmp_path / "sweep.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["w", "auc"]
        assert len(rows) == 2 and rows[1][0] == "3"
        summary = json.loads(out)
        assert summary["best_w"] == 3
        assert summary["best_auc"] == float(rows[1][1])

    def test_oversized_patches_are_skipped(self, scene, tmp_path, capsys):
        code, out, _ = self.sweep(capsys, scene, tmp_path / "sweep.csv", "--w-min", "18", "--w-max", "22")
        assert code == 0
        summary = json.loads(out)
        assert [row["w"] for row in summary["rows"]] == [18, 19, 20]
        assert summary["skipped"] == [21, 22]

    def test_deterministic_and_best_row(self, scene, tmp_path, capsys):
        self.sweep(capsys, scene, tmp_path / "a.csv", "--w-min", "3", "--w-max", "6")
        _, out, _ = self.sweep(capsys, scene, tmp_path / "b.csv", "--w-min", "3", "--w-max", "6")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        summary = json.loads(out)
        assert [row["w"] for row in summary["rows"]] == [3, 4, 5, 6]
        assert all(summary["best_auc"] >= row["auc"] for row in summary["rows"])

    def test_table_under_a_regular_file(self, scene, tmp_path, capsys):
        (tmp_path / "blocker").write_text("")
        code, out, err = self.sweep(capsys, scene, tmp_path / "blocker" / "sweep.csv", "--w-min", "3", "--w-max", "3")
        assert code == 2
        assert out == ""
        assert json.loads(err.strip().splitlines()[-1])["error"] == "data"


class TestUsageErrors:
    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--bogus"])
        assert exc.value.code == 1
        error = json.loads(capsys.readouterr().err.strip())
        assert error["error"] == "usage"
        assert "--bogus" in error["message"]

    def test_missing_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_bad_choice(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["detect", "--t1", "a", "--t2", "b", "--out", "c", "--method", "sift"])
        assert exc.value.code == 1

    def test_unreadable_config(self, tmp_path, capsys):
        code, _, err = run(capsys, "synth", "--config", str(tmp_path / "missing.json"))
        assert code == 1
        assert json.loads(err.strip().splitlines()[-1])["error"] == "config"
