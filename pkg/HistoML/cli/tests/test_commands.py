# Authors: HistoML developers
# License: BSD 3 clause

import json
import shutil

import numpy as np
import pytest
from PIL import Image

from HistoML.cli import DEFAULTS, main
from HistoML.inference import (
    FeatureTable,
    LinearModel,
    SyntheticBackend,
    load_features,
    load_linear_model,
    save_features,
    save_linear_model,
)
from HistoML.slide import load_truth, open_slide, write_slide


def _read(path):
    return json.loads(path.read_text(encoding="utf-8"))


def _error_line(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def features_dir(tmp_path_factory, clean_cohort, clean_runs):
    out = tmp_path_factory.mktemp("features")
    argv = ["features", str(clean_runs), "--slides", str(clean_cohort[0])]
    argv += ["--out", str(out / "table"), "--fit-model", str(out / "m.json")]
    assert main(argv) == 0
    return out


def test_print_config(capsys):
    assert main(["print-config"]) == 0
    assert json.loads(capsys.readouterr().out) == DEFAULTS


def test_synth(tmp_path):
    argv = ["synth", "--out", str(tmp_path), "--per-class", "1", "--size", "1024"]
    argv += ["--mpp", "4.0"]
    assert main(argv + ["--lesion-mm", "1.0", "1.5", "--seed", "4"]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "slide_000",
        "slide_001",
        "slide_002",
    ]
    labels = [
        load_truth(tmp_path / ("slide_%03d" % i)).slide_label.slug for i in range(3)
    ]
    assert labels == ["non_carcinoma", "dcis", "idc"]
    assert open_slide(tmp_path / "slide_002").width == 1024


def test_corrupt_container_exits_2(tmp_path, capsys):
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "slide.json").write_text("{", encoding="utf-8")
    assert main(["run", str(tmp_path / "bad"), "--out", str(tmp_path / "out")]) == 2
    error = _error_line(capsys)
    assert error["error"] == "SlideFormatError"
    assert "cannot parse" in error["message"]
    assert not (tmp_path / "out").exists()


def test_unknown_config_key_exits_2(tmp_path, capsys, clean_cohort):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"detection": {"windows": 3}}), encoding="utf-8")
    slide = str(clean_cohort[0] / "slide_000")
    argv = ["run", slide, "--out", str(tmp_path / "out"), "--config", str(config)]
    assert main(argv) == 2
    error = _error_line(capsys)
    assert error["field"] == "windows"


def test_white_slide_has_no_regions(tmp_path, config_path):
    image = np.full((256, 256, 3), 250, dtype=np.uint8)
    write_slide(tmp_path / "w", image, slide_id="w", mpp=4.0, tile_size=128)
    argv = ["run", str(tmp_path / "w"), "--out", str(tmp_path / "out")]
    assert main(argv + ["--config", str(config_path)]) == 0
    assessment = _read(tmp_path / "out" / "assessment.json")
    assert assessment["label"] == "non_carcinoma"
    assert assessment["binary_label"] == "non_carcinoma"
    assert assessment["n_regions"] == 0
    assert _read(tmp_path / "out" / "calls.json") == []
    assert _read(tmp_path / "out" / "regions.json") == []


def test_backend_failure_exits_3(tmp_path, capsys, clean_cohort, monkeypatch):
    monkeypatch.setattr(SyntheticBackend, "detect", lambda self, patch: 2.0)
    slide = str(clean_cohort[0] / "slide_000")
    assert main(["run", slide, "--out", str(tmp_path / "out")]) == 3
    error = _error_line(capsys)
    assert error["error"] == "InferenceError"
    assert "outside [0, 1]" in error["message"]
    assert error["patch"]["slide_id"] == "slide_000"
    assert len(error["cell"]) == 2


def test_eval_identity(clean_cohort, tmp_path):
    cohort = str(clean_cohort[0])
    assert main(["eval", cohort, cohort, "--out", str(tmp_path)]) == 0
    metrics = _read(tmp_path / "metrics.json")
    assert metrics["overall"] == {"correct": 30, "total": 30, "accuracy": 1.0}
    assert metrics["confusion"] == [[10, 0, 0], [0, 10, 0], [0, 0, 10]]
    assert _read(tmp_path / "errors.json") == {
        "false_negatives": [],
        "false_alarms": [],
        "subtype_errors": [],
    }


def test_eval_binary_scheme(clean_cohort, clean_runs, tmp_path):
    argv = ["eval", str(clean_runs), str(clean_cohort[0]), "--scheme", "binary"]
    assert main(argv + ["--out", str(tmp_path)]) == 0
    metrics = _read(tmp_path / "metrics.json")
    assert metrics["scheme"] == "binary"
    assert metrics["confusion"] == [[10, 0], [0, 20]]


def test_eval_disjoint_slides_exits_2(clean_cohort, clean_runs, tmp_path, capsys):
    shutil.copytree(clean_cohort[0] / "slide_003", tmp_path / "truth" / "slide_003")
    argv = ["eval", str(clean_runs), str(tmp_path / "truth")]
    assert main(argv + ["--out", str(tmp_path / "out")]) == 2
    error = _error_line(capsys)
    assert error["field"] == "slides"
    assert not (tmp_path / "out" / "metrics.json").exists()


def test_eval_call_without_region_exits_2(clean_cohort, clean_runs, tmp_path, capsys):
    shutil.copytree(clean_runs, tmp_path / "runs")
    (tmp_path / "runs" / "slide_020" / "regions.json").write_text("[]")
    argv = ["eval", str(tmp_path / "runs"), str(clean_cohort[0]), "--level", "region"]
    assert main(argv + ["--out", str(tmp_path / "out")]) == 2
    error = _error_line(capsys)
    assert error["field"] == "region_id"
    assert "slide_020" in error["message"]


def test_folds_and_per_fold_eval(clean_cohort, clean_runs, tmp_path):
    cohort = str(clean_cohort[0])
    folds = tmp_path / "folds.json"
    assert main(["folds", cohort, "--k", "5", "--seed", "2", "--out", str(folds)]) == 0
    plan = _read(folds)
    assert plan["k"] == 5
    assert [len(fold) for fold in plan["folds"]] == [6] * 5

    argv = ["eval", str(clean_runs), cohort, "--level", "region"]
    assert main(argv + ["--folds", str(folds), "--out", str(tmp_path)]) == 0
    doc = _read(tmp_path / "metrics_folds.json")
    assert len(doc["folds"]) == 5
    pooled = doc["pooled"]["overall"]
    assert pooled == _read(tmp_path / "metrics.json")["overall"]
    assert pooled["total"] == sum(r["overall"]["total"] for r in doc["folds"])
    assert not (tmp_path / "errors.json").exists()


def test_features_and_fitted_model(features_dir):
    table = load_features(features_dir / "table")
    assert table.n_features == 34
    assert (features_dir / "table" / "feature_maps.npy").is_file()
    model = load_linear_model(features_dir / "m.json")
    assert model.n_features == 34
    assert model.spatial_w.shape == (3, 3)


def test_explain_stump(features_dir, tmp_path):
    argv = ["explain", "stump", str(features_dir / "table"), "--out", str(tmp_path)]
    assert main(argv + ["--target", "dcis", "--k", "5"]) == 0
    ranking = _read(tmp_path / "ranking.json")
    assert ranking["target_class"] == "dcis"
    assert ranking["k"] == 5
    accuracies = [feature["accuracy"] for feature in ranking["features"]]
    assert accuracies == sorted(accuracies, reverse=True)
    assert all(feature["polarity"] in (1, -1) for feature in ranking["features"])


def test_explain_topact_gallery(features_dir, clean_cohort, tmp_path):
    argv = ["explain", "topact", str(features_dir / "table"), "--out", str(tmp_path)]
    argv += ["--feature", "2", "--m", "3", "--slides-root", str(clean_cohort[0])]
    assert main(argv) == 0
    rows = _read(tmp_path / "topact.json")["rows"]
    assert [row["rank"] for row in rows] == [0, 1, 2]
    for row in rows:
        path = tmp_path / ("rank_%d_row_%d.png" % (row["rank"], row["row"]))
        with Image.open(path) as img:
            assert img.size == (row["ref"]["size"], row["ref"]["size"])


def test_explain_topact_needs_locating_refs(clean_cohort, tmp_path, capsys):
    save_features(FeatureTable(np.arange(6.0).reshape(3, 2)), tmp_path / "table")
    argv = ["explain", "topact", str(tmp_path / "table"), "--out", str(tmp_path)]
    argv += ["--feature", "0", "--m", "2", "--slides-root", str(clean_cohort[0])]
    assert main(argv) == 2
    assert _error_line(capsys)["field"] == "patch_refs"


def test_explain_cam(features_dir, clean_cohort, tmp_path):
    argv = ["explain", "cam", str(features_dir / "table"), "--out", str(tmp_path)]
    argv += ["--model", str(features_dir / "m.json"), "--rows", "0", "3"]
    assert main(argv + ["--slides-root", str(clean_cohort[0])]) == 0
    for name in ["cam_row_0", "cam_row_3", "overlay_row_0", "overlay_row_3"]:
        with Image.open(tmp_path / (name + ".png")) as img:
            assert img.mode == "RGB"
            assert img.size == (32, 32)


def test_explain_cam_with_zero_weights_is_black(features_dir, tmp_path):
    model = LinearModel(w=np.zeros((34, 3)), b=np.zeros(3), spatial_w=np.zeros((3, 3)))
    save_linear_model(model, tmp_path / "zero.json")
    argv = ["explain", "cam", str(features_dir / "table"), "--out", str(tmp_path)]
    assert main(argv + ["--model", str(tmp_path / "zero.json"), "--rows", "1"]) == 0
    with Image.open(tmp_path / "cam_row_1.png") as img:
        assert not np.asarray(img).any()


def test_explain_cam_needs_a_model(features_dir, tmp_path, capsys):
    argv = ["explain", "cam", str(features_dir / "table"), "--out", str(tmp_path)]
    assert main(argv) == 2
    assert _error_line(capsys)["field"] == "model"


def test_unknown_explain_mode(features_dir, tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["explain", "saliency", str(features_dir), "--out", str(tmp_path)])
    assert excinfo.value.code == 2
