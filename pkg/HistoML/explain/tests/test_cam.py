# Authors: HistoML developers
# License: BSD 3 clause

import json
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest
from PIL import Image
from sklearn.utils._testing import assert_allclose, assert_array_equal

from HistoML import ClassLabel
from HistoML.datasets import load_lesion_weights
from HistoML.exceptions import ValidationError
from HistoML.explain import (
    CamMap,
    compute_cam,
    heat_color,
    render_cam,
    render_overlay,
    save_png,
    supportive_features,
)
from HistoML.inference import LinearModel


DATA = Path(__file__).parent / "data"


def _model(w):
    return LinearModel(w=w, b=np.zeros(3))


def _cam_of(values):
    values = np.asarray(values, dtype=float)
    return CamMap(label=ClassLabel.IDC, raw=values, normalized=values)


def test_single_pixel_map_normalises_to_zero():
    model = _model([[0.5, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    cam = compute_cam(np.array([[[2.0]], [[3.0]]]), model, ClassLabel.NonCarcinoma)
    assert_array_equal(cam.raw, [[-2.0]])
    assert_array_equal(cam.normalized, [[0.0]])
    assert cam.upsampled is None


def test_zero_weights_give_zero_map():
    rng = np.random.default_rng(0)
    cam = compute_cam(rng.normal(size=(3, 4, 4)), _model(np.zeros((3, 3))), "dcis")
    assert cam.label is ClassLabel.DCIS
    assert_array_equal(cam.raw, np.zeros((4, 4)))
    assert_array_equal(cam.normalized, np.zeros((4, 4)))


def test_cam_matches_double_loop():
    rng = np.random.default_rng(1)
    for _ in range(20):
        maps = rng.normal(size=(3, 2, 2))
        w = rng.normal(size=(3, 3))
        for label in ClassLabel:
            cam = compute_cam(maps, _model(w), label)
            expected = np.zeros((2, 2))
            for i in range(2):
                for j in range(2):
                    for k in range(3):
                        expected[i, j] += w[k, label] * maps[k, i, j]
            assert_allclose(cam.raw, expected, atol=1e-6)
            assert cam.normalized.min() == 0.0
            assert cam.normalized.max() == pytest.approx(1.0)


def test_cam_is_linear_in_the_weights():
    rng = np.random.default_rng(2)
    maps = rng.normal(size=(5, 6, 6))
    w1, w2 = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    total = compute_cam(maps, _model(w1 + w2), "idc").raw
    parts = compute_cam(maps, _model(w1), "idc").raw
    parts = parts + compute_cam(maps, _model(w2), "idc").raw
    assert_allclose(total, parts, atol=1e-6)


def test_spatial_weights_take_precedence():
    model = LinearModel(
        w=np.zeros((34, 3)), b=np.zeros(3), spatial_w=[[1, 0, 0], [0, 0, 0]]
    )
    maps = np.array([[[0.0, 2.0]], [[5.0, 5.0]]])
    assert_array_equal(compute_cam(maps, model, 0).raw, [[0.0, 2.0]])


def test_dimension_mismatch():
    model = _model(np.ones((3, 3)))
    with pytest.raises(ValidationError, match="3 spatial weights"):
        compute_cam(np.ones((4, 2, 2)), model, "idc")
    with pytest.raises(ValidationError, match="shape"):
        compute_cam(np.ones((3, 2)), model, "idc")


def test_lesion_feature_sign_pattern():
    maps = np.zeros((2048, 2, 2))
    maps[1134] = [[1.0, 2.0], [3.0, 4.0]]
    model = load_lesion_weights()
    assert (compute_cam(maps, model, "non_carcinoma").raw > 0).all()
    assert (compute_cam(maps, model, "dcis").raw < 0).all()
    assert (compute_cam(maps, model, "idc").raw < 0).all()


def test_upsampling():
    model = _model([[1.0, 0.0, 0.0]])
    cam = compute_cam(np.array([[[0.0, 1.0], [0.0, 1.0]]]), model, 0, patch_size=16)
    assert cam.upsampled.shape == (16, 16)
    assert 0.0 <= cam.upsampled.min() and cam.upsampled.max() <= 1.0
    assert_allclose(cam.upsampled[:, 0], 0.0, atol=1e-12)
    assert_allclose(cam.upsampled[:, -1], 1.0, atol=1e-12)
    # columns increase from left to right
    assert (np.diff(cam.upsampled[0]) >= 0).all()

    flat = compute_cam(np.ones((1, 2, 2)), model, 0, patch_size=8)
    assert_array_equal(flat.upsampled, np.zeros((8, 8)))


def test_heat_color():
    assert_array_equal(heat_color(0.25), [0.0, 127.5, 127.5])
    assert_array_equal(heat_color([-1.0, 2.0]), [[0, 0, 255], [255, 0, 0]])
    assert heat_color(np.zeros((2, 3))).shape == (2, 3, 3)


def test_zero_alpha_returns_the_patch():
    rng = np.random.default_rng(3)
    patch = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    cam = _cam_of(rng.random((8, 8)))
    assert_array_equal(render_overlay(cam, patch, alpha=0.0), patch)


def test_saturated_map_is_pure_heat():
    rng = np.random.default_rng(4)
    patch = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    out = render_overlay(_cam_of(np.ones((4, 4))), patch, alpha=1.0)
    assert_array_equal(out, np.broadcast_to([255, 0, 0], (4, 4, 3)))


def test_overlay_blend():
    patch = SimpleNamespace(pixels=np.full((1, 1, 3), 100, dtype=np.uint8))
    out = render_overlay(_cam_of([[0.5]]), patch, alpha=1.0)
    assert out.dtype == np.uint8
    assert_array_equal(out, [[[50, 178, 50]]])


def test_overlay_errors():
    patch = np.zeros((4, 4, 3), dtype=np.uint8)
    with pytest.raises(ValidationError, match="alpha"):
        render_overlay(_cam_of(np.zeros((4, 4))), patch, alpha=1.5)
    with pytest.raises(ValidationError, match="does not match"):
        render_overlay(_cam_of(np.zeros((2, 2))), patch)


def test_render_cam():
    image = render_cam(_cam_of([[0.0, 0.5, 1.0]]))
    assert_array_equal(image, [[[0, 0, 0], [0, 128, 0], [255, 0, 0]]])


def test_save_png(tmp_path):
    image = render_cam(_cam_of([[0.0, 0.5], [1.0, 0.25]]))
    path = tmp_path / "gallery" / "cam.png"
    save_png(image, path)
    with Image.open(path) as img:
        assert img.mode == "RGB"
        assert_array_equal(np.asarray(img), image)


def test_supportive_features():
    model = load_lesion_weights()
    idc = supportive_features(model, "idc")
    assert [f.index for f in idc] == [1344, 107, 1261, 1180, 1819]
    assert [f.exclusive for f in idc] == [True, False, True, True, False]
    assert idc[0].weight == 0.085
    nc = supportive_features(model, ClassLabel.NonCarcinoma, k=3)
    assert [f.index for f in nc] == [1134, 1833, 685]
    assert all(f.exclusive for f in nc)


def test_overlay_matches_golden_image(tmp_path):
    golden = json.loads((DATA / "overlay_4x4.json").read_text(encoding="utf-8"))
    rows = [(200, 100, 50), (0, 0, 0), (255, 255, 255), (40, 80, 120)]
    patch = np.repeat(np.array(rows, dtype=np.uint8)[:, np.newaxis], 4, axis=1)
    cam = _cam_of(np.tile([0.0, 0.25, 0.75, 1.0], (4, 1)))
    image = render_overlay(cam, patch, alpha=golden["alpha"])
    assert_array_equal(image, golden["image"])

    save_png(image, tmp_path / "a.png")
    save_png(render_overlay(cam, patch, alpha=golden["alpha"]), tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    with Image.open(tmp_path / "a.png") as img:
        assert_array_equal(np.asarray(img), golden["image"])
