# Authors: HistoML developers
# License: BSD 3 clause

import json

import numpy as np
import pytest
from sklearn.utils._testing import assert_allclose, assert_array_equal

from HistoML import ClassLabel
from HistoML.exceptions import SlideFormatError, ValidationError
from HistoML.inference import (
    FeatureTable,
    PatchFeatureExtractor,
    load_feature_maps,
    load_features,
    save_features,
)
from HistoML.slide import Patch


@pytest.fixture
def table():
    rng = np.random.default_rng(0)
    return FeatureTable(
        rng.normal(size=(4, 6)),
        labels=["idc", "dcis", ClassLabel.NonCarcinoma, 2],
        patch_refs=[{"slide_id": "s", "row": i} for i in range(4)],
    )


def test_table_coerces_labels_and_dtype(table):
    assert table.activations.dtype == np.float32
    assert table.labels[0] is ClassLabel.IDC
    assert table.labels[3] is ClassLabel.IDC
    assert (table.n_samples, table.n_features) == (4, 6)
    assert table.ref(1) == {"slide_id": "s", "row": 1}
    assert FeatureTable(np.zeros((2, 1))).ref(1) == 1


@pytest.mark.parametrize(
    "activations, match",
    [
        (np.zeros(3), "2-dimensional"),
        (np.zeros((0, 3)), "at least one row"),
        (np.array([[0.0, np.inf]]), "finite"),
    ],
)
def test_table_rejects_bad_activations(activations, match):
    with pytest.raises(ValidationError, match=match):
        FeatureTable(activations)


def test_table_rejects_misaligned_labels():
    with pytest.raises(ValidationError) as excinfo:
        FeatureTable(np.zeros((2, 2)), labels=["idc"])
    assert excinfo.value.field == "labels"


def test_save_and_load(table, tmp_path):
    maps = np.ones((4, 3, 2, 2))
    save_features(table, tmp_path, feature_maps=maps)
    assert (tmp_path / "features.f32").stat().st_size == 4 * 6 * 4
    loaded = load_features(tmp_path)
    assert_array_equal(loaded.activations, table.activations)
    assert loaded.labels == table.labels
    assert loaded.patch_refs == table.patch_refs
    assert_array_equal(load_feature_maps(tmp_path), maps)


def test_load_checks_payload_size(table, tmp_path):
    save_features(table, tmp_path)
    header = json.loads((tmp_path / "features.json").read_text())
    header["f"] = 7
    (tmp_path / "features.json").write_text(json.dumps(header))
    with pytest.raises(SlideFormatError, match="expected 112"):
        load_features(tmp_path)


def test_load_rejects_empty_header(table, tmp_path):
    save_features(table, tmp_path)
    header = json.loads((tmp_path / "features.json").read_text())
    header["n"] = 0
    (tmp_path / "features.json").write_text(json.dumps(header))
    with pytest.raises(ValidationError, match="n=0"):
        load_features(tmp_path)


def test_missing_table(tmp_path):
    with pytest.raises(SlideFormatError, match="features.json"):
        load_features(tmp_path)
    assert load_feature_maps(tmp_path) is None


def test_extractor_on_flat_patch():
    patches = np.zeros((1, 8, 8, 3), dtype=np.uint8)
    patches[..., 0] = 255
    features = PatchFeatureExtractor(n_bins=4).fit_transform(patches)[0]
    assert features.shape == (6 + 12 + 4,)
    assert_allclose(features[:3], [1.0, 0.0, 0.0])
    assert_allclose(features[3:6], 0.0)
    # red channel histogram: every pixel in the last bin
    assert_allclose(features[6:10], [0.0, 0.0, 0.0, 1.0])
    assert_allclose(features[-4:], 0.0, atol=1e-12)


def test_extractor_accepts_patches():
    pixels = np.full((8, 8, 3), 128, dtype=np.uint8)
    patches = [Patch("s", 0, 0, 0, 8, pixels), Patch("s", 0, 8, 0, 8, pixels)]
    features = PatchFeatureExtractor().transform(patches)
    assert features.shape == (2, 34)
    assert_array_equal(features[0], features[1])


def test_extractor_rejects_grey_images():
    with pytest.raises(ValidationError):
        PatchFeatureExtractor().transform(np.zeros((2, 8, 8)))
