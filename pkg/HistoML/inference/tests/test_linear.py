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
    LinearModel,
    fit_linear_model,
    linear_score,
    load_linear_model,
    save_linear_model,
)


def test_linear_score_picks_largest_class():
    model = LinearModel(w=[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]], b=[0.0, 0.0, 0.5])
    scores, label = linear_score([1.0, 1.0], model)
    assert_allclose(scores, [1.0, 2.0, 0.5])
    assert label is ClassLabel.DCIS


def test_linear_score_ties_go_to_severe():
    model = LinearModel(w=np.zeros((2, 3)), b=np.zeros(3))
    assert linear_score([3.0, -1.0], model)[1] is ClassLabel.IDC


def test_linear_score_checks_length():
    model = LinearModel(w=np.zeros((2, 3)), b=np.zeros(3))
    with pytest.raises(ValidationError, match="expects"):
        linear_score([1.0, 2.0, 3.0], model)



def test_linear_score_is_linear_in_the_features():
    rng = np.random.default_rng(0)
    for _ in range(100):
        model = LinearModel(w=rng.normal(size=(8, 3)), b=rng.normal(size=3))
        a1, a2 = rng.normal(size=8), rng.normal(size=8)
        alpha, beta = rng.normal(size=2)
        combined = linear_score(alpha * a1 + beta * a2, model)[0] - model.b
        parts = alpha * (linear_score(a1, model)[0] - model.b)
        parts = parts + beta * (linear_score(a2, model)[0] - model.b)
        assert_allclose(combined, parts, atol=1e-9)


def test_common_bias_shift_keeps_the_class():
    rng = np.random.default_rng(1)
    for _ in range(100):
        w, b = rng.normal(size=(8, 3)), rng.normal(size=3)
        a = rng.normal(size=8)
        label = linear_score(a, LinearModel(w=w, b=b))[1]
        for shift in (-7.5, 3.0):
            assert linear_score(a, LinearModel(w=w, b=b + shift))[1] is label


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"w": np.zeros((2, 2)), "b": np.zeros(3)}, "w"),
        ({"w": np.zeros((2, 3)), "b": np.zeros(2)}, "b"),
        ({"w": [[np.nan, 0, 0]], "b": np.zeros(3)}, "w"),
        (
            {"w": np.zeros((2, 3)), "b": np.zeros(3), "spatial_w": np.zeros(3)},
            "spatial_w",
        ),
    ],
)
def test_model_validation(kwargs, field):
    with pytest.raises(ValidationError) as excinfo:
        LinearModel(**kwargs)
    assert excinfo.value.field == field


def test_spatial_weights():
    model = LinearModel(w=np.ones((4, 3)), b=np.zeros(3), spatial_w=np.eye(3))
    assert_array_equal(model.spatial_weights(3), np.eye(3))
    plain = LinearModel(w=np.ones((4, 3)), b=np.zeros(3))
    assert_array_equal(plain.spatial_weights(4), 1)
    with pytest.raises(ValidationError, match="3 spatial weights"):
        model.spatial_weights(4)


def test_save_and_load(tmp_path):
    model = LinearModel(w=np.arange(6.0).reshape(2, 3), b=[1.0, 2.0, 3.0])
    save_linear_model(model, tmp_path / "model.json")
    loaded = load_linear_model(tmp_path / "model.json")
    assert_array_equal(loaded.w, model.w)
    assert_array_equal(loaded.b, model.b)
    assert loaded.class_names == ("non_carcinoma", "dcis", "idc")
    assert loaded.spatial_w is None


def test_load_rejects_inconsistent_feature_count(tmp_path):
    doc = {"f": 3, "w": [[0, 0, 0], [0, 0, 0]], "b": [0, 0, 0]}
    (tmp_path / "model.json").write_text(json.dumps(doc))
    with pytest.raises(SlideFormatError, match="f=3"):
        load_linear_model(tmp_path / "model.json")


def test_load_missing_and_corrupt(tmp_path):
    with pytest.raises(SlideFormatError, match="not found"):
        load_linear_model(tmp_path / "model.json")
    (tmp_path / "model.json").write_text("{")
    with pytest.raises(SlideFormatError, match="cannot parse"):
        load_linear_model(tmp_path / "model.json")


def test_fit_separates_classes():
    rng = np.random.default_rng(0)
    centres = np.eye(3) * 5
    labels = np.repeat([0, 1, 2], 20)
    activations = centres[labels] + rng.normal(scale=0.5, size=(60, 3))
    table = FeatureTable(activations, labels=labels)
    model = fit_linear_model(table, spatial_w=np.eye(3))
    predicted = [linear_score(a, model)[1] for a in table.activations]
    assert predicted == list(table.labels)
    assert_array_equal(model.spatial_w, np.eye(3))


def test_fit_needs_every_class():
    table = FeatureTable(np.zeros((4, 2)), labels=[0, 0, 1, 1])
    with pytest.raises(ValidationError, match="all three classes"):
        fit_linear_model(table)
    with pytest.raises(ValidationError, match="labelled"):
        fit_linear_model(FeatureTable(np.zeros((4, 2))))
