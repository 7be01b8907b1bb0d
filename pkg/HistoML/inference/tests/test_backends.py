# Authors: HistoML developers
# License: BSD 3 clause

import numpy as np
import pytest
from sklearn.utils._testing import assert_allclose, assert_array_equal

from HistoML import ClassLabel
from HistoML.exceptions import InferenceError, ValidationError
from HistoML.inference import (
    ClassificationResult,
    FeaturePlaybackBackend,
    FeatureTable,
    LinearBackend,
    LinearModel,
    PatchBackend,
    SyntheticBackend,
    classify_patch,
    detect_prob,
    signature_maps,
    signature_masks,
)
from HistoML.slide import SIGNATURE_COLORS, Patch


def _patch(pixels, x=0, y=0):
    return Patch("s", 0, x, y, pixels.shape[0], pixels)


def _filled(color, size=32):
    return np.broadcast_to(np.asarray(color, dtype=np.uint8), (size, size, 3)).copy()


class _Broken(PatchBackend):
    def __init__(self, probability=0.5, probs=(0.2, 0.3, 0.5), fail=False):
        self.probability = probability
        self.probs = probs
        self.fail = fail

    def detect(self, patch):
        if self.fail:
            raise RuntimeError("device lost")
        return self.probability

    def classify(self, patch):
        return ClassificationResult(probs=np.asarray(self.probs))


@pytest.mark.parametrize("label", list(ClassLabel))
def test_synthetic_backend_reads_signatures(label):
    patch = _patch(_filled(SIGNATURE_COLORS[label]))
    backend = SyntheticBackend()
    assert backend.detect(patch) == 1.0
    result = backend.classify(patch)
    expected = np.zeros(3)
    expected[label] = 1.0
    assert_array_equal(result.probs, expected)
    assert result.argmax is label
    assert result.feature_maps.shape == (3, 8, 8)


def test_synthetic_backend_on_background():
    patch = _patch(_filled((250, 250, 250)))
    backend = SyntheticBackend()
    assert backend.detect(patch) == 0.0
    result = backend.classify(patch)
    assert_allclose(result.probs, np.full(3, 1 / 3))
    # uniform ties go to the most severe class
    assert result.argmax is ClassLabel.IDC


def test_signature_masks_margin():
    pixels = np.array([[[200, 161, 100], [200, 160, 100]]], dtype=np.uint8)
    masks = signature_masks(pixels)
    assert masks.shape == (3, 1, 2)
    assert_array_equal(masks[2], [[False, True]])


def test_signature_maps_pool_or_resize():
    pixels = _filled((250, 250, 250), size=16)
    pixels[:8, :8] = SIGNATURE_COLORS[ClassLabel.DCIS]
    maps = signature_maps(pixels, grid=2)
    assert_array_equal(maps[1], [[1.0, 0.0], [0.0, 0.0]])
    assert signature_maps(pixels, grid=3).shape == (3, 3, 3)


def test_detect_prob_wraps_backend_failures():
    patch = _patch(_filled((0, 0, 0)), x=64, y=96)
    with pytest.raises(InferenceError, match="device lost") as excinfo:
        detect_prob(_Broken(fail=True), patch)
    assert excinfo.value.patch == patch.ref()


@pytest.mark.parametrize("probability", [-0.1, 1.5, float("nan")])
def test_detect_prob_rejects_out_of_range(probability):
    with pytest.raises(InferenceError, match="outside"):
        detect_prob(_Broken(probability=probability), _patch(_filled((0, 0, 0))))


@pytest.mark.parametrize("probs", [(0.5, 0.5, 0.5), (1.2, -0.2, 0.0), (0.5, 0.5)])
def test_classify_patch_rejects_non_distributions(probs):
    with pytest.raises(InferenceError, match="not a distribution"):
        classify_patch(_Broken(probs=probs), _patch(_filled((0, 0, 0))))


def test_linear_backend_scores_with_softmax():
    model = LinearModel(w=np.zeros((34, 3)), b=[0.0, 0.0, np.log(2.0)])
    result = LinearBackend(model).classify(_patch(_filled((200, 60, 60))))
    assert_allclose(result.probs, [0.25, 0.25, 0.5])
    assert result.features.shape == (34,)


def test_linear_backend_checks_model():
    patch = _patch(_filled((200, 60, 60)))
    with pytest.raises(ValidationError, match="needs a model"):
        LinearBackend().classify(patch)
    with pytest.raises(ValidationError, match="extractor produces 34"):
        LinearBackend(LinearModel(w=np.zeros((5, 3)), b=np.zeros(3))).classify(patch)


def test_playback_backend_looks_up_patch_references():
    refs = [
        {"slide_id": "s", "level": 0, "x": 0, "y": 0, "size": 32},
        {"slide_id": "s", "level": 0, "x": 32, "y": 0, "size": 32},
    ]
    table = FeatureTable(np.array([[0.0, 0.0], [1.0, 0.0]]), patch_refs=refs)
    model = LinearModel(w=[[0.0, 0.0, 10.0], [0.0, 0.0, 0.0]], b=np.zeros(3))
    backend = FeaturePlaybackBackend(table, model)

    first = classify_patch(backend, _patch(_filled((0, 0, 0))))
    assert_allclose(first.probs, np.full(3, 1 / 3))
    second = classify_patch(backend, _patch(_filled((0, 0, 0)), x=32))
    assert second.argmax is ClassLabel.IDC

    missing = _patch(_filled((0, 0, 0)), x=64)
    with pytest.raises(InferenceError, match="no precomputed") as excinfo:
        classify_patch(backend, missing)
    assert excinfo.value.patch == missing.ref()


def test_playback_follows_the_current_table():
    ref = {"slide_id": "s", "level": 0, "x": 0, "y": 0, "size": 32}
    model = LinearModel(w=[[0.0, 0.0, 10.0], [0.0, 10.0, 0.0]], b=np.zeros(3))
    table = FeatureTable([[1.0, 0.0]], patch_refs=[ref])
    backend = FeaturePlaybackBackend(table, model)
    patch = _patch(_filled((0, 0, 0)))
    assert classify_patch(backend, patch).argmax is ClassLabel.IDC
    assert sorted(vars(backend)) == sorted(backend.get_params(deep=False))

    backend.set_params(table=FeatureTable([[0.0, 1.0]], patch_refs=[ref]))
    assert classify_patch(backend, patch).argmax is ClassLabel.DCIS


def test_playback_needs_a_referenced_table():
    model = LinearModel(w=np.zeros((2, 3)), b=np.zeros(3))
    patch = _patch(_filled((0, 0, 0)))
    with pytest.raises(ValidationError) as excinfo:
        classify_patch(FeaturePlaybackBackend(model=model), patch)
    assert excinfo.value.field == "table"
    bare = FeatureTable(np.zeros((2, 2)))
    with pytest.raises(ValidationError, match="patch references"):
        classify_patch(FeaturePlaybackBackend(bare, model), patch)
    unlocated = FeatureTable(np.zeros((2, 2)), patch_refs=[0, 1])
    with pytest.raises(ValidationError, match="does not locate"):
        classify_patch(FeaturePlaybackBackend(unlocated, model), patch)


def _random_backends(rng):
    refs = [
        {"slide_id": "s", "level": 0, "x": 32 * i, "y": 0, "size": 32} for i in range(4)
    ]
    table = FeatureTable(rng.normal(scale=5.0, size=(4, 6)), patch_refs=refs)
    playback_model = LinearModel(w=rng.normal(size=(6, 3)), b=rng.normal(size=3))
    linear_model = LinearModel(w=rng.normal(size=(34, 3)), b=rng.normal(size=3))
    return [
        SyntheticBackend(),
        LinearBackend(linear_model),
        FeaturePlaybackBackend(table, playback_model),
    ]


def test_every_backend_returns_a_distribution():
    rng = np.random.default_rng(0)
    for _ in range(25):
        for backend in _random_backends(rng):
            for i in range(4):
                pixels = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
                result = classify_patch(backend, _patch(pixels, x=32 * i))
                assert result.probs.shape == (3,)
                assert (result.probs >= 0).all()
                assert result.probs.sum() == pytest.approx(1.0, abs=1e-9)
                assert 0.0 <= detect_prob(backend, _patch(pixels)).probability <= 1.0
