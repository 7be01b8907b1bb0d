# Authors: HistoML developers
# License: BSD 3 clause

import pytest

from HistoML.utils.discovery import all_estimators, all_functions


def test_all_estimators():
    estimators = all_estimators()
    assert [name for name, _ in estimators] == [
        "DecisionStump",
        "FeaturePlaybackBackend",
        "LinearBackend",
        "PatchFeatureExtractor",
        "StumpFeatureRanker",
        "SyntheticBackend",
    ]

    estimators = all_estimators(type_filter="classifier")
    assert len(estimators) == 1

    estimators = all_estimators(type_filter=["classifier", "transformer"])
    assert len(estimators) == 3

    err_msg = "Parameter type_filter must be"
    with pytest.raises(ValueError, match=err_msg):
        all_estimators(type_filter="xxxx")


def test_all_functions():
    names = dict(all_functions())
    for expected in ("scan", "vote", "stump_fit", "compute_cam", "accuracy", "main"):
        assert expected in names
    assert not any(name.startswith("_") for name in names)
