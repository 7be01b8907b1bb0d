"""Shared synthetic cohorts and their pipeline runs."""

# Authors: HistoML developers
# License: BSD 3 clause

import json

import pytest

from HistoML.cli import main
from HistoML.slide import generate_cohort, make_cohort

# Coarse geometry so that whole cohorts run in seconds: 2048 px slides at 4 um/px,
# 128 um detection cells at level 0 and 256 um patches at level 1.
TEST_CONFIG = {
    "detection": {"level_mpp_target": 4.0, "patch_size": 32, "stride": 32},
    "classification": {"level_mpp_target": 8.0, "patch_size": 32},
    "seed": 11,
}
COARSE_SLIDES = {"size": 2048, "mpp": 4.0}


@pytest.fixture(scope="session")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "config.json"
    path.write_text(json.dumps(TEST_CONFIG), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def clean_cohort(tmp_path_factory):
    """Ten noise-free slides per class."""
    out = tmp_path_factory.mktemp("clean_cohort")
    truths = generate_cohort(make_cohort(10, seed=7, **COARSE_SLIDES), out)
    return out, truths


@pytest.fixture(scope="session")
def clean_runs(tmp_path_factory, clean_cohort, config_path):
    out = tmp_path_factory.mktemp("clean_runs")
    code = main(
        ["run", str(clean_cohort[0]), "--out", str(out), "--config", str(config_path)]
        + ["--jobs", "1"]
    )
    assert code == 0
    return out


@pytest.fixture(scope="session")
def noisy_cohort(tmp_path_factory):
    """Lesions with 20% of their 32 px grains painted with another class."""
    out = tmp_path_factory.mktemp("noisy_cohort")
    specs = make_cohort(
        12,
        seed=21,
        **COARSE_SLIDES,
        lesion_mm=(1.5, 3.0),
        extra_lesions=(1, 2),
        texture_noise=0.2,
        noise_grain=32,
    )
    truths = generate_cohort(specs, out)
    return out, truths


@pytest.fixture(scope="session")
def noisy_runs(tmp_path_factory, noisy_cohort, config_path):
    out = tmp_path_factory.mktemp("noisy_runs")
    code = main(
        ["run", str(noisy_cohort[0]), "--out", str(out), "--config", str(config_path)]
    )
    assert code == 0
    return out
