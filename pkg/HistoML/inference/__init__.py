"""Patch inference: backends, linear scoring layers and feature tables."""

# Authors: HistoML developers
# License: BSD 3 clause

from ._backends import (
    ClassificationResult,
    DetectionResult,
    FeaturePlaybackBackend,
    LinearBackend,
    PatchBackend,
    SyntheticBackend,
    background_mask,
    classify_patch,
    detect_prob,
    signature_maps,
    signature_masks,
)
from ._features import (
    FeatureTable,
    PatchFeatureExtractor,
    load_feature_maps,
    load_features,
    ref_key,
    save_features,
)
from ._linear import (
    LinearModel,
    fit_linear_model,
    linear_score,
    load_linear_model,
    save_linear_model,
)

__all__ = [
    "ClassificationResult",
    "DetectionResult",
    "PatchBackend",
    "SyntheticBackend",
    "LinearBackend",
    "FeaturePlaybackBackend",
    "background_mask",
    "signature_masks",
    "signature_maps",
    "detect_prob",
    "classify_patch",
    "FeatureTable",
    "PatchFeatureExtractor",
    "load_features",
    "save_features",
    "load_feature_maps",
    "ref_key",
    "LinearModel",
    "linear_score",
    "load_linear_model",
    "save_linear_model",
    "fit_linear_model",
]
