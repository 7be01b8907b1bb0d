"""Interpretability: stump feature rankings, top activations and CAM."""

# Authors: HistoML developers
# License: BSD 3 clause

from ._cam import (
    CamMap,
    SupportiveFeature,
    compute_cam,
    heat_color,
    render_cam,
    render_overlay,
    save_png,
    supportive_features,
)
from ._stump import (
    DecisionStump,
    FeatureRanking,
    StumpFeatureRanker,
    StumpResult,
    rank_features,
    stump_fit,
    top_activations,
)

__all__ = [
    "StumpResult",
    "stump_fit",
    "DecisionStump",
    "StumpFeatureRanker",
    "FeatureRanking",
    "rank_features",
    "top_activations",
    "CamMap",
    "compute_cam",
    "heat_color",
    "render_overlay",
    "render_cam",
    "save_png",
    "SupportiveFeature",
    "supportive_features",
]
