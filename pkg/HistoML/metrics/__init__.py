"""Slide aggregation, accuracy reports, agreement and fold planning."""

# Authors: HistoML developers
# License: BSD 3 clause

from ._assess import SlideAssessment, assess_slide
from ._folds import (
    FoldPlan,
    RoundRobinStratifiedKFold,
    evaluate_folds,
    stratified_kfold,
)
from ._report import (
    ErrorAnalysis,
    MetricsReport,
    accuracy,
    cohen_kappa,
    error_analysis,
    evaluate_run,
    project_binary,
)
from ._truth import patch_truth, region_truth

__all__ = [
    "SlideAssessment",
    "assess_slide",
    "MetricsReport",
    "accuracy",
    "cohen_kappa",
    "evaluate_run",
    "project_binary",
    "ErrorAnalysis",
    "error_analysis",
    "FoldPlan",
    "RoundRobinStratifiedKFold",
    "stratified_kfold",
    "evaluate_folds",
    "region_truth",
    "patch_truth",
]
