"""Bundled fixtures."""

# Authors: HistoML developers
# License: BSD 3 clause

import numpy as np

from ._labels import ClassLabel
from .inference import LinearModel

N_LESION_FEATURES = 2048

# feature index -> weights for (NonCarcinoma, DCIS, IDC)
_LESION_WEIGHTS = {
    1134: (0.081, -0.051, -0.045),
    1833: (0.053, -0.018, -0.04),
    685: (0.048, -0.037, -0.014),
    1815: (-0.029, 0.087, -0.05),
    1956: (0.008, 0.016, -0.046),
    1402: (0.006, 0.034, -0.021),
    1819: (-0.0408, 0.0487, 0.0028),
    1261: (-0.013, -0.02, 0.031),
    1344: (-0.023, -0.029, 0.085),
    1180: (-0.025, -0.023, 0.026),
    107: (-0.043, 0.022, 0.046),
}


def load_lesion_weights():
    """Published final-layer weights of eleven lesion features.

    The model has 2048 features; the eleven features with published weights
    carry them, every other row and the bias are zero. The same matrix serves
    as spatial weights for activation mapping.

    Returns
    -------
    model : LinearModel
        Weights of shape (2048, 3).

    Examples
    --------
    >>> from HistoML.datasets import load_lesion_weights
    >>> model = load_lesion_weights()
    >>> model.w.shape
    (2048, 3)
    >>> model.w[1134].tolist()
    [0.081, -0.051, -0.045]
    """
    w = np.zeros((N_LESION_FEATURES, len(ClassLabel)))
    for index, weights in _LESION_WEIGHTS.items():
        w[index] = weights
    return LinearModel(w=w, b=np.zeros(len(ClassLabel)))


def lesion_feature_indices():
    """Indices of the features with published weights, in table order."""
    return list(_LESION_WEIGHTS)
