"""
HistoML: two-stage computer-aided diagnosis of breast lesions on whole-slide
images, with synthetic slides, evaluation and interpretability tools.
"""

# Authors: HistoML developers
# License: BSD 3 clause

from ._labels import (
    BinaryLabel,
    ClassLabel,
    PhysicalCalibration,
    max_severity,
    resolve_label,
    to_binary,
)
from ._version import __version__

__all__ = [
    "ClassLabel",
    "BinaryLabel",
    "PhysicalCalibration",
    "to_binary",
    "max_severity",
    "resolve_label",
    "__version__",
]
