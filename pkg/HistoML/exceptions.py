"""
The :mod:`HistoML.exceptions` module includes all custom warnings and error
classes used across HistoML.
"""

# Authors: HistoML developers
# License: BSD 3 clause

__all__ = [
    "ValidationError",
    "SlideFormatError",
    "LevelError",
    "UndefinedMetricError",
    "InferenceError",
    "SamplingError",
    "RelaxedSamplingWarning",
]


class ValidationError(ValueError):
    """Raised when an argument, a record or a file violates an invariant.

    Parameters
    ----------
    message : str
        Human readable description.

    field : str, default=None
        Name of the offending field, when there is one.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SlideFormatError(ValidationError):
    """Raised when a container or binary payload is missing or corrupt."""


class LevelError(IndexError):
    """Raised when a pyramid level does not exist."""

    def __init__(self, level, n_levels):
        super().__init__(
            "level %r out of range, the slide has %d levels" % (level, n_levels)
        )
        self.level = level


class UndefinedMetricError(ValueError):
    """Raised when a metric is requested over an empty set of items."""


class InferenceError(RuntimeError):
    """Raised when a patch backend fails.

    The context attributes are filled in as the error travels up the pipeline:
    the patch coordinates first, then the heatmap cell or the region.
    """

    def __init__(self, message, *, patch=None, cell=None, region_id=None):
        super().__init__(message)
        self.patch = patch
        self.cell = cell
        self.region_id = region_id

    def context(self):
        info = {}
        if self.patch is not None:
            info["patch"] = self.patch
        if self.cell is not None:
            info["cell"] = list(self.cell)
        if self.region_id is not None:
            info["region_id"] = self.region_id
        return info


class SamplingError(RuntimeError):
    """Raised when patch sampling inside a region cannot be satisfied."""

    def __init__(self, message, *, region_id=None):
        super().__init__(message)
        self.region_id = region_id

    def context(self):
        return {} if self.region_id is None else {"region_id": self.region_id}


class RelaxedSamplingWarning(UserWarning):
    """Warning used when the required region overlap had to be halved."""
