"""
Feature tables (patches x features activations) and the hand-crafted patch
feature extractor used by the linear backend.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import json
from dataclasses import dataclass, field
from functools import cached_property
from numbers import Integral
from pathlib import Path

import numpy as np
from skimage.color import rgb2gray
from sklearn.base import BaseEstimator, TransformerMixin, _fit_context
from sklearn.utils import check_array
from sklearn.utils._param_validation import Interval

from .._labels import resolve_label
from ..exceptions import SlideFormatError, ValidationError

HEADER_FILE = "features.json"
PAYLOAD_FILE = "features.f32"
MAPS_FILE = "feature_maps.npy"
PAYLOAD_DTYPE = np.dtype("<f4")


def ref_key(ref):
    """Hashable ``(slide_id, level, x, y, size)`` key of a patch reference."""
    try:
        return (
            str(ref["slide_id"]),
            int(ref["level"]),
            int(ref["x"]),
            int(ref["y"]),
            int(ref["size"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(
            "patch reference %r does not locate a patch" % (ref,), field="patch_refs"
        ) from exc


@dataclass(frozen=True)
class FeatureTable:
    """Activations of ``n_features`` units for ``n_samples`` patches.

    Parameters
    ----------
    activations : ndarray of shape (n_samples, n_features)
        Finite activations, stored as float32.

    labels : tuple of ClassLabel, default=None
        Class of every row.

    patch_refs : tuple, default=None
        Reference of every row, usually ``Patch.ref()`` dictionaries.
    """

    activations: np.ndarray = field(repr=False)
    labels: tuple = field(default=None, repr=False)
    patch_refs: tuple = field(default=None, repr=False)

    def __post_init__(self):
        activations = np.asarray(self.activations, dtype=np.float32)
        if activations.ndim != 2:
            raise ValidationError(
                "activations must be 2-dimensional", field="activations"
            )
        if activations.shape[0] < 1:
            raise ValidationError("a feature table needs at least one row", field="n")
        if not np.isfinite(activations).all():
            raise ValidationError("activations must be finite", field="activations")
        object.__setattr__(self, "activations", activations)
        n = activations.shape[0]
        if self.labels is not None:
            labels = tuple(resolve_label(label) for label in self.labels)
            if len(labels) != n:
                raise ValidationError(
                    "labels must have one entry per row", field="labels"
                )
            object.__setattr__(self, "labels", labels)
        if self.patch_refs is not None:
            refs = tuple(self.patch_refs)
            if len(refs) != n:
                raise ValidationError(
                    "patch_refs must have one entry per row", field="patch_refs"
                )
            object.__setattr__(self, "patch_refs", refs)

    @property
    def n_samples(self):
        return self.activations.shape[0]

    @property
    def n_features(self):
        return self.activations.shape[1]

    def ref(self, row):
        return row if self.patch_refs is None else self.patch_refs[row]

    @cached_property
    def ref_index(self):
        """Row of every patch reference, keyed by :func:`ref_key`."""
        if self.patch_refs is None:
            raise ValidationError(
                "the table has no patch references", field="patch_refs"
            )
        return {ref_key(ref): row for row, ref in enumerate(self.patch_refs)}


def save_features(table, path, feature_maps=None):
    """Write ``features.json`` and ``features.f32`` (and optional maps) to ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    header = {
        "n": table.n_samples,
        "f": table.n_features,
        "labels": None if table.labels is None else [lb.slug for lb in table.labels],
        "patch_refs": None if table.patch_refs is None else list(table.patch_refs),
    }
    (path / HEADER_FILE).write_text(json.dumps(header, indent=2), encoding="utf-8")
    table.activations.astype(PAYLOAD_DTYPE).tofile(path / PAYLOAD_FILE)
    if feature_maps is not None:
        np.save(path / MAPS_FILE, np.asarray(feature_maps, dtype=np.float32))


def load_features(path):
    """Read a feature table written by :func:`save_features`.

    Raises
    ------
    SlideFormatError
        If the header is unreadable or the payload size differs from
        ``n * f * 4`` bytes.

    ValidationError
        If the header declares no rows or activations are not finite.
    """
    path = Path(path)
    try:
        header = json.loads((path / HEADER_FILE).read_text(encoding="utf-8"))
        n, f = int(header["n"]), int(header["f"])
    except FileNotFoundError:
        raise SlideFormatError("%s not found" % (path / HEADER_FILE)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise SlideFormatError("malformed feature header: %r" % exc) from exc
    if n < 1:
        raise ValidationError("feature header declares n=%d rows" % n, field="n")
    if f < 1:
        raise ValidationError("feature header declares f=%d features" % f, field="f")

    payload = path / PAYLOAD_FILE
    try:
        actual = payload.stat().st_size
    except FileNotFoundError:
        raise SlideFormatError("%s not found" % payload) from None
    expected = n * f * PAYLOAD_DTYPE.itemsize
    if actual != expected:
        raise SlideFormatError(
            "feature payload has %d bytes, expected %d (n=%d, f=%d)"
            % (actual, expected, n, f),
            field="payload",
        )
    activations = np.fromfile(payload, dtype=PAYLOAD_DTYPE).reshape(n, f)
    return FeatureTable(
        activations=activations,
        labels=header.get("labels"),
        patch_refs=header.get("patch_refs"),
    )


def load_feature_maps(path):
    """Return the ``(n, K, H', W')`` maps stored beside a feature table, or None."""
    maps_path = Path(path) / MAPS_FILE
    if not maps_path.exists():
        return None
    maps = np.load(maps_path)
    if maps.ndim != 4:
        raise SlideFormatError(
            "feature maps must be 4-dimensional", field="feature_maps"
        )
    return maps


class PatchFeatureExtractor(TransformerMixin, BaseEstimator):
    """Hand-crafted colour and texture descriptor of RGB patches.

    For every patch: the mean and variance of each channel, a normalised
    ``n_bins`` histogram of each channel, and four gradient-energy statistics
    of the grey-level image (mean absolute horizontal and vertical gradient,
    mean and standard deviation of the gradient magnitude). With the default
    8 bins this gives 34 features.

    Parameters
    ----------
    n_bins : int, default=8
        Histogram bins per channel.

    Examples
    --------
    >>> import numpy as np
    >>> from HistoML.inference import PatchFeatureExtractor
    >>> patches = np.full((2, 16, 16, 3), 255, dtype=np.uint8)
    >>> PatchFeatureExtractor().fit_transform(patches).shape
    (2, 34)
    """

    _parameter_constraints = {
        "n_bins": [Interval(Integral, 1, None, closed="left")],
    }

    def __init__(self, n_bins=8):
        self.n_bins = n_bins

    @property
    def n_features_out(self):
        return 6 + 3 * self.n_bins + 4

    @_fit_context(prefer_skip_nested_validation=True)
    def fit(self, X, y=None):
        """Validate parameters; the extractor learns nothing.

        Parameters
        ----------
        X : array-like of shape (n_patches, size, size, 3)
            RGB patches.

        y : None
            Ignored.

        Returns
        -------
        self : object
            Returns self.
        """
        return self

    def transform(self, X):
        """Describe every patch.

        Parameters
        ----------
        X : array-like of shape (n_patches, size, size, 3) or list of Patch
            RGB patches, uint8.

        Returns
        -------
        X_new : ndarray of shape (n_patches, 6 + 3 * n_bins + 4)
        """
        if isinstance(X, (list, tuple)) and X and hasattr(X[0], "pixels"):
            X = np.stack([patch.pixels for patch in X])
        X = check_array(X, allow_nd=True, dtype=None, ensure_min_features=1)
        if X.ndim != 4 or X.shape[-1] != 3:
            raise ValidationError(
                "expected patches of shape (n, size, size, 3), got %r" % (X.shape,),
                field="X",
            )
        return np.stack([self._describe(pixels) for pixels in X])

    def _describe(self, pixels):
        values = pixels.astype(np.float64) / 255.0
        channels = values.reshape(-1, 3)
        hist = [
            np.histogram(channels[:, c], bins=self.n_bins, range=(0.0, 1.0))[0]
            / channels.shape[0]
            for c in range(3)
        ]
        gy, gx = np.gradient(rgb2gray(values))
        magnitude = np.hypot(gx, gy)
        gradient = [
            np.abs(gx).mean(),
            np.abs(gy).mean(),
            magnitude.mean(),
            magnitude.std(),
        ]
        return np.concatenate(
            [channels.mean(axis=0), channels.var(axis=0), *hist, gradient]
        )
