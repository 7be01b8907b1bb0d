"""
Class activation mapping: weighted sums of spatial feature maps with the
class weights of the scoring layer, and their rendering over patches.
"""

# Authors: HistoML developers
# License: BSD 3 clause

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from skimage.transform import resize

from .._labels import ClassLabel, resolve_label
from ..exceptions import ValidationError

_HEAT_STOPS = np.array([0.0, 0.5, 1.0])
_HEAT_CHANNELS = (
    np.array([0.0, 0.0, 255.0]),
    np.array([0.0, 255.0, 0.0]),
    np.array([255.0, 0.0, 0.0]),
)


@dataclass(frozen=True)
class CamMap:
    """Activation map of one class over one patch.

    ``raw`` is the weighted sum of the feature maps, ``normalized`` its
    min-max rescaling to [0, 1] (all zero for a constant map) and
    ``upsampled`` the bilinear resize of ``normalized`` to the patch size.
    """

    label: ClassLabel
    raw: np.ndarray = field(repr=False)
    normalized: np.ndarray = field(repr=False)
    upsampled: np.ndarray = field(default=None, repr=False)


def compute_cam(feature_maps, model, label, patch_size=None):
    """Class activation map of ``label``.

    Parameters
    ----------
    feature_maps : array-like of shape (K, H, W)
        Spatial feature maps of a patch.

    model : LinearModel
        Scoring layer; its spatial weights must have ``K`` rows.

    label : ClassLabel
        Class whose weights are applied.

    patch_size : int, default=None
        Side of the upsampled map; None skips upsampling.

    Returns
    -------
    cam : CamMap

    Examples
    --------
    >>> import numpy as np
    >>> from HistoML.inference import LinearModel
    >>> from HistoML.explain import compute_cam
    >>> model = LinearModel(w=[[0.5, 0, 0], [-1.0, 0, 0]], b=[0, 0, 0])
    >>> cam = compute_cam(np.array([[[2.0]], [[3.0]]]), model, "non_carcinoma")
    >>> cam.raw.tolist(), cam.normalized.tolist()
    ([[-2.0]], [[0.0]])
    """
    maps = np.asarray(feature_maps, dtype=np.float64)
    if maps.ndim != 3:
        raise ValidationError(
            "feature maps must have shape (K, H, W), got %r" % (maps.shape,),
            field="feature_maps",
        )
    label = resolve_label(label)
    weights = model.spatial_weights(maps.shape[0])[:, int(label)]
    raw = np.tensordot(weights, maps, axes=1)
    low, high = raw.min(), raw.max()
    if high > low:
        normalized = (raw - low) / (high - low)
    else:
        normalized = np.zeros_like(raw)
    upsampled = None
    if patch_size is not None:
        upsampled = np.clip(
            resize(
                normalized,
                (patch_size, patch_size),
                order=1,
                mode="edge",
                anti_aliasing=False,
                preserve_range=True,
            ),
            0.0,
            1.0,
        )
    return CamMap(label=label, raw=raw, normalized=normalized, upsampled=upsampled)


def heat_color(v):
    """Blue to green to red colour of activations in [0, 1].

    Examples
    --------
    >>> from HistoML.explain import heat_color
    >>> heat_color([0.0, 0.5, 1.0]).tolist()
    [[0.0, 0.0, 255.0], [0.0, 255.0, 0.0], [255.0, 0.0, 0.0]]
    """
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    return np.stack([np.interp(v, _HEAT_STOPS, ch) for ch in _HEAT_CHANNELS], axis=-1)


def _cam_values(cam, shape):
    values = cam.upsampled if cam.upsampled is not None else cam.normalized
    if values.shape != shape:
        raise ValidationError(
            "activation map of shape %r does not match patch of shape %r"
            % (values.shape, shape),
            field="cam",
        )
    return values


def render_overlay(cam, patch, alpha=0.5):
    """Blend the heat colours of ``cam`` over a patch.

    Every pixel becomes ``(1 - alpha * v) * patch + alpha * v * heat_color(v)``
    with ``v`` the normalised activation.

    Parameters
    ----------
    cam : CamMap
        Map upsampled to the patch size.

    patch : Patch or ndarray of shape (size, size, 3)
        RGB patch.

    alpha : float, default=0.5
        Blend strength in [0, 1].

    Returns
    -------
    image : ndarray of uint8 of shape (size, size, 3)
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]", field="alpha")
    pixels = np.asarray(getattr(patch, "pixels", patch))
    v = _cam_values(cam, pixels.shape[:2])
    weight = (alpha * v)[..., np.newaxis]
    out = (1.0 - weight) * pixels + weight * heat_color(v)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def render_cam(cam):
    """Activation map on its own: heat colours over a black canvas."""
    values = cam.upsampled if cam.upsampled is not None else cam.normalized
    black = np.zeros(values.shape + (3,), dtype=np.uint8)
    return render_overlay(cam, black, alpha=1.0)


def save_png(image, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


@dataclass(frozen=True)
class SupportiveFeature:
    index: int
    weight: float
    exclusive: bool


def supportive_features(model, label, k=None):
    """Features voting for ``label``.

    Features with a positive weight for the class, by decreasing weight and
    then index. A feature is ``exclusive`` when no other class gives it a
    positive weight.

    Examples
    --------
    >>> from HistoML.datasets import load_lesion_weights
    >>> from HistoML.explain import supportive_features
    >>> [f.index for f in supportive_features(load_lesion_weights(), "idc")]
    [1344, 107, 1261, 1180, 1819]
    """
    label = resolve_label(label)
    column = model.w[:, int(label)]
    others = np.delete(model.w, int(label), axis=1)
    candidates = np.flatnonzero(column > 0)
    order = candidates[np.lexsort((candidates, -column[candidates]))]
    if k is not None:
        order = order[:k]
    return [
        SupportiveFeature(
            index=int(j),
            weight=float(column[j]),
            exclusive=bool((others[j] <= 0).all()),
        )
        for j in order
    ]
