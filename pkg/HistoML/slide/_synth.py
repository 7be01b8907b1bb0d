"""
Synthetic slides with geometric lesions of known class, position and size.

Lesion pixels carry a colour signature per class (one dominant channel),
background pixels are near-white. ``truth.json`` is written beside
``slide.json``.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import json
import logging
from dataclasses import dataclass, field
from numbers import Integral, Real
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from skimage.draw import ellipse, polygon
from sklearn.utils._param_validation import (
    Interval,
    StrOptions,
    validate_parameter_constraints,
)

from .._labels import ClassLabel, PhysicalCalibration, max_severity, resolve_label
from ..exceptions import SlideFormatError, ValidationError
from ._pyramid import write_slide

logger = logging.getLogger(__name__)

TRUTH_FILE = "truth.json"

SIGNATURE_COLORS = np.array(
    [
        [70, 180, 70],  # NonCarcinoma: green
        [70, 70, 180],  # DCIS: blue
        [180, 70, 70],  # IDC: red
    ],
    dtype=np.int16,
)
COLOR_JITTER = 10
BACKGROUND_RANGE = (238, 255)
BLOB_HARMONICS = (2, 3, 4)
BLOB_MAX_AMPLITUDE = 0.12
BLOB_VERTICES = 256


@dataclass(frozen=True)
class LesionSpec:
    """One lesion to paint.

    ``center`` is ``(x, y)`` and ``axes`` the semi-axes ``(ax, ay)``, both in
    level-0 pixels. ``texture_noise`` is the probability that a noise grain is
    painted with the signature of another class.
    """

    label: ClassLabel
    center: tuple
    axes: tuple
    shape: str = "ellipse"
    texture_noise: float = 0.0

    _parameter_constraints = {
        "shape": [StrOptions({"ellipse", "blob"})],
        "texture_noise": [Interval(Real, 0, 1, closed="both")],
    }

    def __post_init__(self):
        object.__setattr__(self, "label", resolve_label(self.label))
        validate_parameter_constraints(
            self._parameter_constraints,
            {"shape": self.shape, "texture_noise": self.texture_noise},
            caller_name="LesionSpec",
        )
        if min(self.axes) <= 0:
            raise ValidationError("lesion axes must be positive", field="axes")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe of a synthetic slide."""

    slide_id: str
    seed: int
    width: int
    height: int
    mpp: float
    lesions: tuple = ()
    tile_size: int = 512
    noise_grain: int = 1
    n_levels: int = None

    _parameter_constraints = {
        "seed": [Interval(Integral, 0, 2**64 - 1, closed="both")],
        "width": [Interval(Integral, 1, None, closed="left")],
        "height": [Interval(Integral, 1, None, closed="left")],
        "mpp": [Interval(Real, 0, None, closed="neither")],
        "tile_size": [Interval(Integral, 1, None, closed="left")],
        "noise_grain": [Interval(Integral, 1, None, closed="left")],
        "n_levels": [Interval(Integral, 1, None, closed="left"), None],
    }

    def __post_init__(self):
        object.__setattr__(self, "lesions", tuple(self.lesions))
        validate_parameter_constraints(
            self._parameter_constraints,
            {name: getattr(self, name) for name in self._parameter_constraints},
            caller_name="SynthSpec",
        )


@dataclass(frozen=True)
class LesionTruth:
    label: ClassLabel
    bbox: tuple
    area_mm2: float
    rle_mask: str = field(repr=False)

    def mask_indices(self):
        """Flat level-0 indices (row-major) covered by the lesion."""
        return decode_rle(self.rle_mask)


@dataclass(frozen=True)
class GroundTruth:
    """Annotations of a synthetic slide."""

    slide_id: str
    slide_label: ClassLabel
    lesions: tuple = ()

    def to_json(self):
        return {
            "slide_label": self.slide_label.slug,
            "lesions": [
                {
                    "class": lesion.label.slug,
                    "bbox": list(lesion.bbox),
                    "area_mm2": lesion.area_mm2,
                    "rle_mask": lesion.rle_mask,
                }
                for lesion in self.lesions
            ],
        }


def encode_rle(indices):
    """Encode sorted flat indices as comma separated ``start:length`` runs.

    Examples
    --------
    >>> from HistoML.slide import encode_rle
    >>> encode_rle([3, 4, 5, 9, 10])
    '3:3,9:2'
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        return ""
    breaks = np.flatnonzero(np.diff(indices) != 1)
    starts = indices[np.r_[0, breaks + 1]]
    ends = indices[np.r_[breaks, indices.size - 1]]
    return ",".join("%d:%d" % (s, e - s + 1) for s, e in zip(starts, ends))


def decode_rle(rle):
    """Inverse of :func:`encode_rle`."""
    if not rle:
        return np.empty(0, dtype=np.int64)
    try:
        runs = [tuple(int(v) for v in run.split(":")) for run in rle.split(",")]
        return np.concatenate(
            [np.arange(start, start + length, dtype=np.int64) for start, length in runs]
        )
    except ValueError as exc:
        raise SlideFormatError("malformed run-length mask: %s" % exc) from exc


def _reach(lesion):
    """Largest half extents of the painted lesion along x and y."""
    scale = 1.0
    if lesion.shape == "blob":
        scale += len(BLOB_HARMONICS) * BLOB_MAX_AMPLITUDE
    return lesion.axes[0] * scale, lesion.axes[1] * scale


def _rasterize(lesion, shape, rng):
    cx, cy = lesion.center
    ax, ay = lesion.axes
    if lesion.shape == "ellipse":
        return ellipse(cy, cx, ay, ax, shape=shape)
    theta = np.linspace(0, 2 * np.pi, BLOB_VERTICES, endpoint=False)
    radius = np.ones_like(theta)
    amplitudes = rng.uniform(0, BLOB_MAX_AMPLITUDE, size=len(BLOB_HARMONICS))
    phases = rng.uniform(0, 2 * np.pi, size=len(BLOB_HARMONICS))
    for k, amplitude, phase in zip(BLOB_HARMONICS, amplitudes, phases):
        radius += amplitude * np.cos(k * theta + phase)
    rows = cy + ay * radius * np.sin(theta)
    cols = cx + ax * radius * np.cos(theta)
    return polygon(rows, cols, shape)


def _lesion_colors(lesion, rr, cc, grain, rng):
    n = rr.size
    labels = np.full(n, int(lesion.label))
    if lesion.texture_noise > 0:
        keys = (rr // grain) * (cc.max() + 1) + cc // grain
        _, grains = np.unique(keys, return_inverse=True)
        grains = grains.ravel()
        n_grains = grains.max() + 1
        flipped = rng.random(n_grains) < lesion.texture_noise
        offsets = rng.integers(1, 3, size=n_grains)
        labels = np.where(flipped[grains], (labels + offsets[grains]) % 3, labels)
    jitter = rng.integers(-COLOR_JITTER, COLOR_JITTER + 1, size=(n, 3))
    return (SIGNATURE_COLORS[labels] + jitter).astype(np.uint8)


def generate(spec, out):
    """Write a synthetic slide container and its ground truth.

    Parameters
    ----------
    spec : SynthSpec
        Slide recipe.

    out : str or Path
        Output container directory.

    Returns
    -------
    truth : GroundTruth
        Per-lesion class, bounding box ``[x, y, w, h]``, area in mm² and
        run-length mask, plus the slide label (most severe lesion class, or
        NonCarcinoma for a lesion-free slide).

    Raises
    ------
    ValidationError
        If two lesions overlap or a lesion extends past the slide border.
    """
    rng = np.random.default_rng(spec.seed)
    shape = (spec.height, spec.width)
    low, high = BACKGROUND_RANGE
    image = rng.integers(low, high + 1, size=shape + (3,), dtype=np.uint8)
    owner = np.zeros(shape, dtype=np.int32)
    calibration = PhysicalCalibration(spec.mpp, spec.mpp)

    lesions = []
    for number, lesion in enumerate(spec.lesions, start=1):
        (cx, cy), (rx, ry) = lesion.center, _reach(lesion)
        inside = rx <= cx <= spec.width - 1 - rx and ry <= cy <= spec.height - 1 - ry
        if not inside:
            raise ValidationError(
                "lesion %d extends past the slide border" % (number - 1),
                field="lesions",
            )
        rr, cc = _rasterize(lesion, shape, rng)
        taken = owner[rr, cc]
        if taken.any():
            raise ValidationError(
                "lesion %d overlaps lesion %d" % (number - 1, taken.max() - 1),
                field="lesions",
            )
        owner[rr, cc] = number
        image[rr, cc] = _lesion_colors(lesion, rr, cc, spec.noise_grain, rng)

        flat = np.sort(rr.astype(np.int64) * spec.width + cc)
        x0, y0 = int(cc.min()), int(rr.min())
        lesions.append(
            LesionTruth(
                label=lesion.label,
                bbox=(x0, y0, int(cc.max()) - x0 + 1, int(rr.max()) - y0 + 1),
                area_mm2=flat.size * calibration.pixel_area_mm2,
                rle_mask=encode_rle(flat),
            )
        )

    slide_label = (
        max_severity(lesion.label for lesion in lesions)
        if lesions
        else ClassLabel.NonCarcinoma
    )
    truth = GroundTruth(spec.slide_id, slide_label, tuple(lesions))

    out = Path(out)
    write_slide(
        out,
        image,
        slide_id=spec.slide_id,
        mpp=spec.mpp,
        tile_size=spec.tile_size,
        n_levels=spec.n_levels,
    )
    (out / TRUTH_FILE).write_text(
        json.dumps(truth.to_json(), indent=2), encoding="utf-8"
    )
    logger.info(
        "generated %s: %d lesions, label %s",
        spec.slide_id,
        len(lesions),
        slide_label.slug,
    )
    return truth


def load_truth(path):
    """Read ``truth.json`` from a slide container directory."""
    path = Path(path)
    truth_path = path / TRUTH_FILE if path.is_dir() else path
    try:
        doc = json.loads(truth_path.read_text(encoding="utf-8"))
        slide_doc = (truth_path.parent / "slide.json").read_text(encoding="utf-8")
        slide_id = json.loads(slide_doc)["slide_id"]
        lesions = tuple(
            LesionTruth(
                label=ClassLabel.from_name(item["class"]),
                bbox=tuple(int(v) for v in item["bbox"]),
                area_mm2=float(item["area_mm2"]),
                rle_mask=item["rle_mask"],
            )
            for item in doc["lesions"]
        )
        return GroundTruth(slide_id, ClassLabel.from_name(doc["slide_label"]), lesions)
    except FileNotFoundError as exc:
        raise SlideFormatError("%s not found" % exc.filename) from None
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SlideFormatError("malformed %s: %r" % (truth_path, exc)) from exc


def _place(radii, size, margin, rng, max_tries=1000):
    """Rejection-sample non-overlapping centres; ``None`` for unplaceable ones."""
    centers = []
    placed = []
    for radius in radii:
        lo, hi = radius + margin, size - radius - margin
        center = None
        if lo < hi:
            for _ in range(max_tries):
                candidate = rng.uniform(lo, hi, size=2)
                if all(
                    np.hypot(*(candidate - other)) >= radius + r_other + margin
                    for other, r_other in placed
                ):
                    center = candidate
                    break
        if center is not None:
            placed.append((center, radius))
        centers.append(center)
    return centers


def make_cohort(
    n_per_class,
    *,
    seed,
    size=4096,
    mpp=2.0,
    lesion_mm=(1.5, 4.0),
    extra_lesions=(0, 2),
    texture_noise=0.0,
    noise_grain=1,
    margin_mm=0.6,
    tile_size=512,
):
    """Build recipes for a balanced synthetic cohort.

    Every slide has one primary lesion of its class plus extra lesions of lower
    severity; NonCarcinoma slides get one or two NonCarcinoma lesions. Lesion
    diameters (major axis) are drawn uniformly from ``lesion_mm``.

    Parameters
    ----------
    n_per_class : int
        Number of slides per class.

    seed : int
        Cohort seed; per-slide seeds are drawn from it.

    size : int, default=4096
        Slide side in level-0 pixels.

    mpp : float, default=2.0
        Microns per pixel at level 0.

    lesion_mm : (float, float), default=(1.5, 4.0)
        Range of lesion diameters in millimetres.

    extra_lesions : (int, int), default=(0, 2)
        Inclusive range of the number of extra lesions.

    texture_noise : float, default=0.0
        Noise level of every lesion.

    noise_grain : int, default=1
        Side of the noise grains in pixels.

    margin_mm : float, default=0.6
        Minimum gap between lesions and between lesions and the slide border.

    tile_size : int, default=512
        Tile side of the written containers.

    Returns
    -------
    specs : list of SynthSpec
        ``3 * n_per_class`` recipes named ``slide_000``, ``slide_001``, ...
    """
    rng = np.random.default_rng(seed)
    px_per_mm = 1000.0 / mpp
    margin = margin_mm * px_per_mm
    specs = []
    for index in range(3 * n_per_class):
        label = ClassLabel(index // n_per_class)
        n_extra = int(rng.integers(extra_lesions[0], extra_lesions[1] + 1))
        if label is ClassLabel.NonCarcinoma:
            classes = [label] * (1 + min(n_extra, 1))
        else:
            classes = [label] + [
                ClassLabel(int(rng.integers(0, int(label)))) for _ in range(n_extra)
            ]
        diameters = rng.uniform(*lesion_mm, size=len(classes)) * px_per_mm
        ratios = rng.uniform(0.75, 1.0, size=len(classes))
        centers = _place(diameters / 2, size, margin, rng)
        if centers[0] is None:
            raise ValidationError(
                "cannot place a %.2f mm lesion on a %d px slide"
                % (diameters[0] / px_per_mm, size),
                field="size",
            )
        lesions = []
        for lesion_label, diameter, ratio, center in zip(
            classes, diameters, ratios, centers
        ):
            if center is None:
                logger.debug("slide %03d: dropped an unplaceable extra lesion", index)
                continue
            semi = diameter / 2
            axes = (semi, semi * ratio) if rng.random() < 0.5 else (semi * ratio, semi)
            lesions.append(
                LesionSpec(
                    label=lesion_label,
                    center=(float(center[0]), float(center[1])),
                    axes=axes,
                    texture_noise=texture_noise,
                )
            )
        specs.append(
            SynthSpec(
                slide_id="slide_%03d" % index,
                seed=int(rng.integers(0, 2**63 - 1)),
                width=size,
                height=size,
                mpp=mpp,
                lesions=tuple(lesions),
                tile_size=tile_size,
                noise_grain=noise_grain,
            )
        )
    return specs


def generate_cohort(specs, out, *, n_jobs=None):
    """Generate every recipe into ``out/<slide_id>``; returns truths by slide id."""
    out = Path(out)
    truths = Parallel(n_jobs=n_jobs)(
        delayed(generate)(spec, out / spec.slide_id) for spec in specs
    )
    return {truth.slide_id: truth for truth in truths}
