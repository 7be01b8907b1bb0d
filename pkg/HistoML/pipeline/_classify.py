"""
Lesion classification: sample patches inside every proposed region at the
classification level, classify each patch and decide the region class by a
majority vote of the per-patch argmax.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import logging
import math
import warnings
from dataclasses import dataclass
from numbers import Integral, Real

import numpy as np
from joblib import Parallel, delayed
from sklearn.utils._param_validation import Interval, validate_parameter_constraints

from .._labels import ClassLabel, argmax_severity, resolve_label
from ..exceptions import (
    InferenceError,
    RelaxedSamplingWarning,
    SamplingError,
    ValidationError,
)
from ..inference import classify_patch
from ..slide import mpp_at_level, read_patch

logger = logging.getLogger(__name__)

REJECTIONS_PER_PATCH = 10_000
_BATCH = 256
_ENUMERATE_LIMIT = 1 << 22


@dataclass(frozen=True)
class SamplingConfig:
    """Parameters of in-region patch sampling.

    Parameters
    ----------
    level : int
        Classification pyramid level.

    patch_size : int, default=512
        Patch side in level pixels.

    n_min, n_max : int, default=5, 51
        Bounds of the number of patches per region.

    density : float, default=0.5
        Patches per patch area of region.

    overlap_frac : float, default=0.5
        Minimum fraction of a patch inside the region footprint, in (0, 1].

    seed : int, default=0
        Base seed; every region draws from the stream ``[seed, region_id]``.

    n_jobs : int, default=None
        Threads classifying regions concurrently.
    """

    level: int
    patch_size: int = 512
    n_min: int = 5
    n_max: int = 51
    density: float = 0.5
    overlap_frac: float = 0.5
    seed: int = 0
    n_jobs: int = None

    _parameter_constraints = {
        "level": [Interval(Integral, 0, None, closed="left")],
        "patch_size": [Interval(Integral, 1, None, closed="left")],
        "n_min": [Interval(Integral, 1, None, closed="left")],
        "n_max": [Interval(Integral, 1, None, closed="left")],
        "density": [Interval(Real, 0, None, closed="neither")],
        "overlap_frac": [Interval(Real, 0, 1, closed="right")],
        "seed": [Interval(Integral, 0, None, closed="left")],
        "n_jobs": [Integral, None],
    }

    def __post_init__(self):
        validate_parameter_constraints(
            self._parameter_constraints,
            {name: getattr(self, name) for name in self._parameter_constraints},
            caller_name="SamplingConfig",
        )
        if self.n_min > self.n_max:
            raise ValidationError(
                "n_min (%d) must not exceed n_max (%d)" % (self.n_min, self.n_max),
                field="n_min",
            )


@dataclass(frozen=True)
class PatchRecord:
    """Evidence of one sampled patch."""

    x: int
    y: int
    level: int
    size: int
    probs: tuple
    argmax: ClassLabel


@dataclass(frozen=True)
class LesionCall:
    """Classification of one region.

    ``votes`` counts the patch argmaxes per class in
    ``(NonCarcinoma, DCIS, IDC)`` order and always sums to ``n_patches``.
    """

    region_id: int
    n_patches: int
    votes: tuple
    predicted: ClassLabel
    patch_records: tuple = ()


def sample_count(area_mm2, cfg, mpp):
    """Number of patches to sample in a region of ``area_mm2``.

    ``N = clamp(ceil(density * area_mm2 / patch_area_mm2), n_min, n_max)``
    where the patch area uses the classification level calibration ``mpp``.

    Parameters
    ----------
    area_mm2 : float
        Region area, positive.

    cfg : SamplingConfig
        Sampling parameters.

    mpp : tuple of float
        ``(mpp_x, mpp_y)`` of the classification level.

    Returns
    -------
    n : int

    Examples
    --------
    >>> from HistoML.pipeline import SamplingConfig, sample_count
    >>> cfg = SamplingConfig(level=0, patch_size=100)
    >>> patch_area = (100 * 1.0 / 1000) ** 2
    >>> sample_count(20 * patch_area, cfg, (1.0, 1.0))
    10
    >>> sample_count(patch_area, cfg, (1.0, 1.0))
    5
    """
    if not area_mm2 > 0:
        raise ValidationError("region area must be positive", field="area_mm2")
    patch_area = (cfg.patch_size * mpp[0] / 1000.0) * (cfg.patch_size * mpp[1] / 1000.0)
    n = math.ceil(round(cfg.density * area_mm2 / patch_area, 9))
    return int(min(max(n, cfg.n_min), cfg.n_max))


def region_footprint(region, slide, level):
    """Region footprint rasterised at ``level``.

    The detection cells are mapped to level 0, clipped to the slide and
    rescaled to ``level``, rounding outwards.

    Returns
    -------
    origin : tuple of int
        ``(x, y)`` of the footprint array in ``level`` pixels.

    mask : ndarray of bool
        Footprint over the region bounding box at ``level``.
    """
    ds = slide.level(level).downsample
    rects = [
        (x // ds, y // ds, -(-(x + w) // ds), -(-(y + h) // ds))
        for x, y, w, h in region.footprint_rects(slide.width, slide.height)
    ]
    if not rects:
        raise SamplingError("region has no cells", region_id=region.region_id)
    x0 = min(r[0] for r in rects)
    y0 = min(r[1] for r in rects)
    x1 = max(r[2] for r in rects)
    y1 = max(r[3] for r in rects)
    mask = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    for rx0, ry0, rx1, ry1 in rects:
        mask[ry0 - y0 : ry1 - y0, rx0 - x0 : rx1 - x0] = True
    return (x0, y0), mask


def _integral(mask):
    return np.pad(mask.astype(np.int64).cumsum(0).cumsum(1), ((1, 0), (1, 0)))


def _covered(table, x, y, size):
    height, width = table.shape[0] - 1, table.shape[1] - 1
    x0, y0 = min(max(x, 0), width), min(max(y, 0), height)
    x1, y1 = min(max(x + size, 0), width), min(max(y + size, 0), height)
    return table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0]


def _coverage_grid(table, xs, ys, size):
    height, width = table.shape[0] - 1, table.shape[1] - 1
    x0, x1 = np.clip(xs, 0, width), np.clip(xs + size, 0, width)
    y0, y1 = np.clip(ys, 0, height)[:, None], np.clip(ys + size, 0, height)[:, None]
    return table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0]


def _relax(region, overlap_frac):
    overlap_frac /= 2
    warnings.warn(
        "region %d: overlap fraction relaxed to %g" % (region.region_id, overlap_frac),
        RelaxedSamplingWarning,
    )
    return overlap_frac


def _draw_from_feasible(table, xs, ys, size, n, overlap_frac, rng, region):
    grid = _coverage_grid(table, xs, ys, size)
    feasible = np.flatnonzero(grid >= overlap_frac * size * size)
    if not feasible.size:
        overlap_frac = _relax(region, overlap_frac)
        feasible = np.flatnonzero(grid >= overlap_frac * size * size)
    if not feasible.size:
        raise SamplingError(
            "no patch position overlaps the region by %g" % overlap_frac,
            region_id=region.region_id,
        )
    picks = feasible[rng.integers(0, feasible.size, n)]
    rows, cols = np.divmod(picks, xs.size)
    return list(zip(xs[cols].tolist(), ys[rows].tolist()))


def _draw_by_rejection(table, xs, ys, size, n, overlap_frac, rng, region):
    relaxed = False
    rejections = 0
    positions = []
    while len(positions) < n:
        bx = rng.integers(xs[0], xs[-1] + 1, _BATCH)
        by = rng.integers(ys[0], ys[-1] + 1, _BATCH)
        for x, y in zip(bx, by):
            if _covered(table, x, y, size) >= overlap_frac * size * size:
                positions.append((int(x), int(y)))
                if len(positions) == n:
                    break
                continue
            rejections += 1
            if rejections < REJECTIONS_PER_PATCH * n:
                continue
            if relaxed:
                raise SamplingError(
                    "sampled %d of %d patches before exhausting %d rejections"
                    % (len(positions), n, rejections),
                    region_id=region.region_id,
                )
            overlap_frac = _relax(region, overlap_frac)
            relaxed = True
            rejections = 0
    return positions


def sample_positions(region, slide, cfg):
    """Top-left corners of the patches sampled in ``region``.

    Candidate corners are every position whose patch intersects the region
    bounding box at the classification level; a candidate is accepted when
    at least ``overlap_frac`` of the patch lies in the footprint. Draws are
    uniform over the accepted candidates. Up to ``_ENUMERATE_LIMIT``
    candidates are scored at once from the integral image; larger regions
    fall back to rejection sampling with ``10000 * N`` rejections allowed.
    Either way the overlap fraction is halved once when no position
    qualifies, and a second failure raises.

    Returns
    -------
    positions : list of tuple of int
        ``(x, y)`` in classification level pixels, in draw order.

    Raises
    ------
    SamplingError
        If the footprint is empty or sampling fails after the relaxation.

    Examples
    --------
    >>> from HistoML import PhysicalCalibration
    >>> from HistoML.pipeline import RegionProposal, SamplingConfig, sample_positions
    >>> from HistoML.slide import LevelInfo, SlideMetadata
    >>> slide = SlideMetadata(
    ...     "s", 64, 64, PhysicalCalibration(1.0, 1.0), [LevelInfo(0, 1, 64, 64)], 64
    ... )
    >>> region = RegionProposal(
    ...     region_id=0, level=0, cells=((1, 1),), bbox_level0=(16, 16, 16, 16),
    ...     size_mm=0.016, area_mm2=0.000256, stride=16, patch_size=16, downsample=1,
    ... )
    >>> cfg = SamplingConfig(level=0, patch_size=16, overlap_frac=1.0)
    >>> sample_positions(region, slide, cfg)
    [(16, 16), (16, 16), (16, 16), (16, 16), (16, 16)]
    """
    (ox, oy), mask = region_footprint(region, slide, cfg.level)
    if not mask.any():
        raise SamplingError("region footprint is empty", region_id=region.region_id)
    n = sample_count(region.area_mm2, cfg, mpp_at_level(slide, cfg.level))
    table = _integral(mask)
    height, width = mask.shape
    size = cfg.patch_size
    xs = np.arange(1 - size, width)
    ys = np.arange(1 - size, height)
    rng = np.random.default_rng([cfg.seed, region.region_id])

    if xs.size * ys.size <= _ENUMERATE_LIMIT:
        draw = _draw_from_feasible
    else:
        draw = _draw_by_rejection
    positions = draw(table, xs, ys, size, n, cfg.overlap_frac, rng, region)
    return [(ox + x, oy + y) for x, y in positions]


def sample_patches(region, slide, cfg):
    """Read the patches drawn by :func:`sample_positions`."""
    return [
        read_patch(slide, cfg.level, x, y, cfg.patch_size)
        for x, y in sample_positions(region, slide, cfg)
    ]


def vote(patch_argmaxes):
    """Plurality class of the patch predictions, ties going to the most severe.

    Examples
    --------
    >>> from HistoML import ClassLabel
    >>> from HistoML.pipeline import vote
    >>> vote([ClassLabel.DCIS, ClassLabel.DCIS, ClassLabel.IDC]).name
    'DCIS'
    >>> vote([ClassLabel.NonCarcinoma, ClassLabel.DCIS, ClassLabel.IDC]).name
    'IDC'
    """
    labels = [int(resolve_label(label)) for label in patch_argmaxes]
    if not labels:
        raise ValidationError("cannot vote over zero patches", field="patch_argmaxes")
    return argmax_severity(np.bincount(labels, minlength=len(ClassLabel)))


def classify_region(region, slide, backend, cfg):
    """Sample, classify and vote inside one region.

    Parameters
    ----------
    region : RegionProposal
        Retained region.

    slide : SlideMetadata
        Opened slide.

    backend : PatchBackend
        Classification backend.

    cfg : SamplingConfig
        Sampling parameters.

    Returns
    -------
    call : LesionCall

    Raises
    ------
    SamplingError, InferenceError
        Tagged with the region id.
    """
    try:
        patches = sample_patches(region, slide, cfg)
    except SamplingError as exc:
        exc.region_id = region.region_id
        raise
    records = []
    for patch in patches:
        try:
            result = classify_patch(backend, patch)
        except InferenceError as exc:
            exc.region_id = region.region_id
            raise
        records.append(
            PatchRecord(
                x=patch.x,
                y=patch.y,
                level=patch.level,
                size=patch.size,
                probs=tuple(float(p) for p in result.probs),
                argmax=result.argmax,
            )
        )
    votes = np.bincount(
        [int(record.argmax) for record in records], minlength=len(ClassLabel)
    )
    predicted = argmax_severity(votes)
    logger.debug(
        "region %d: %d patches, votes %s -> %s",
        region.region_id,
        len(records),
        votes.tolist(),
        predicted.slug,
    )
    return LesionCall(
        region_id=region.region_id,
        n_patches=len(records),
        votes=tuple(int(v) for v in votes),
        predicted=predicted,
        patch_records=tuple(records),
    )


def classify_regions(regions, slide, backend, cfg):
    """Classify every region; the calls come back in region order."""
    return Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
        delayed(classify_region)(region, slide, backend, cfg) for region in regions
    )
