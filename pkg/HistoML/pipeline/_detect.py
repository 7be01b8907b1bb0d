"""
Lesion detection: scan a pyramid level patch by patch into a probability
heatmap, group the cells above threshold into connected components and keep
the components whose physical extent passes the minimum size.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import logging
import math
from dataclasses import dataclass, field
from numbers import Integral, Real

import numpy as np
from joblib import Parallel, delayed
from skimage.color import rgb2gray
from skimage.measure import label
from sklearn.utils._param_validation import (
    Interval,
    StrOptions,
    validate_parameter_constraints,
)

from ..exceptions import InferenceError, ValidationError
from ..inference import detect_prob
from ..slide import mpp_at_level, read_patch

logger = logging.getLogger(__name__)

TISSUE_LUMINANCE = 240


@dataclass(frozen=True)
class ScanConfig:
    """Parameters of a detection scan.

    Parameters
    ----------
    level : int
        Pyramid level to scan.

    patch_size : int, default=256
        Patch side in level pixels.

    stride : int, default=256
        Step between patches, at most ``patch_size``.

    tissue_filter : bool, default=True
        Skip the backend for patches whose mean luminance is >= 240; their
        cell is set to 0.

    n_jobs : int, default=None
        Threads used to scan rows in parallel; the heatmap does not depend on
        it.
    """

    level: int
    patch_size: int = 256
    stride: int = 256
    tissue_filter: bool = True
    n_jobs: int = None

    _parameter_constraints = {
        "level": [Interval(Integral, 0, None, closed="left")],
        "patch_size": [Interval(Integral, 1, None, closed="left")],
        "stride": [Interval(Integral, 1, None, closed="left")],
        "tissue_filter": ["boolean"],
        "n_jobs": [Integral, None],
    }

    def __post_init__(self):
        validate_parameter_constraints(
            self._parameter_constraints,
            {name: getattr(self, name) for name in self._parameter_constraints},
            caller_name="ScanConfig",
        )
        if self.stride > self.patch_size:
            raise ValidationError(
                "stride (%d) must not exceed patch_size (%d)"
                % (self.stride, self.patch_size),
                field="stride",
            )


@dataclass(frozen=True)
class Heatmap:
    """Lesion probability of every scanned patch.

    Cell ``(row, col)`` is the patch whose top-left corner is
    ``(col * stride, row * stride)`` in pixels of ``level``.
    """

    level: int
    stride: int
    patch_size: int
    downsample: int
    grid: np.ndarray = field(repr=False)

    @property
    def rows(self):
        return self.grid.shape[0]

    @property
    def cols(self):
        return self.grid.shape[1]


@dataclass(frozen=True)
class RegionProposal:
    """Connected group of heatmap cells retained as a candidate lesion.

    ``bbox_level0`` is ``(x, y, w, h)`` in level-0 pixels, ``size_mm`` the
    longest physical side of that box and ``area_mm2`` the physical area of
    the union of the cell footprints.
    """

    region_id: int
    level: int
    cells: tuple
    bbox_level0: tuple
    size_mm: float
    area_mm2: float
    stride: int
    patch_size: int
    downsample: int

    def footprint_rects(self, width0, height0):
        """Level-0 ``(x, y, w, h)`` footprints of the cells, clipped to the slide."""
        scale = self.downsample
        rects = []
        for row, col in self.cells:
            x0, y0 = col * self.stride * scale, row * self.stride * scale
            x1 = min(x0 + self.patch_size * scale, width0)
            y1 = min(y0 + self.patch_size * scale, height0)
            rects.append((x0, y0, x1 - x0, y1 - y0))
        return rects


def grid_shape(width, height, patch_size, stride):
    """Heatmap ``(rows, cols)`` covering a level of ``width x height`` pixels.

    Examples
    --------
    >>> from HistoML.pipeline import grid_shape
    >>> grid_shape(1024, 1024, 256, 256)
    (4, 4)
    """
    rows = max(math.ceil((height - patch_size) / stride), 0) + 1
    cols = max(math.ceil((width - patch_size) / stride), 0) + 1
    return rows, cols


def is_background(pixels):
    """True when the mean luminance of ``pixels`` is >= 240."""
    return rgb2gray(pixels).mean() * 255.0 >= TISSUE_LUMINANCE


def _scan_row(slide, backend, cfg, row, cols):
    values = np.zeros(cols, dtype=np.float32)
    skipped = 0
    for col in range(cols):
        patch = read_patch(
            slide, cfg.level, col * cfg.stride, row * cfg.stride, cfg.patch_size
        )
        if cfg.tissue_filter and is_background(patch.pixels):
            skipped += 1
            continue
        try:
            values[col] = detect_prob(backend, patch).probability
        except InferenceError as exc:
            exc.cell = (row, col)
            raise
    return values, skipped


def scan(slide, backend, cfg):
    """Build the detection heatmap of a slide.

    Parameters
    ----------
    slide : SlideMetadata
        Opened slide.

    backend : PatchBackend
        Detection backend.

    cfg : ScanConfig
        Scan geometry.

    Returns
    -------
    heatmap : Heatmap

    Raises
    ------
    InferenceError
        If the backend fails; ``cell`` holds the grid coordinates.
    """
    info = slide.level(cfg.level)
    rows, cols = grid_shape(info.width, info.height, cfg.patch_size, cfg.stride)
    results = Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
        delayed(_scan_row)(slide, backend, cfg, row, cols) for row in range(rows)
    )
    grid = np.stack([values for values, _ in results])
    skipped = sum(count for _, count in results)
    logger.debug(
        "%s: scanned %dx%d cells at level %d, %d skipped as background",
        slide.slide_id,
        rows,
        cols,
        cfg.level,
        skipped,
    )
    return Heatmap(
        level=cfg.level,
        stride=cfg.stride,
        patch_size=cfg.patch_size,
        downsample=info.downsample,
        grid=grid,
    )


def extract_components(heatmap, threshold=0.5, connectivity=8):
    """Connected components of the cells at or above ``threshold``.

    Parameters
    ----------
    heatmap : Heatmap or ndarray of shape (rows, cols)
        Probability grid.

    threshold : float, default=0.5
        Cells with probability >= threshold are foreground; in (0, 1).

    connectivity : {4, 8}, default=8
        Neighbourhood used to connect cells.

    Returns
    -------
    components : list of tuple of (int, int)
        Cells of each component in row-major order; components sorted by
        their minimum row, then minimum column.

    Examples
    --------
    >>> import numpy as np
    >>> from HistoML.pipeline import extract_components
    >>> extract_components(np.array([[0.9, 0.2], [0.8, 0.9]]), 0.5, 8)
    [((0, 0), (1, 0), (1, 1))]
    """
    validate_parameter_constraints(
        {
            "threshold": [Interval(Real, 0, 1, closed="neither")],
            "connectivity": [StrOptions({"4", "8"})],
        },
        {"threshold": threshold, "connectivity": str(connectivity)},
        caller_name="extract_components",
    )
    grid = np.asarray(getattr(heatmap, "grid", heatmap))
    labels = label(grid >= threshold, connectivity=1 if int(connectivity) == 4 else 2)
    components = []
    for number in range(1, labels.max() + 1):
        cells = tuple((int(r), int(c)) for r, c in np.argwhere(labels == number))
        components.append(cells)
    components.sort(key=lambda cells: (min(cells)[0], min(c for _, c in cells)))
    return components


def physical_size_mm(width, height, mpp_x, mpp_y):
    """Longest side in millimetres of a ``width x height`` pixel box.

    Examples
    --------
    >>> from HistoML.pipeline import physical_size_mm
    >>> physical_size_mm(4200, 800, 0.25, 0.25)
    1.05
    """
    return max(width * mpp_x, height * mpp_y) / 1000.0


def propose_regions(components, heatmap, slide, min_size_mm=1.0):
    """Turn components into region proposals and apply the size filter.

    Parameters
    ----------
    components : list of tuple of (int, int)
        Output of :func:`extract_components`.

    heatmap : Heatmap
        Heatmap the components come from.

    slide : SlideMetadata
        Slide, for level geometry and calibration.

    min_size_mm : float, default=1.0
        Minimum longest side of the level-0 bounding box, in millimetres.

    Returns
    -------
    regions : list of RegionProposal
        Retained proposals numbered from 0 in component order.
    """
    if not min_size_mm > 0:
        raise ValidationError("min_size_mm must be positive", field="min_size_mm")
    info = slide.level(heatmap.level)
    mpp_x0, mpp_y0 = slide.calibration.mpp_x, slide.calibration.mpp_y
    level_mpp = mpp_at_level(slide, heatmap.level)
    s, p, ds = heatmap.stride, heatmap.patch_size, info.downsample

    regions = []
    for cells in components:
        rows = np.array([r for r, _ in cells])
        cols = np.array([c for _, c in cells])
        x0, y0 = int(cols.min()) * s, int(rows.min()) * s
        x1 = min(int(cols.max()) * s + p, info.width)
        y1 = min(int(rows.max()) * s + p, info.height)

        footprint = np.zeros((y1 - y0, x1 - x0), dtype=bool)
        for r, c in cells:
            footprint[r * s - y0 : r * s - y0 + p, c * s - x0 : c * s - x0 + p] = True
        area_mm2 = footprint.sum() * level_mpp[0] * level_mpp[1] / 1e6

        bx, by = x0 * ds, y0 * ds
        bw, bh = min(x1 * ds, slide.width) - bx, min(y1 * ds, slide.height) - by
        size_mm = physical_size_mm(bw, bh, mpp_x0, mpp_y0)
        if size_mm < min_size_mm:
            logger.debug(
                "dropped component at (%d, %d): %.3f mm",
                rows.min(),
                cols.min(),
                size_mm,
            )
            continue
        regions.append(
            RegionProposal(
                region_id=len(regions),
                level=heatmap.level,
                cells=tuple(cells),
                bbox_level0=(bx, by, bw, bh),
                size_mm=size_mm,
                area_mm2=float(area_mm2),
                stride=s,
                patch_size=p,
                downsample=ds,
            )
        )
    logger.debug(
        "%s: %d of %d components kept", slide.slide_id, len(regions), len(components)
    )
    return regions
