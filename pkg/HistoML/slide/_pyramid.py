"""
Slide container: a directory holding ``slide.json`` and one tile directory per
pyramid level, ``level_{L}/tile_{row}_{col}.png``.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache, partial
from pathlib import Path

import numpy as np
from PIL import Image
from skimage.transform import downscale_local_mean

from .._labels import PhysicalCalibration
from ..exceptions import LevelError, SlideFormatError, ValidationError

logger = logging.getLogger(__name__)

SLIDE_FILE = "slide.json"
BACKGROUND = 255
TILE_CACHE_SIZE = 256


@dataclass(frozen=True)
class LevelInfo:
    """Geometry of one pyramid level."""

    index: int
    downsample: int
    width: int
    height: int


@dataclass(frozen=True)
class Patch:
    """Square RGB patch read from a pyramid level.

    ``x`` and ``y`` are the top-left corner in pixels of ``level``; parts of the
    patch outside the level are white.
    """

    slide_id: str
    level: int
    x: int
    y: int
    size: int
    pixels: np.ndarray = field(repr=False, compare=False)

    def ref(self):
        """Reference used to key precomputed features and galleries."""
        return {
            "slide_id": self.slide_id,
            "level": self.level,
            "x": self.x,
            "y": self.y,
            "size": self.size,
        }


def _load_tile(root, level, row, col):
    path = Path(root) / ("level_%d" % level) / ("tile_%d_%d.png" % (row, col))
    try:
        with Image.open(path) as img:
            tile = np.asarray(img.convert("RGB"))
    except FileNotFoundError:
        raise SlideFormatError("missing tile %s" % path, field="tiles") from None
    except OSError as exc:
        raise SlideFormatError("unreadable tile %s: %s" % (path, exc)) from exc
    tile.flags.writeable = False
    return tile


@dataclass(frozen=True)
class SlideMetadata:
    """Metadata of an opened slide container.

    Parameters
    ----------
    slide_id : str
        Identifier of the slide.

    width, height : int
        Level-0 dimensions in pixels.

    calibration : PhysicalCalibration
        Microns per pixel at level 0.

    levels : tuple of LevelInfo
        Pyramid levels, level 0 first, downsample strictly increasing.

    tile_size : int
        Side of the square PNG tiles, a power of two.

    path : Path, default=None
        Container directory; required to read pixels.
    """

    slide_id: str
    width: int
    height: int
    calibration: PhysicalCalibration
    levels: tuple
    tile_size: int
    path: Path = field(default=None, compare=False, repr=False)
    _tiles: object = field(default=None, init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        self._validate()
        self._attach_cache()

    def _attach_cache(self):
        loader = None
        if self.path is not None:
            loader = lru_cache(maxsize=TILE_CACHE_SIZE)(partial(_load_tile, self.path))
        object.__setattr__(self, "_tiles", loader)

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_tiles"] = None
        return state

    def __setstate__(self, state):
        for key, value in state.items():
            object.__setattr__(self, key, value)
        self._attach_cache()

    def _validate(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("slide dimensions must be positive", field="width")
        ts = self.tile_size
        if ts <= 0 or ts & (ts - 1):
            raise ValidationError(
                "tile_size must be a power of two, got %r" % ts, field="tile_size"
            )
        if not self.levels:
            raise ValidationError("a slide needs at least one level", field="levels")
        if self.levels[0].downsample != 1:
            raise ValidationError("level 0 must have downsample 1", field="downsample")
        for previous, current in zip(self.levels, self.levels[1:]):
            if current.downsample <= previous.downsample:
                raise ValidationError("downsample not increasing", field="downsample")
        for position, info in enumerate(self.levels):
            if info.index != position:
                raise ValidationError(
                    "level %d is stored with index %d" % (position, info.index),
                    field="index",
                )
            expected = (
                math.ceil(self.width / info.downsample),
                math.ceil(self.height / info.downsample),
            )
            if (info.width, info.height) != expected:
                raise ValidationError(
                    "level %d has dimensions %dx%d, expected %dx%d"
                    % (info.index, info.width, info.height, *expected),
                    field="levels",
                )

    @property
    def n_levels(self):
        return len(self.levels)

    def level(self, index):
        """Return the :class:`LevelInfo` of ``index`` or raise ``LevelError``."""
        if not isinstance(index, (int, np.integer)) or not (
            0 <= index < len(self.levels)
        ):
            raise LevelError(index, len(self.levels))
        return self.levels[index]

    def tile(self, level, row, col):
        if self._tiles is None:
            raise SlideFormatError("slide %s has no container path" % self.slide_id)
        return self._tiles(level, row, col)

    def to_json(self):
        return {
            "slide_id": self.slide_id,
            "width": self.width,
            "height": self.height,
            "mpp_x": self.calibration.mpp_x,
            "mpp_y": self.calibration.mpp_y,
            "tile_size": self.tile_size,
            "levels": [asdict(info) for info in self.levels],
        }


def _metadata_from_json(doc, path):
    try:
        levels = [
            LevelInfo(
                index=int(item["index"]),
                downsample=int(item["downsample"]),
                width=int(item["width"]),
                height=int(item["height"]),
            )
            for item in doc["levels"]
        ]
        return SlideMetadata(
            slide_id=str(doc["slide_id"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
            calibration=PhysicalCalibration(float(doc["mpp_x"]), float(doc["mpp_y"])),
            levels=levels,
            tile_size=int(doc["tile_size"]),
            path=path,
        )
    except KeyError as exc:
        raise SlideFormatError(
            "%s is missing key %s" % (path / SLIDE_FILE, exc), field=exc.args[0]
        ) from None
    except (TypeError, AttributeError) as exc:
        raise SlideFormatError("%s is malformed: %s" % (path / SLIDE_FILE, exc))


def open_slide(path):
    """Open a slide container and validate its metadata.

    Parameters
    ----------
    path : str or Path
        Container directory.

    Returns
    -------
    slide : SlideMetadata
        Validated metadata bound to the container for pixel reads.

    Raises
    ------
    SlideFormatError
        If ``slide.json`` or a level directory is missing or unreadable.

    ValidationError
        If the metadata violates a pyramid invariant; ``field`` names it.
    """
    path = Path(path)
    meta_path = path / SLIDE_FILE
    try:
        doc = json.loads(meta_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SlideFormatError("%s not found" % meta_path, field=SLIDE_FILE) from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SlideFormatError("cannot parse %s: %s" % (meta_path, exc)) from exc
    if not isinstance(doc, dict):
        raise SlideFormatError("%s must hold a JSON object" % meta_path)

    slide = _metadata_from_json(doc, path)
    for info in slide.levels:
        if not (path / ("level_%d" % info.index)).is_dir():
            raise SlideFormatError(
                "level directory level_%d missing in %s" % (info.index, path),
                field="levels",
            )
    logger.debug("opened %s with %d levels", slide.slide_id, slide.n_levels)
    return slide


def _downsample_image(image, factor):
    if factor == 1:
        return image
    reduced = downscale_local_mean(image, (factor, factor, 1), cval=BACKGROUND)
    return np.clip(np.rint(reduced), 0, 255).astype(np.uint8)


def write_slide(path, image, *, slide_id, mpp, tile_size=512, n_levels=None):
    """Write an RGB image as a tiled pyramid container.

    Level ``L`` has downsample ``2**L`` and is the block mean of level 0, with
    white filling the incomplete blocks on the right and bottom edges.

    Parameters
    ----------
    path : str or Path
        Output directory, created if needed.

    image : ndarray of shape (height, width, 3), dtype uint8
        Level-0 pixels.

    slide_id : str
        Identifier stored in ``slide.json``.

    mpp : float or (float, float)
        Microns per pixel at level 0, isotropic or per axis.

    tile_size : int, default=512
        Tile side, a power of two.

    n_levels : int, default=None
        Number of levels. By default levels are added until the whole level
        fits in one tile.

    Returns
    -------
    slide : SlideMetadata
        Metadata of the written container.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValidationError("image must be an (H, W, 3) uint8 array", field="image")
    height, width = image.shape[:2]
    mpp_x, mpp_y = (mpp, mpp) if np.isscalar(mpp) else mpp

    if n_levels is None:
        n_levels = 1
        while max(width, height) / 2 ** (n_levels - 1) > tile_size:
            n_levels += 1
    if n_levels < 1:
        raise ValidationError("n_levels must be >= 1", field="n_levels")

    levels = [
        LevelInfo(
            index=index,
            downsample=2**index,
            width=math.ceil(width / 2**index),
            height=math.ceil(height / 2**index),
        )
        for index in range(n_levels)
    ]
    path = Path(path)
    slide = SlideMetadata(
        slide_id=slide_id,
        width=width,
        height=height,
        calibration=PhysicalCalibration(float(mpp_x), float(mpp_y)),
        levels=levels,
        tile_size=tile_size,
        path=path,
    )

    path.mkdir(parents=True, exist_ok=True)
    for info in levels:
        pixels = _downsample_image(image, info.downsample)
        level_dir = path / ("level_%d" % info.index)
        level_dir.mkdir(exist_ok=True)
        for row in range(math.ceil(info.height / tile_size)):
            for col in range(math.ceil(info.width / tile_size)):
                tile = pixels[
                    row * tile_size : (row + 1) * tile_size,
                    col * tile_size : (col + 1) * tile_size,
                ]
                Image.fromarray(np.ascontiguousarray(tile)).save(
                    level_dir / ("tile_%d_%d.png" % (row, col)), format="PNG"
                )
    (path / SLIDE_FILE).write_text(
        json.dumps(slide.to_json(), indent=2), encoding="utf-8"
    )
    logger.debug("wrote %s (%dx%d, %d levels)", slide_id, width, height, n_levels)
    return slide


def read_patch(slide, level, x, y, size):
    """Read a square patch, padding everything outside the level with white.

    Parameters
    ----------
    slide : SlideMetadata
        Opened slide.

    level : int
        Pyramid level.

    x, y : int
        Top-left corner in level pixels; may be negative.

    size : int
        Patch side in pixels, strictly positive.

    Returns
    -------
    patch : Patch
        Patch whose ``pixels`` has shape ``(size, size, 3)`` and dtype uint8.
    """
    info = slide.level(level)
    if size <= 0:
        raise ValidationError(
            "patch size must be positive, got %r" % size, field="size"
        )
    x, y, size = int(x), int(y), int(size)
    pixels = np.full((size, size, 3), BACKGROUND, dtype=np.uint8)

    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + size, info.width), min(y + size, info.height)
    ts = slide.tile_size
    if x0 < x1 and y0 < y1:
        for row in range(y0 // ts, (y1 - 1) // ts + 1):
            for col in range(x0 // ts, (x1 - 1) // ts + 1):
                tile = slide.tile(level, row, col)
                tx, ty = col * ts, row * ts
                ix0, ix1 = max(x0, tx), min(x1, tx + tile.shape[1])
                iy0, iy1 = max(y0, ty), min(y1, ty + tile.shape[0])
                if ix0 >= ix1 or iy0 >= iy1:
                    continue
                pixels[iy0 - y : iy1 - y, ix0 - x : ix1 - x] = tile[
                    iy0 - ty : iy1 - ty, ix0 - tx : ix1 - tx
                ]
    return Patch(slide.slide_id, level, x, y, size, pixels)


def to_level0(slide, level, x, y):
    """Map level coordinates to level-0 pixels.

    Examples
    --------
    >>> from HistoML.slide import LevelInfo, SlideMetadata, to_level0
    >>> from HistoML import PhysicalCalibration
    >>> slide = SlideMetadata("s", 1024, 1024, PhysicalCalibration(0.25, 0.25),
    ...     [LevelInfo(0, 1, 1024, 1024), LevelInfo(1, 2, 512, 512),
    ...      LevelInfo(2, 4, 256, 256)], 512)
    >>> to_level0(slide, 2, 100, 50)
    (400, 200)
    """
    downsample = slide.level(level).downsample
    return int(x) * downsample, int(y) * downsample


def mpp_at_level(slide, level):
    """Microns per pixel ``(mpp_x, mpp_y)`` at ``level``."""
    downsample = slide.level(level).downsample
    return (
        slide.calibration.mpp_x * downsample,
        slide.calibration.mpp_y * downsample,
    )


def level_for_mpp(slide, target_mpp):
    """Index of the level whose horizontal mpp is closest to ``target_mpp``.

    Ties go to the finer level.
    """
    distances = [
        abs(mpp_at_level(slide, info.index)[0] - target_mpp) for info in slide.levels
    ]
    return int(np.argmin(distances))
