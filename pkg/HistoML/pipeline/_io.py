"""Stage files written and read by the pipeline."""

# Authors: HistoML developers
# License: BSD 3 clause

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .._labels import ClassLabel
from ..exceptions import SlideFormatError
from ._classify import LesionCall, PatchRecord
from ._detect import Heatmap, RegionProposal

HEATMAP_HEADER = "heatmap.json"
HEATMAP_PAYLOAD = "heatmap.f32"
HEATMAP_IMAGE = "heatmap.png"
REGIONS_FILE = "regions.json"
CALLS_FILE = "calls.json"
ASSESSMENT_FILE = "assessment.json"
_F32 = np.dtype("<f4")


def _write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SlideFormatError("%s not found" % path) from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SlideFormatError("cannot parse %s: %s" % (path, exc)) from exc


def save_heatmap(heatmap, out, png=True):
    """Write the heatmap header, its float32 grid and an 8-bit preview."""
    out = Path(out)
    _write_json(
        out / HEATMAP_HEADER,
        {
            "level": heatmap.level,
            "stride": heatmap.stride,
            "patch_size": heatmap.patch_size,
            "downsample": heatmap.downsample,
            "rows": heatmap.rows,
            "cols": heatmap.cols,
        },
    )
    heatmap.grid.astype(_F32).tofile(out / HEATMAP_PAYLOAD)
    if png:
        gray = np.round(heatmap.grid.astype(np.float64) * 255).astype(np.uint8)
        Image.fromarray(gray).save(out / HEATMAP_IMAGE)


def load_heatmap(path):
    path = Path(path)
    header = _read_json(path / HEATMAP_HEADER)
    try:
        rows, cols = int(header["rows"]), int(header["cols"])
        payload = path / HEATMAP_PAYLOAD
        actual = payload.stat().st_size
    except FileNotFoundError:
        raise SlideFormatError("%s not found" % (path / HEATMAP_PAYLOAD)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise SlideFormatError("malformed heatmap header: %r" % exc) from exc
    expected = rows * cols * _F32.itemsize
    if actual != expected:
        raise SlideFormatError(
            "heatmap payload has %d bytes, expected %d" % (actual, expected),
            field="payload",
        )
    grid = np.fromfile(payload, dtype=_F32).reshape(rows, cols).astype(np.float32)
    return Heatmap(
        level=int(header["level"]),
        stride=int(header["stride"]),
        patch_size=int(header["patch_size"]),
        downsample=int(header.get("downsample", 1)),
        grid=grid,
    )


def regions_to_json(regions):
    return [
        {
            "region_id": region.region_id,
            "level": region.level,
            "bbox_level0": list(region.bbox_level0),
            "size_mm": region.size_mm,
            "area_mm2": region.area_mm2,
            "cells": [list(cell) for cell in region.cells],
            "stride": region.stride,
            "patch_size": region.patch_size,
            "downsample": region.downsample,
        }
        for region in regions
    ]


def save_regions(regions, out):
    _write_json(Path(out) / REGIONS_FILE, regions_to_json(regions))


def load_regions(path):
    path = Path(path)
    doc = _read_json(path / REGIONS_FILE if path.is_dir() else path)
    try:
        return [
            RegionProposal(
                region_id=int(item["region_id"]),
                level=int(item["level"]),
                cells=tuple((int(r), int(c)) for r, c in item["cells"]),
                bbox_level0=tuple(int(v) for v in item["bbox_level0"]),
                size_mm=float(item["size_mm"]),
                area_mm2=float(item["area_mm2"]),
                stride=int(item["stride"]),
                patch_size=int(item["patch_size"]),
                downsample=int(item["downsample"]),
            )
            for item in doc
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise SlideFormatError("malformed regions file: %r" % exc) from exc


def calls_to_json(calls):
    return [
        {
            "region_id": call.region_id,
            "n_patches": call.n_patches,
            "votes": {label.slug: call.votes[label] for label in ClassLabel},
            "predicted": call.predicted.slug,
            "patches": [
                {
                    "x": record.x,
                    "y": record.y,
                    "level": record.level,
                    "size": record.size,
                    "probs": list(record.probs),
                    "argmax": record.argmax.slug,
                }
                for record in call.patch_records
            ],
        }
        for call in calls
    ]


def save_calls(calls, out):
    _write_json(Path(out) / CALLS_FILE, calls_to_json(calls))


def load_calls(path):
    path = Path(path)
    doc = _read_json(path / CALLS_FILE if path.is_dir() else path)
    try:
        return [
            LesionCall(
                region_id=int(item["region_id"]),
                n_patches=int(item["n_patches"]),
                votes=tuple(int(item["votes"][label.slug]) for label in ClassLabel),
                predicted=ClassLabel.from_name(item["predicted"]),
                patch_records=tuple(
                    PatchRecord(
                        x=int(patch["x"]),
                        y=int(patch["y"]),
                        level=int(patch["level"]),
                        size=int(patch["size"]),
                        probs=tuple(float(p) for p in patch["probs"]),
                        argmax=ClassLabel.from_name(patch["argmax"]),
                    )
                    for patch in item["patches"]
                ),
            )
            for item in doc
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise SlideFormatError("malformed calls file: %r" % exc) from exc


def save_assessment(assessment, out):
    _write_json(Path(out) / ASSESSMENT_FILE, assessment.to_json())


def load_assessment(path):
    path = Path(path)
    return _read_json(path / ASSESSMENT_FILE if path.is_dir() else path)
