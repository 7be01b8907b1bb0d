"""
Whole-slide diagnosis: detection, region classification and slide
assessment chained together, plus the label maps used to score finished runs.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import ValidationError
from ..inference import FeatureTable, PatchFeatureExtractor, signature_maps
from ..metrics import assess_slide, patch_truth, region_truth
from ..slide import load_truth, open_slide, read_patch
from ._classify import classify_regions
from ._detect import extract_components, propose_regions, scan
from ._io import (
    ASSESSMENT_FILE,
    CALLS_FILE,
    load_assessment,
    load_calls,
    load_regions,
    save_assessment,
    save_calls,
    save_heatmap,
    save_regions,
)

logger = logging.getLogger(__name__)

TRUTH_FILE = "truth.json"


@dataclass(frozen=True)
class SlideRun:
    """Every stage output of one slide."""

    slide_id: str
    heatmap: object = field(repr=False)
    regions: list = field(repr=False)
    calls: list = field(repr=False)
    assessment: object = None


def diagnose_slide(
    slide,
    backend,
    scan_cfg,
    sampling_cfg,
    *,
    threshold=0.5,
    connectivity=8,
    min_size_mm=1.0,
):
    """Run detection, classification and assessment on one slide.

    Parameters
    ----------
    slide : SlideMetadata
        Opened slide.

    backend : PatchBackend
        Backend used for both detection and classification.

    scan_cfg : ScanConfig
        Detection scan geometry.

    sampling_cfg : SamplingConfig
        Region sampling parameters.

    threshold : float, default=0.5
        Heatmap threshold.

    connectivity : {4, 8}, default=8
        Cell connectivity of regions.

    min_size_mm : float, default=1.0
        Minimum region size.

    Returns
    -------
    run : SlideRun
    """
    heatmap = scan(slide, backend, scan_cfg)
    components = extract_components(heatmap, threshold, connectivity)
    regions = propose_regions(components, heatmap, slide, min_size_mm)
    calls = classify_regions(regions, slide, backend, sampling_cfg)
    assessment = assess_slide(calls, slide_id=slide.slide_id)
    logger.info(
        "%s: %d regions, label %s",
        slide.slide_id,
        len(regions),
        assessment.label3.slug,
    )
    return SlideRun(slide.slide_id, heatmap, regions, calls, assessment)


def save_run(run, out):
    """Write heatmap, regions, calls and assessment files to ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_heatmap(run.heatmap, out)
    save_regions(run.regions, out)
    save_calls(run.calls, out)
    save_assessment(run.assessment, out)


def list_slides(root, marker):
    """Sorted names of the sub-directories of ``root`` holding ``marker``."""
    root = Path(root)
    if not root.is_dir():
        raise ValidationError("%s is not a directory" % root, field="path")
    return sorted(child.name for child in root.iterdir() if (child / marker).is_file())


def _slide_prediction(run_dir):
    run_dir = Path(run_dir)
    if (run_dir / ASSESSMENT_FILE).is_file():
        return load_assessment(run_dir)["label"]
    return load_truth(run_dir).slide_label


def label_maps(runs_dir, truth_dir, level):
    """Predictions and ground truth of a set of runs, keyed per item.

    Slide keys are slide ids, region keys ``"<slide>/<region_id>"`` and patch
    keys ``"<slide>/<region_id>/<patch>"``. At slide level a directory holding
    only ground truth stands in for a run, predicting its own slide label.

    Parameters
    ----------
    runs_dir : path
        One sub-directory per slide with the stage files of :func:`save_run`.

    truth_dir : path
        Synthetic cohort: one container with ``truth.json`` per slide.

    level : {"patch", "region", "slide"}
        Granularity of the items.

    Returns
    -------
    predictions, ground_truth : dict
        Item key to class.

    Raises
    ------
    ValidationError
        If the two directories hold different slides.
    """
    runs_dir, truth_dir = Path(runs_dir), Path(truth_dir)
    run_ids = set(list_slides(runs_dir, ASSESSMENT_FILE)) | set(
        list_slides(runs_dir, TRUTH_FILE)
    )
    truth_ids = set(list_slides(truth_dir, TRUTH_FILE))
    if run_ids != truth_ids:
        raise ValidationError(
            "runs and truth hold different slides; only in runs: %s; only in truth: %s"
            % (sorted(run_ids - truth_ids), sorted(truth_ids - run_ids)),
            field="slides",
        )

    predictions, ground_truth = {}, {}
    for slide_id in sorted(run_ids):
        truth = load_truth(truth_dir / slide_id)
        if level == "slide":
            predictions[slide_id] = _slide_prediction(runs_dir / slide_id)
            ground_truth[slide_id] = truth.slide_label
            continue
        slide = open_slide(truth_dir / slide_id)
        regions = {r.region_id: r for r in load_regions(runs_dir / slide_id)}
        for call in load_calls(runs_dir / slide_id):
            key = "%s/%d" % (slide_id, call.region_id)
            if level == "region":
                if call.region_id not in regions:
                    raise ValidationError(
                        "%s: call for unknown region %d" % (slide_id, call.region_id),
                        field="region_id",
                    )
                predictions[key] = call.predicted
                ground_truth[key] = region_truth(
                    regions[call.region_id], truth, slide.width, slide.height
                )
                continue
            for index, record in enumerate(call.patch_records):
                patch_key = "%s/%d" % (key, index)
                predictions[patch_key] = record.argmax
                ground_truth[patch_key] = patch_truth(
                    record.x, record.y, record.size, record.level, truth, slide
                )
    return predictions, ground_truth


def collect_features(runs_dir, slides_dir, *, n_bins=8, map_grid=8):
    """Feature table of every patch sampled by a set of runs.

    Rows follow slide id, region and sampling order. Labels come from the
    ground truth when the slide container carries one, otherwise from the
    patch predictions.

    Parameters
    ----------
    runs_dir : path
        Run directories holding ``calls.json``.

    slides_dir : path
        Slide containers with the same names.

    n_bins : int, default=8
        Histogram bins of the patch descriptor.

    map_grid : int, default=8
        Side of the pooled signature maps.

    Returns
    -------
    table : FeatureTable
        Descriptors with labels and patch references.

    feature_maps : ndarray of shape (n_samples, 3, map_grid, map_grid)
        Signature maps of every patch.
    """
    extractor = PatchFeatureExtractor(n_bins=n_bins)
    rows, labels, refs, maps = [], [], [], []
    for slide_id in list_slides(runs_dir, CALLS_FILE):
        container = Path(slides_dir) / slide_id
        slide = open_slide(container)
        truth = load_truth(container) if (container / TRUTH_FILE).is_file() else None
        for call in load_calls(Path(runs_dir) / slide_id):
            for record in call.patch_records:
                patch = read_patch(slide, record.level, record.x, record.y, record.size)
                rows.append(patch)
                refs.append(patch.ref())
                maps.append(signature_maps(patch.pixels, map_grid))
                labels.append(
                    record.argmax
                    if truth is None
                    else patch_truth(
                        record.x, record.y, record.size, record.level, truth, slide
                    )
                )
    if not rows:
        raise ValidationError("the runs sampled no patches", field="runs_dir")
    table = FeatureTable(
        activations=extractor.fit_transform(rows), labels=labels, patch_refs=refs
    )
    logger.info("collected %d patches x %d features", *table.activations.shape)
    return table, np.stack(maps)
