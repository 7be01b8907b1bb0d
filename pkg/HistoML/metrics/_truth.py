"""Ground-truth labels of regions and patches from synthetic annotations."""

# Authors: HistoML developers
# License: BSD 3 clause

import numpy as np

from .._labels import ClassLabel


def _lesion_pixels(lesion, width):
    indices = lesion.mask_indices()
    return indices // width, indices % width


def region_truth(region, truth, width, height):
    """Class of the lesion overlapping ``region`` most.

    Overlap is counted in level-0 pixels between the lesion mask and the
    union of the region cell footprints; exact ties go to the most severe
    lesion and a region overlapping no lesion is NonCarcinoma.

    Parameters
    ----------
    region : RegionProposal
        Proposal to label.

    truth : GroundTruth
        Slide annotations.

    width, height : int
        Level-0 slide dimensions.

    Returns
    -------
    label : ClassLabel
    """
    bx, by, bw, bh = region.bbox_level0
    footprint = np.zeros((bh, bw), dtype=bool)
    for x, y, w, h in region.footprint_rects(width, height):
        footprint[y - by : y - by + h, x - bx : x - bx + w] = True

    best, best_label = 0, ClassLabel.NonCarcinoma
    for lesion in truth.lesions:
        lx, ly, lw, lh = lesion.bbox
        if lx >= bx + bw or ly >= by + bh or lx + lw <= bx or ly + lh <= by:
            continue
        rows, cols = _lesion_pixels(lesion, width)
        inside = (rows >= by) & (rows < by + bh) & (cols >= bx) & (cols < bx + bw)
        overlap = int(footprint[rows[inside] - by, cols[inside] - bx].sum())
        tie = overlap == best and overlap and lesion.label > best_label
        if overlap > best or tie:
            best, best_label = overlap, lesion.label
    return best_label


def patch_truth(x, y, size, level, truth, slide):
    """Class of the lesion containing the centre of a patch.

    Parameters
    ----------
    x, y, size, level : int
        Patch geometry in pixels of ``level``.

    truth : GroundTruth
        Slide annotations.

    slide : SlideMetadata
        Slide geometry.

    Returns
    -------
    label : ClassLabel
        NonCarcinoma when the centre lies on background or off the slide.
    """
    ds = slide.level(level).downsample
    cx = (x * 2 + size) * ds // 2
    cy = (y * 2 + size) * ds // 2
    if not (0 <= cx < slide.width and 0 <= cy < slide.height):
        return ClassLabel.NonCarcinoma
    flat = cy * slide.width + cx
    for lesion in truth.lesions:
        lx, ly, lw, lh = lesion.bbox
        if not (lx <= cx < lx + lw and ly <= cy < ly + lh):
            continue
        indices = lesion.mask_indices()
        position = np.searchsorted(indices, flat)
        if position < indices.size and indices[position] == flat:
            return lesion.label
    return ClassLabel.NonCarcinoma
