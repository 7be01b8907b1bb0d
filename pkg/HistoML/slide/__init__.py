"""Tiled slide containers and synthetic slide generation."""

# Authors: HistoML developers
# License: BSD 3 clause

from ._pyramid import (
    LevelInfo,
    Patch,
    SlideMetadata,
    level_for_mpp,
    mpp_at_level,
    open_slide,
    read_patch,
    to_level0,
    write_slide,
)
from ._synth import (
    SIGNATURE_COLORS,
    GroundTruth,
    LesionSpec,
    LesionTruth,
    SynthSpec,
    decode_rle,
    encode_rle,
    generate,
    generate_cohort,
    load_truth,
    make_cohort,
)

__all__ = [
    "LevelInfo",
    "Patch",
    "SlideMetadata",
    "open_slide",
    "write_slide",
    "read_patch",
    "to_level0",
    "mpp_at_level",
    "level_for_mpp",
    "SIGNATURE_COLORS",
    "LesionSpec",
    "SynthSpec",
    "LesionTruth",
    "GroundTruth",
    "encode_rle",
    "decode_rle",
    "generate",
    "generate_cohort",
    "load_truth",
    "make_cohort",
]
