"""Two-stage diagnosis: region proposal by detection, then region voting."""

# Authors: HistoML developers
# License: BSD 3 clause

from ._classify import (
    LesionCall,
    PatchRecord,
    SamplingConfig,
    classify_region,
    classify_regions,
    region_footprint,
    sample_count,
    sample_patches,
    sample_positions,
    vote,
)
from ._detect import (
    Heatmap,
    RegionProposal,
    ScanConfig,
    extract_components,
    grid_shape,
    is_background,
    physical_size_mm,
    propose_regions,
    scan,
)
from ._io import (
    load_assessment,
    load_calls,
    load_heatmap,
    load_regions,
    save_assessment,
    save_calls,
    save_heatmap,
    save_regions,
)
from ._run import (
    SlideRun,
    collect_features,
    diagnose_slide,
    label_maps,
    list_slides,
    save_run,
)

__all__ = [
    "ScanConfig",
    "Heatmap",
    "RegionProposal",
    "grid_shape",
    "is_background",
    "scan",
    "extract_components",
    "physical_size_mm",
    "propose_regions",
    "SamplingConfig",
    "PatchRecord",
    "LesionCall",
    "sample_count",
    "region_footprint",
    "sample_positions",
    "sample_patches",
    "vote",
    "classify_region",
    "classify_regions",
    "save_heatmap",
    "load_heatmap",
    "save_regions",
    "load_regions",
    "save_calls",
    "load_calls",
    "save_assessment",
    "load_assessment",
    "SlideRun",
    "diagnose_slide",
    "save_run",
    "list_slides",
    "label_maps",
    "collect_features",
]
