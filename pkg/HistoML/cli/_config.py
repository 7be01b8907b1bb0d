"""Pipeline configuration file: defaults, loading and validation."""

# Authors: HistoML developers
# License: BSD 3 clause

import copy
import json
from dataclasses import dataclass, field
from numbers import Integral, Real
from pathlib import Path

from sklearn.utils._param_validation import (
    Interval,
    StrOptions,
    validate_parameter_constraints,
)

from ..exceptions import SlideFormatError, ValidationError
from ..inference import (
    FeaturePlaybackBackend,
    LinearBackend,
    SyntheticBackend,
    load_feature_maps,
    load_features,
    load_linear_model,
)
from ..pipeline import SamplingConfig, ScanConfig
from ..slide import level_for_mpp

DEFAULTS = {
    "detection": {
        "level_mpp_target": 0.25,
        "patch_size": 256,
        "stride": 256,
        "threshold": 0.5,
        "connectivity": 8,
        "min_size_mm": 1.0,
        "tissue_filter": True,
    },
    "classification": {
        "level_mpp_target": 1.0,
        "patch_size": 512,
        "n_min": 5,
        "n_max": 51,
        "density": 0.5,
        "overlap_frac": 0.5,
    },
    "seed": 0,
    "backend": {"kind": "synthetic", "model": None, "features": None},
}

_SECTION_CONSTRAINTS = {
    "detection": {
        "level_mpp_target": [Interval(Real, 0, None, closed="neither")],
        "threshold": [Interval(Real, 0, 1, closed="neither")],
        "connectivity": [StrOptions({"4", "8"})],
        "min_size_mm": [Interval(Real, 0, None, closed="neither")],
    },
    "classification": {
        "level_mpp_target": [Interval(Real, 0, None, closed="neither")],
    },
    "backend": {
        "kind": [StrOptions({"synthetic", "linear", "features"})],
        "model": [str, None],
        "features": [str, None],
    },
}


def _merge(defaults, overrides, where):
    unknown = sorted(set(overrides) - set(defaults))
    if unknown:
        raise ValidationError(
            "unknown configuration keys in %s: %s" % (where, ", ".join(unknown)),
            field=unknown[0],
        )
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(
                    "%s.%s must be an object" % (where, key), field=key
                )
            merged[key] = _merge(defaults[key], value, "%s.%s" % (where, key))
        else:
            merged[key] = value
    return merged


@dataclass(frozen=True)
class PipelineConfig:
    """Every parameter of a pipeline run.

    Parameters
    ----------
    detection : dict
        Detection level target mpp, patch geometry, threshold, connectivity,
        minimum region size and tissue filter switch.

    classification : dict
        Classification level target mpp and the sampling parameters.

    seed : int
        Sampling seed.

    backend : dict
        ``kind`` (synthetic, linear or features) and the ``model`` and
        ``features`` paths the kind needs, relative to ``base_dir``.

    base_dir : Path, default=None
        Directory relative backend paths are resolved against.
    """

    detection: dict
    classification: dict
    seed: int
    backend: dict
    base_dir: Path = field(default=None, compare=False)

    def __post_init__(self):
        for section, constraints in _SECTION_CONSTRAINTS.items():
            values = getattr(self, section)
            params = {name: values[name] for name in constraints}
            if section == "detection":
                params["connectivity"] = str(params["connectivity"])
            validate_parameter_constraints(
                constraints, params, caller_name="PipelineConfig.%s" % section
            )
        validate_parameter_constraints(
            {"seed": [Interval(Integral, 0, None, closed="left")]},
            {"seed": self.seed},
            caller_name="PipelineConfig",
        )
        # geometry and sampling constraints belong to the stage records
        self.scan_config(level=0)
        self.sampling_config(level=0)

    @classmethod
    def from_dict(cls, doc, base_dir=None):
        if not isinstance(doc, dict):
            raise ValidationError("configuration must be a JSON object")
        merged = _merge(DEFAULTS, doc, "config")
        return cls(base_dir=base_dir, **merged)

    def to_json(self):
        return {
            "detection": dict(self.detection),
            "classification": dict(self.classification),
            "seed": self.seed,
            "backend": dict(self.backend),
        }

    def with_seed(self, seed):
        return PipelineConfig.from_dict(
            dict(self.to_json(), seed=seed), base_dir=self.base_dir
        )

    def scan_config(self, slide=None, level=None, n_jobs=None):
        """Detection scan record, at the level closest to the target mpp."""
        det = self.detection
        if level is None:
            level = level_for_mpp(slide, det["level_mpp_target"])
        return ScanConfig(
            level=level,
            patch_size=det["patch_size"],
            stride=det["stride"],
            tissue_filter=det["tissue_filter"],
            n_jobs=n_jobs,
        )

    def sampling_config(self, slide=None, level=None, n_jobs=None):
        """Region sampling record, at the level closest to the target mpp."""
        cls_cfg = self.classification
        if level is None:
            level = level_for_mpp(slide, cls_cfg["level_mpp_target"])
        return SamplingConfig(
            level=level,
            patch_size=cls_cfg["patch_size"],
            n_min=cls_cfg["n_min"],
            n_max=cls_cfg["n_max"],
            density=cls_cfg["density"],
            overlap_frac=cls_cfg["overlap_frac"],
            seed=self.seed,
            n_jobs=n_jobs,
        )

    def _path(self, key):
        value = self.backend[key]
        if value is None:
            raise ValidationError(
                "backend kind %r needs a %r path" % (self.backend["kind"], key),
                field=key,
            )
        path = Path(value)
        if not path.is_absolute() and self.base_dir is not None:
            path = Path(self.base_dir) / path
        return path

    def make_backend(self):
        kind = self.backend["kind"]
        if kind == "synthetic":
            return SyntheticBackend()
        model = load_linear_model(self._path("model"))
        if kind == "linear":
            return LinearBackend(model=model)
        features = self._path("features")
        return FeaturePlaybackBackend(
            table=load_features(features),
            model=model,
            feature_maps=load_feature_maps(features),
        )


def load_config(path=None):
    """Read a configuration file; None gives the defaults.

    Examples
    --------
    >>> from HistoML.cli import load_config
    >>> load_config().detection["patch_size"]
    256
    """
    if path is None:
        return PipelineConfig.from_dict({})
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SlideFormatError("%s not found" % path) from None
    except (OSError, json.JSONDecodeError) as exc:
        raise SlideFormatError("cannot parse %s: %s" % (path, exc)) from exc
    return PipelineConfig.from_dict(doc, base_dir=path.parent)
