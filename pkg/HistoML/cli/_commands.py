"""
Command-line surface. Every stage reads the files written by the previous
one, so commands compose through the filesystem.
"""

# Authors: HistoML developers
# License: BSD 3 clause

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .._labels import ClassLabel, resolve_label
from ..exceptions import InferenceError, LevelError, SamplingError, ValidationError
from ..explain import (
    compute_cam,
    rank_features,
    render_cam,
    render_overlay,
    save_png,
    top_activations,
)
from ..inference import (
    fit_linear_model,
    load_feature_maps,
    load_features,
    load_linear_model,
    ref_key,
    save_features,
    save_linear_model,
)
from ..metrics import (
    FoldPlan,
    error_analysis,
    evaluate_folds,
    evaluate_run,
    stratified_kfold,
)
from ..pipeline import (
    collect_features,
    diagnose_slide,
    label_maps,
    list_slides,
    save_run,
)
from ..slide import generate_cohort, load_truth, make_cohort, open_slide, read_patch
from ._config import DEFAULTS, load_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFERENCE = 3
SLIDE_FILE = "slide.json"


def _write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _cmd_print_config(args):
    print(json.dumps(DEFAULTS, indent=2))


def _cmd_synth(args):
    specs = make_cohort(
        args.per_class,
        seed=args.seed,
        size=args.size,
        mpp=args.mpp,
        lesion_mm=tuple(args.lesion_mm),
        texture_noise=args.noise,
        noise_grain=args.grain,
    )
    generate_cohort(specs, args.out, n_jobs=args.jobs)


def _run_one(container, out, config, n_jobs):
    slide = open_slide(container)
    det = config.detection
    run = diagnose_slide(
        slide,
        config.make_backend(),
        config.scan_config(slide, n_jobs=n_jobs),
        config.sampling_config(slide, n_jobs=n_jobs),
        threshold=det["threshold"],
        connectivity=int(det["connectivity"]),
        min_size_mm=det["min_size_mm"],
    )
    save_run(run, out)
    return run.assessment.label3


def _cmd_run(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    source, out = Path(args.source), Path(args.out)
    if (source / SLIDE_FILE).is_file():
        _run_one(source, out, config, args.jobs)
        return
    slide_ids = list_slides(source, SLIDE_FILE)
    if not slide_ids:
        raise ValidationError("no slide containers under %s" % source, field="source")
    Parallel(n_jobs=args.jobs, prefer="threads")(
        delayed(_run_one)(source / slide_id, out / slide_id, config, None)
        for slide_id in slide_ids
    )


def _cmd_eval(args):
    predictions, truth = label_maps(args.runs, args.truth, args.level)
    out = Path(args.out)
    report = evaluate_run(predictions, truth, args.level, args.scheme)
    _write_json(out / "metrics.json", report.to_json())
    logger.info(
        "%s/%s accuracy %s (%d/%d)",
        args.level,
        args.scheme,
        report.to_json()["overall"]["accuracy"],
        report.correct,
        report.total,
    )
    if args.level == "slide":
        _write_json(out / "errors.json", error_analysis(predictions, truth).to_json())
    if args.folds is not None:
        doc = json.loads(Path(args.folds).read_text(encoding="utf-8"))
        fold_reports, pooled = evaluate_folds(
            predictions, truth, FoldPlan.from_json(doc), args.level, args.scheme
        )
        _write_json(
            out / "metrics_folds.json",
            {
                "folds": [r.to_json() for r in fold_reports],
                "pooled": pooled.to_json(),
            },
        )


def _cmd_folds(args):
    labels = {
        slide_id: load_truth(Path(args.truth) / slide_id).slide_label
        for slide_id in list_slides(args.truth, "truth.json")
    }
    plan = stratified_kfold(labels, args.k, args.seed)
    _write_json(Path(args.out), plan.to_json())


def _cmd_features(args):
    table, maps = collect_features(args.runs, args.slides)
    save_features(table, args.out, feature_maps=maps)
    if args.fit_model is not None:
        identity = np.eye(len(ClassLabel))
        save_linear_model(fit_linear_model(table, spatial_w=identity), args.fit_model)


def _patch_for(ref, slides_root):
    slide_id, level, x, y, size = ref_key(ref)
    return read_patch(open_slide(Path(slides_root) / slide_id), level, x, y, size)


def _explain_stump(args, table):
    ranking = rank_features(table, args.target, args.k, n_jobs=args.jobs)
    _write_json(Path(args.out) / "ranking.json", ranking.to_json())


def _explain_topact(args, table):
    top = top_activations(table, args.feature, args.m)
    _write_json(
        Path(args.out) / "topact.json",
        {
            "feature": args.feature,
            "rows": [
                {"rank": rank, "row": row, "ref": ref}
                for rank, (row, ref) in enumerate(top)
            ],
        },
    )
    if args.slides_root is None:
        return
    for rank, (row, ref) in enumerate(top):
        patch = _patch_for(ref, args.slides_root)
        save_png(patch.pixels, Path(args.out) / ("rank_%d_row_%d.png" % (rank, row)))


def _explain_cam(args, table):
    if args.model is None:
        raise ValidationError("cam mode needs --model", field="model")
    model = load_linear_model(args.model)
    maps = load_feature_maps(args.features)
    if maps is None:
        raise ValidationError("cam mode needs feature_maps.npy", field="feature_maps")
    if maps.shape[0] != table.n_samples:
        raise ValidationError(
            "feature maps have %d rows, the table %d"
            % (maps.shape[0], table.n_samples),
            field="feature_maps",
        )
    rows = range(table.n_samples) if args.rows is None else args.rows
    for row in rows:
        ref = table.ref(row)
        size = ref.get("size") if isinstance(ref, dict) else None
        cam = compute_cam(maps[row], model, args.target, patch_size=size)
        save_png(render_cam(cam), Path(args.out) / ("cam_row_%d.png" % row))
        if args.slides_root is not None and size is not None:
            patch = _patch_for(ref, args.slides_root)
            overlay = render_overlay(cam, patch, args.alpha)
            save_png(overlay, Path(args.out) / ("overlay_row_%d.png" % row))


_EXPLAIN_MODES = {
    "stump": _explain_stump,
    "topact": _explain_topact,
    "cam": _explain_cam,
}


def _cmd_explain(args):
    table = load_features(args.features)
    args.target = resolve_label(args.target)
    _EXPLAIN_MODES[args.mode](args, table)


def _add_common(parser):
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--jobs", type=int, default=None, help="parallel jobs")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="histoml", description="Two-stage lesion diagnosis of slide images."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("print-config", help="print the default configuration")
    _add_common(p)
    p.set_defaults(handler=_cmd_print_config)

    p = commands.add_parser("synth", help="generate a synthetic cohort")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=4096)
    p.add_argument("--mpp", type=float, default=2.0)
    p.add_argument("--lesion-mm", type=float, nargs=2, default=(1.5, 4.0))
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--grain", type=int, default=1)
    p.set_defaults(handler=_cmd_synth)

    p = commands.add_parser("run", help="diagnose a slide or every slide of a cohort")
    _add_common(p)
    p.add_argument("source", help="slide container or cohort directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=_cmd_run)

    p = commands.add_parser("eval", help="score runs against ground truth")
    _add_common(p)
    p.add_argument("runs")
    p.add_argument("truth")
    p.add_argument("--level", choices=("patch", "region", "slide"), default="slide")
    p.add_argument("--scheme", choices=("three_class", "binary"), default="three_class")
    p.add_argument("--folds", default=None, help="folds.json for per-fold reports")
    p.add_argument("--out", default=".")
    p.set_defaults(handler=_cmd_eval)

    p = commands.add_parser("folds", help="split a cohort into stratified folds")
    _add_common(p)
    p.add_argument("truth")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="folds.json")
    p.set_defaults(handler=_cmd_folds)

    p = commands.add_parser("features", help="feature table of the sampled patches")
    _add_common(p)
    p.add_argument("runs")
    p.add_argument("--slides", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fit-model", default=None, help="also fit model.json here")
    p.set_defaults(handler=_cmd_features)

    p = commands.add_parser("explain", help="stump ranking, top activations or CAM")
    _add_common(p)
    p.add_argument("mode", choices=sorted(_EXPLAIN_MODES))
    p.add_argument("features", help="feature table directory")
    p.add_argument("--model", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--target", default="idc")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--feature", type=int, default=0)
    p.add_argument("--m", type=int, default=9)
    p.add_argument("--rows", type=int, nargs="*", default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--slides-root", default=None)
    p.set_defaults(handler=_cmd_explain)
    return parser


def _fail(exc, code):
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if hasattr(exc, "context"):
        doc.update(exc.context())
    if getattr(exc, "field", None) is not None:
        doc["field"] = exc.field
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None):
    """Entry point of the ``histoml`` command; returns the exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    try:
        args.handler(args)
    except (InferenceError, SamplingError) as exc:
        return _fail(exc, EXIT_INFERENCE)
    except (ValueError, LevelError, OSError) as exc:
        return _fail(exc, EXIT_VALIDATION)
    return EXIT_OK
