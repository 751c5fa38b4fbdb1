"""``speckle-lab`` command line.

Exit codes: 0 success, 1 validation error (bad flags, missing or malformed
inputs), 2 runtime failure.  Errors are written to stderr as one JSON line.
"""
from __future__ import annotations

import argparse
import csv
import difflib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .dataset import (
    LabeledDataset,
    read_dataset_csv,
    read_features_csv,
    split,
    write_features_csv,
    write_split,
)
from .errors import ImageFormatError, SpeckleLabError, ValidationError
from .image_core import histogram, load_gray, save_gray
from .knn import METRICS, KnnConfig, fit_predict
from .optimizer import (
    PAIR_SCOPES,
    GridSpec,
    collect_windows,
    report_tables,
    run_grid,
    sample_id,
    write_tables,
)
from .sampling import SAMPLE_SIZES, SampleWindow, extract_samples
from .segmentation import SegmentationTemplate, segment
from .speckle_synth import make_corpus, preset_classes, read_corpus, write_corpus
from .texture import FEATURE_SETS, feature_manifest_hash, feature_matrix

log = logging.getLogger("speckle_lab")

SUBCOMMANDS = (
    "convert", "histogram", "segment", "sample", "features", "synth", "split", "classify", "optimize", "reproduce",
)


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "invalid choice" in message and "argument command" in message:
            bad = message.split("'")[1] if "'" in message else ""
            close = difflib.get_close_matches(bad, SUBCOMMANDS, n=1)
            if close:
                message += f"; did you mean '{close[0]}'?"
        raise UsageError(message)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    if not os.path.isfile(path):
        raise ValidationError(f"file not found: {path}")
    with open(path) as fh:
        return json.load(fh)


def _require_file(path, flag):
    if not os.path.isfile(path):
        raise ValidationError(f"{flag}: file not found: {path}")


def _default_workers() -> int:
    env = os.environ.get("SPECKLE_LAB_WORKERS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ValidationError(f"SPECKLE_LAB_WORKERS must be an integer, got {env!r}") from None
    if n < 1:
        raise ValidationError("SPECKLE_LAB_WORKERS must be >= 1")
    return n


# -- template files -------------------------------------------------------------

def template_gray(tpl: SegmentationTemplate) -> np.ndarray:
    """Labels spread over 0..255 so bands are visible in a viewer."""
    if tpl.K == 1:
        return np.zeros(tpl.labels.shape, dtype=np.uint8)
    return (tpl.labels.astype(np.int64) * 255 // (tpl.K - 1)).astype(np.uint8)


def save_template(tpl: SegmentationTemplate, path) -> str:
    save_gray(template_gray(tpl), path)
    sidecar = os.path.splitext(path)[0] + ".json"
    _write_json(sidecar, tpl.to_json())
    return sidecar


def load_template(path) -> SegmentationTemplate:
    _require_file(path, "--template")
    sidecar = os.path.splitext(path)[0] + ".json"
    meta = _read_json(sidecar)
    K = int(meta["K"])
    gray = load_gray(path)
    levels = {(i * 255 // (K - 1)) if K > 1 else 0: i for i in range(K)}
    lut = np.full(256, -1, dtype=np.int64)
    for g, i in levels.items():
        lut[g] = i
    labels = lut[gray]
    if (labels < 0).any():
        raise ValidationError(f"{path}: gray levels do not match a {K}-band template")
    return SegmentationTemplate(
        labels=labels.astype(np.int32), K=K, method=meta["method"],
        thresholds=tuple(meta.get("thresholds", ())), centers=tuple(meta.get("centers", ())),
    )


# -- subcommands ---------------------------------------------------------------

def cmd_convert(args):
    save_gray(load_gray(args.input), args.output)


def cmd_histogram(args):
    h = histogram(load_gray(args.input))
    with open(args.csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["intensity", "count"])
        for i, c in enumerate(h.bins):
            w.writerow([i, int(c)])


def cmd_segment(args):
    img = load_gray(args.image)
    methods = ["threshold", "kmeans"] if args.method == "both" else [args.method]
    root, ext = os.path.splitext(args.out)
    for m in methods:
        tpl = segment(img, method=m, valleys=args.valleys, seed=args.seed)
        path = f"{root}_{m}{ext or '.pgm'}" if len(methods) > 1 else args.out
        save_template(tpl, path)
        log.info("%s template K=%d -> %s", m, tpl.K, path)


def _write_windows(windows, out_dir, labels=None, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, w in enumerate(windows):
        fname = f"w{i:05d}_{w.source_id}_{w.origin[0]}_{w.origin[1]}.pgm"
        save_gray(w.pixels, os.path.join(out_dir, fname))
        e = {"file": fname, "origin": list(w.origin), "size": w.size,
             "region_label": w.region_label, "source_id": w.source_id}
        if labels is not None and labels[i] is not None:
            e["class"] = int(labels[i])
        entries.append(e)
    manifest = {"windows": entries, **(extra or {})}
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def cmd_sample(args):
    _require_file(args.image, "image")
    img = load_gray(args.image)
    tpl = load_template(args.template)
    source = args.source_id or os.path.splitext(os.path.basename(args.image))[0]
    windows = extract_samples(img, tpl, args.size, args.per_region, seed=args.seed, source_id=source)
    counts = {lab: sum(w.region_label == lab for w in windows) for lab in range(tpl.K)}
    empty = [lab for lab, n in counts.items() if n == 0]
    if empty:
        log.warning("regions %s have no qualifying %dx%d origin", empty, args.size, args.size)
    _write_windows(windows, args.out_dir, [args.class_label] * len(windows),
                   {"source": os.path.basename(args.image), "empty_regions": empty})


def _read_windows(manifest_path):
    m = _read_json(manifest_path)
    base = os.path.dirname(manifest_path)
    windows, labels = [], []
    for e in m["windows"]:
        px = load_gray(os.path.join(base, e["file"]))
        windows.append(SampleWindow(tuple(e["origin"]), int(e["size"]), px, e["source_id"], int(e["region_label"])))
        labels.append(e.get("class"))
    return windows, labels


def cmd_features(args):
    _require_file(args.manifest, "manifest")
    kind = {"11": "eleven", "17": "seventeen"}[args.set]
    windows, labels = _read_windows(args.manifest)
    known = all(lab is not None for lab in labels)
    ds = LabeledDataset.build(
        feature_matrix(windows, kind).reshape(len(windows), len(FEATURE_SETS[kind])),
        [lab if known else 1 for lab in labels],
        [sample_id(w) for w in windows], [w.source_id for w in windows], kind,
    )
    write_features_csv(args.out, ds, [w.region_label for w in windows], include_class=known)


def cmd_synth(args):
    corpus = make_corpus(preset_classes(args.classes, args.width, args.height), args.per_class, args.seed)
    manifest = write_corpus(corpus, args.out_dir, seed=args.seed)
    for w in manifest["warnings"]:
        log.warning(w)


def cmd_split(args):
    _require_file(args.features, "features")
    sp = split(read_features_csv(args.features), args.seed)
    write_split(sp, args.out_dir)


def cmd_classify(args):
    for flag in ("train", "train_class", "test", "test_class"):
        _require_file(getattr(args, flag), "--" + flag.replace("_", "-"))
    train = read_dataset_csv(args.train, args.train_class)
    test = read_dataset_csv(args.test, args.test_class)
    res = fit_predict(train, test, KnnConfig(args.k, args.metric, not args.no_standardize))
    out = res.to_json()
    out["predictions"] = [int(p) for p in res.predictions]
    out["test_rows"] = len(test)
    _write_json(args.report, out)


def _load_grid(path) -> GridSpec:
    d = _read_json(path)
    if not isinstance(d, dict):
        raise ValidationError(f"{path}: grid must be a JSON object")
    return GridSpec.from_json(d)


def cmd_optimize(args):
    if not os.path.isdir(args.corpus):
        raise ValidationError(f"--corpus: not a directory: {args.corpus}")
    spec = _load_grid(args.grid)
    corpus = read_corpus(args.corpus)
    report = run_grid(corpus, spec, workers=args.workers)
    report.dump(args.out)
    if args.tables:
        write_tables(report_tables([report]), args.tables)
    _write_json(os.path.splitext(args.out)[0] + ".meta.json",
                {"wall_time_s": report.wall_time, "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
                 "workers": args.workers})


def cmd_reproduce(args):
    """synth -> segment -> sample -> features -> split -> classify -> optimize."""
    out = args.out
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    stages = {}

    def stage(name, t):
        stages[name] = time.perf_counter() - t
        log.info("%s done in %.2fs", name, stages[name])

    t = time.perf_counter()
    corpus = make_corpus(preset_classes("preset3"), args.per_class, args.seed)
    write_corpus(corpus, os.path.join(out, "corpus"), seed=args.seed)
    stage("synth", t)

    t = time.perf_counter()
    tdir = os.path.join(out, "templates")
    os.makedirs(tdir, exist_ok=True)
    for c in (1, 2, 3):
        pilot = next(im for im in corpus if im.label == c)
        for m in ("threshold", "kmeans"):
            save_template(segment(pilot.pixels, method=m, seed=args.seed), os.path.join(tdir, f"{pilot.image_id}_{m}.pgm"))
    stage("segment", t)

    t = time.perf_counter()
    pairs = collect_windows(corpus, args.sample_size, per_region=4, base_seed=args.seed)
    manifest_dir = os.path.join(out, "samples")
    _write_windows([w for _, w in pairs], manifest_dir, [c for c, _ in pairs])
    stage("sample", t)

    t = time.perf_counter()
    windows, labels = _read_windows(os.path.join(manifest_dir, "manifest.json"))
    ds = LabeledDataset.build(feature_matrix(windows, "seventeen"), labels,
                              [sample_id(w) for w in windows], [w.source_id for w in windows], "seventeen")
    write_features_csv(os.path.join(out, "features.csv"), ds, [w.region_label for w in windows])
    stage("features", t)

    t = time.perf_counter()
    sp = split(read_features_csv(os.path.join(out, "features.csv")), args.seed)
    write_split(sp, os.path.join(out, "split"))
    stage("split", t)

    t = time.perf_counter()
    res = fit_predict(sp.train, sp.test, KnnConfig(3, "euclidean", True), split_seed=args.seed)
    _write_json(os.path.join(out, "classify.json"), {**res.to_json(), "predictions": [int(p) for p in res.predictions]})
    stage("classify", t)

    t = time.perf_counter()
    rdir = os.path.join(out, "reports")
    os.makedirs(rdir, exist_ok=True)
    tables, reports = {}, []
    for scope in ("all_three", *PAIR_SCOPES):
        spec = GridSpec(class_scope=scope, base_seed=args.seed)
        rep = run_grid(corpus, spec, workers=args.workers, tables=tables)
        rep.dump(os.path.join(rdir, f"{rep.scope}.json"))
        reports.append(rep)
    tb = report_tables(reports)
    write_tables(tb, os.path.join(out, "tables"))
    summary = {
        "version": __version__,
        "feature_manifest": feature_manifest_hash(),
        "seed": args.seed,
        "scopes": {
            r.scope: {
                "best_config": r.best_config,
                "best_mean_accuracy": r.result_for(tuple(r.best_config.values())).mean_accuracy if r.best_config else None,
                "best_max_accuracy": r.result_for(tuple(r.best_config.values())).max_accuracy if r.best_config else None,
            }
            for r in reports
        },
        "flags": tb["flags"],
    }
    _write_json(os.path.join(out, "report.json"), summary)
    stage("optimize", t)

    _write_json(os.path.join(out, "metadata.json"), {
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "wall_time_s": time.perf_counter() - t0,
        "stage_seconds": stages,
        "workers": args.workers,
    })


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="speckle-lab", description="Laser-speckle texture classification pipeline.")
    p.add_argument("--version", action="version",
                   version=f"speckle-lab {__version__} (features {feature_manifest_hash()})")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("convert", help="convert PNG/PGM to 8-bit gray PGM")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("histogram", help="write the 256-bin histogram as CSV")
    s.add_argument("input")
    s.add_argument("--csv", required=True)
    s.set_defaults(func=cmd_histogram)

    s = sub.add_parser("segment", help="build threshold and/or k-means templates")
    s.add_argument("image")
    s.add_argument("--method", choices=["threshold", "kmeans", "both"], default="threshold")
    s.add_argument("--valleys", type=int, default=None, help="override the detected valley count")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("sample", help="extract sample windows guided by a template")
    s.add_argument("image")
    s.add_argument("--template", required=True)
    s.add_argument("--size", type=int, choices=SAMPLE_SIZES, required=True)
    s.add_argument("--per-region", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--class-label", type=int, choices=[1, 2, 3], default=None)
    s.add_argument("--source-id", default=None)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("features", help="compute the 11- or 17-feature table")
    s.add_argument("manifest")
    s.add_argument("--set", choices=["11", "17"], default="17")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("synth", help="generate a synthetic labelled speckle corpus")
    s.add_argument("--classes", default="preset3", choices=["preset3"])
    s.add_argument("--per-class", type=int, default=12)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--width", type=int, default=256)
    s.add_argument("--height", type=int, default=256)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", help="balanced train/test split into the four CSV files")
    s.add_argument("features")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("classify", help="k-NN on a train/test split")
    s.add_argument("--train", required=True)
    s.add_argument("--train-class", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--test-class", required=True)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--metric", choices=METRICS, default="euclidean")
    s.add_argument("--no-standardize", action="store_true")
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("optimize", help="run the parameter grid over a corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tables", default=None)
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("reproduce", help="run every stage end to end on the preset corpus")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--out", required=True)
    s.add_argument("--per-class", type=int, default=12)
    s.add_argument("--sample-size", type=int, choices=SAMPLE_SIZES, default=60)
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_reproduce)
    return p


def _emit_error(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _emit_error(exc, 1)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if getattr(args, "workers", 0) is None:
            args.workers = _default_workers()
        if getattr(args, "workers", 1) < 1:
            raise ValidationError("--workers must be >= 1")
        args.func(args)
    except (ValidationError, ImageFormatError) as exc:
        return _emit_error(exc, 1)
    except SpeckleLabError as exc:
        return _emit_error(exc, 2)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        return _emit_error(exc, 2)
    return 0


def main() -> None:
    sys.exit(dispatch())
