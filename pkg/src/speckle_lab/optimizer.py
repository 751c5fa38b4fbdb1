"""Parameter sweep over sample size, feature set and k-NN settings.

For each sample size the corpus is turned into one table of
seventeen-feature rows:

* the first image of every class is the pilot image; it is segmented and
  ``per_region`` windows are drawn from each region;
* every other image of that class contributes, for each pilot window, the
  window at its best NCC match.

Each configuration is then scored over ``runs`` runs.  A run evaluates a
seeded balanced split and its swap, plus one more split+swap pair for
every image beyond eight.  Seeds are pure functions of
``(base_seed, sample_size, run, pair)``, so results do not depend on the
evaluation order or on the number of workers.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import LabeledDataset, enforce_minimum, extra_test_pairs, split, swap
from .errors import SpeckleLabError, ValidationError
from .knn import METRICS, evaluate_grid
from .sampling import SAMPLE_SIZES, best_match, extract_samples, window_at
from .segmentation import segment
from .texture import FEATURE_SETS, feature_matrix

__all__ = [
    "GridSpec",
    "ConfigResult",
    "OptimizationReport",
    "derive_seed",
    "scope_classes",
    "scope_name",
    "collect_windows",
    "sample_id",
    "build_sample_table",
    "run_grid",
    "select_best",
    "report_tables",
    "write_tables",
    "PAIR_SCOPES",
]

PAIR_SCOPES = ((1, 2), (1, 3), (2, 3))
TABLE_SIZE_ORDER = (120, 90, 60, 30)


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def scope_classes(scope) -> tuple[int, ...]:
    if scope == "all_three":
        return (1, 2, 3)
    a, b = scope
    if a == b or not {a, b} <= {1, 2, 3}:
        raise ValidationError(f"invalid pairwise scope {scope!r}")
    return tuple(sorted((int(a), int(b))))


def scope_name(scope) -> str:
    if scope == "all_three":
        return "all_three"
    a, b = scope_classes(scope)
    return f"pair_{a}_{b}"


def _parse_scope(value):
    if value == "all_three":
        return "all_three"
    if isinstance(value, str) and value.startswith("pair_"):
        value = [int(x) for x in value[5:].split("_")]
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return scope_classes(value)
    raise ValidationError(f"class_scope must be 'all_three' or a pair of class labels, got {value!r}")


@dataclass(frozen=True)
class GridSpec:
    sample_sizes: tuple[int, ...] = SAMPLE_SIZES
    feature_sets: tuple[str, ...] = ("eleven", "seventeen")
    ks: tuple[int, ...] = (1, 3, 5)
    metrics: tuple[str, ...] = METRICS
    class_scope: object = "all_three"
    runs: int = 3
    base_seed: int = 0
    per_region: int = 4
    segmentation: str = "threshold"
    standardize: bool = True

    def __post_init__(self):
        for name in ("sample_sizes", "feature_sets", "ks", "metrics"):
            vals = getattr(self, name)
            if isinstance(vals, str) or not len(vals):
                raise ValidationError(f"grid dimension {name!r} must be a non-empty list")
            object.__setattr__(self, name, tuple(vals))
        bad = [s for s in self.sample_sizes if s not in SAMPLE_SIZES]
        if bad:
            raise ValidationError(f"sample sizes {bad} not in {SAMPLE_SIZES}")
        bad = [f for f in self.feature_sets if f not in FEATURE_SETS]
        if bad:
            raise ValidationError(f"unknown feature sets {bad}")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad:
            raise ValidationError(f"unknown metrics {bad}")
        if any(not isinstance(k, (int, np.integer)) or k < 1 for k in self.ks):
            raise ValidationError("every k must be a positive integer")
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        if self.per_region < 1:
            raise ValidationError("per_region must be >= 1")
        if self.segmentation not in ("threshold", "kmeans"):
            raise ValidationError(f"unknown segmentation method {self.segmentation!r}")
        object.__setattr__(self, "class_scope", _parse_scope(self.class_scope))

    def configs(self):
        """Configuration keys in lexicographic order."""
        return sorted(itertools.product(self.sample_sizes, self.feature_sets, self.ks, self.metrics))

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GridSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown grid fields {sorted(unknown)}")
        return cls(**d)


def _config_dict(key) -> dict:
    size, fs, k, metric = key
    return {"sample_size": size, "feature_set": fs, "k": k, "metric": metric}


@dataclass
class ConfigResult:
    config: dict
    mean_accuracy: float | None = None
    max_accuracy: float | None = None
    evals: list = field(default_factory=list)  # dicts: run, pair, swapped, split_seed, accuracy, confusion
    error: str | None = None

    @property
    def key(self):
        c = self.config
        return (c["sample_size"], c["feature_set"], c["k"], c["metric"])

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "mean_accuracy": self.mean_accuracy,
            "max_accuracy": self.max_accuracy,
            "error": self.error,
            "evals": self.evals,
        }


@dataclass
class OptimizationReport:
    spec: GridSpec
    results: list[ConfigResult]
    best_config: dict | None
    notes: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    wall_time: float = 0.0  # kept out of to_json; lives in run metadata

    @property
    def scope(self) -> str:
        return scope_name(self.spec.class_scope)

    def result_for(self, key) -> ConfigResult:
        for r in self.results:
            if r.key == tuple(key):
                return r
        raise KeyError(key)

    def to_json(self) -> dict:
        return {
            "scope": self.scope,
            "grid": self.spec.to_json(),
            "best_config": self.best_config,
            "notes": self.notes,
            "errors": self.errors,
            "results": [r.to_json() for r in self.results],
        }

    @classmethod
    def from_json(cls, d: dict) -> "OptimizationReport":
        results = [ConfigResult(**r) for r in d["results"]]
        return cls(GridSpec.from_json(d["grid"]), results, d["best_config"], d.get("notes", {}), d.get("errors", []))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "OptimizationReport":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# -- sample tables -------------------------------------------------------------

def _by_class(corpus, classes):
    groups = {c: [im for im in corpus if im.label == c] for c in classes}
    return {c: g for c, g in groups.items() if g}


def collect_windows(corpus, size: int, classes=(1, 2, 3), per_region: int = 4, base_seed: int = 0,
                    segmentation: str = "threshold"):
    """Pilot windows plus their best NCC matches in the other images.

    Returns a list of ``(class_label, SampleWindow)`` in class order, pilot
    windows first.  Extraction seeds depend only on ``(base_seed, size,
    class)``, so a class yields the same windows whatever scope it is
    evaluated in.  A matched position already taken in the same image is
    not repeated.
    """
    out = []
    for c, images in sorted(_by_class(corpus, classes).items()):
        pilot = images[0]
        tpl = segment(pilot.pixels, method=segmentation, seed=derive_seed(base_seed, 1, c))
        pilot_windows = extract_samples(
            pilot.pixels, tpl, size, per_region, seed=derive_seed(base_seed, 2, size, c), source_id=pilot.image_id
        )
        if not pilot_windows:
            raise SpeckleLabError(f"class {c}: pilot image {pilot.image_id} yields no {size}x{size} samples")
        out.extend((c, w) for w in pilot_windows)
        for im in images[1:]:
            seen = set()
            for pw in pilot_windows:
                pos = best_match(im.pixels, pw, "ncc").position
                if pos in seen:
                    continue
                seen.add(pos)
                out.append((c, window_at(im.pixels, pos, size, im.image_id, pw.region_label)))
    return out


def sample_id(w) -> str:
    return f"{w.source_id}@{w.origin[0]},{w.origin[1]}/{w.size}"


def build_sample_table(corpus, size: int, classes=(1, 2, 3), per_region: int = 4, base_seed: int = 0,
                       segmentation: str = "threshold"):
    """Seventeen-feature table over :func:`collect_windows`.

    Returns ``(dataset, region_labels)``.
    """
    pairs = collect_windows(corpus, size, classes, per_region, base_seed, segmentation)
    windows = [w for _, w in pairs]
    ds = LabeledDataset.build(
        feature_matrix(windows, "seventeen"), [c for c, _ in pairs],
        [sample_id(w) for w in windows], [w.source_id for w in windows], "seventeen",
    )
    return ds, np.asarray([w.region_label for w in windows])


def _table_job(args):
    corpus, size, classes, per_region, base_seed, segmentation = args
    try:
        return build_sample_table(corpus, size, classes, per_region, base_seed, segmentation)[0]
    except SpeckleLabError as exc:
        return exc


# -- grid ----------------------------------------------------------------------

def select_best(results) -> ConfigResult | None:
    """Highest mean accuracy; ties by max accuracy, then config order."""
    ok = [r for r in results if r.error is None]
    if not ok:
        return None
    return min(ok, key=lambda r: (-r.mean_accuracy, -r.max_accuracy, r.key))


def run_grid(corpus, spec: GridSpec, workers: int = 1, tables: dict | None = None) -> OptimizationReport:
    """Evaluate every configuration of ``spec`` on ``corpus``.

    ``tables`` may hold precomputed sample tables keyed by sample size
    (as built by :func:`build_sample_table` over all classes); they are
    reused and filled in.
    """
    t0 = time.perf_counter()
    classes = scope_classes(spec.class_scope)
    in_scope = [im for im in corpus if im.label in classes]
    enforce_minimum([im.label for im in in_scope], required_classes=classes)
    n_pairs = 1 + extra_test_pairs(len(in_scope))

    tables = {} if tables is None else tables
    missing = [s for s in spec.sample_sizes if s not in tables]
    jobs = [(corpus, s, (1, 2, 3), spec.per_region, spec.base_seed, spec.segmentation) for s in missing]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            built = list(ex.map(_table_job, jobs))
    else:
        built = [_table_job(j) for j in jobs]
    tables.update(zip(missing, built))

    results = {key: ConfigResult(_config_dict(key)) for key in spec.configs()}
    errors = []
    for size in spec.sample_sizes:
        table = tables[size]
        if isinstance(table, Exception):
            msg = f"sample_size={size}: {table}"
            errors.append(msg)
            for key, r in results.items():
                if key[0] == size:
                    r.error = msg
            continue
        ds17 = table.select_classes(classes)
        for fs in spec.feature_sets:
            ds = ds17.with_set(fs)
            try:
                for run in range(spec.runs):
                    for pair in range(n_pairs):
                        seed = derive_seed(spec.base_seed, 3, size, run, pair)
                        sp = split(ds, seed)
                        for part in (sp, swap(sp)):
                            grid = evaluate_grid(part.train, part.test, spec.ks, spec.metrics,
                                                 spec.standardize, seed, part.swapped)
                            for (k, metric), ev in grid.items():
                                results[(size, fs, k, metric)].evals.append({
                                    "run": run, "pair": pair, "swapped": part.swapped, "split_seed": seed,
                                    "accuracy": ev.accuracy, "confusion": ev.confusion.tolist(),
                                })
            except SpeckleLabError as exc:
                msg = f"sample_size={size}, feature_set={fs}: {exc}"
                errors.append(msg)
                for key, r in results.items():
                    if key[:2] == (size, fs):
                        r.error, r.evals = msg, []

    ordered = [results[key] for key in spec.configs()]
    for r in ordered:
        if r.error is None:
            accs = [e["accuracy"] for e in r.evals]
            r.mean_accuracy = float(np.mean(accs))
            r.max_accuracy = float(np.max(accs))
    best = select_best(ordered)
    notes = {
        "pilot_images": {str(c): g[0].image_id for c, g in sorted(_by_class(in_scope, classes).items())},
        "images_in_scope": len(in_scope),
        "tests_per_run": 2 * n_pairs,
        "sample_rows": {str(s): int(np.isin(t.labels, classes).sum()) for s, t in tables.items()
                        if s in spec.sample_sizes and not isinstance(t, Exception)},
    }
    report = OptimizationReport(spec, ordered, best.config if best else None, notes, errors)
    report.wall_time = time.perf_counter() - t0
    return report


# -- tables --------------------------------------------------------------------

def report_tables(reports) -> dict:
    """Accuracy tables laid out like the sample-size / feature-set bar charts.

    Rows are class scopes, size columns run 120, 90, 60, 30.  ``by_size``
    holds the best mean accuracy at each size, ``by_feature_set`` the best
    mean per feature set and size, ``max_by_feature_set`` the highest
    single-test accuracy.  ``comparisons`` records, per scope and size,
    whether the seventeen-feature set matched or beat the eleven; entries
    where it did not are repeated under ``flags``.
    """
    if isinstance(reports, OptimizationReport):
        reports = [reports]
    if not reports:
        raise ValidationError("no reports to tabulate")
    sizes = [s for s in TABLE_SIZE_ORDER if any(s in r.spec.sample_sizes for r in reports)]

    def best(report, size, fs=None, field_="mean_accuracy"):
        vals = [getattr(r, field_) for r in report.results
                if r.error is None and r.config["sample_size"] == size and (fs is None or r.config["feature_set"] == fs)]
        return max(vals) if vals else None

    by_size, by_fs, max_fs, comps = [], [], [], []
    for rep in reports:
        by_size.append({"scope": rep.scope, **{str(s): best(rep, s) for s in sizes}})
        for fs in ("eleven", "seventeen"):
            if fs not in rep.spec.feature_sets:
                continue
            by_fs.append({"scope": rep.scope, "feature_set": fs, **{str(s): best(rep, s, fs) for s in sizes}})
            max_fs.append({"scope": rep.scope, "feature_set": fs,
                           **{str(s): best(rep, s, fs, "max_accuracy") for s in sizes}})
        if {"eleven", "seventeen"} <= set(rep.spec.feature_sets):
            for s in sizes:
                a, b = best(rep, s, "eleven"), best(rep, s, "seventeen")
                if a is not None and b is not None:
                    comps.append({"scope": rep.scope, "sample_size": s, "eleven": a, "seventeen": b,
                                  "seventeen_ge_eleven": b >= a})
    return {
        "size_order": sizes,
        "by_size": by_size,
        "by_feature_set": by_fs,
        "max_by_feature_set": max_fs,
        "comparisons": comps,
        "flags": [c for c in comps if not c["seventeen_ge_eleven"]],
    }


def write_tables(tables: dict, out_dir) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    sizes = [str(s) for s in tables["size_order"]]
    files = []

    def dump(name, rows, lead):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*lead, *sizes])
            for row in rows:
                w.writerow([row[c] for c in lead] + ["" if row[s] is None else repr(row[s]) for s in sizes])
        files.append(path)

    dump("accuracy_by_sample_size.csv", tables["by_size"], ["scope"])
    dump("accuracy_by_feature_set.csv", tables["by_feature_set"], ["scope", "feature_set"])
    dump("max_accuracy_by_feature_set.csv", tables["max_by_feature_set"], ["scope", "feature_set"])
    path = os.path.join(out_dir, "tables.json")
    with open(path, "w") as fh:
        json.dump(tables, fh, indent=1, sort_keys=True)
        fh.write("\n")
    files.append(path)
    return files
