"""Labelled feature tables, the balanced train/test split, and the
four-file CSV layout (train, test, train_class, test_class)."""
from __future__ import annotations

import csv
import os
import warnings
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientClassSupportError, InsufficientImagesError, ValidationError
from .texture import FEATURE_SETS

__all__ = [
    "LabeledDataset",
    "SplitPair",
    "split",
    "swap",
    "enforce_minimum",
    "extra_test_pairs",
    "MIN_IMAGES",
    "write_features_csv",
    "read_features_csv",
    "write_split",
    "read_split",
    "write_dataset_csv",
    "read_dataset_csv",
]

MIN_IMAGES = 8
MIN_PER_CLASS = 2
VALID_CLASSES = (1, 2, 3)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) ints in {1, 2, 3}
    sample_ids: tuple[str, ...]
    source_ids: tuple[str, ...]
    set_kind: str

    def __post_init__(self):
        n = len(self.labels)
        if self.set_kind not in FEATURE_SETS:
            raise ValidationError(f"unknown set_kind {self.set_kind!r}")
        if self.features.shape != (n, len(FEATURE_SETS[self.set_kind])):
            raise ValidationError(
                f"features shape {self.features.shape} does not fit {n} rows of the {self.set_kind} set"
            )
        if len(self.sample_ids) != n or len(self.source_ids) != n:
            raise ValidationError("provenance columns must align with rows")
        if n and not set(np.unique(self.labels)).issubset(VALID_CLASSES):
            raise ValidationError("class labels must lie in {1, 2, 3}")

    @classmethod
    def build(cls, features, labels, sample_ids=None, source_ids=None, set_kind="seventeen"):
        features = np.asarray(features, dtype=float)
        if features.ndim != 2:
            features = features.reshape(len(labels), -1)
        labels = np.asarray(labels, dtype=np.int64)
        n = len(labels)
        sample_ids = tuple(sample_ids) if sample_ids is not None else tuple(f"s{i:05d}" for i in range(n))
        source_ids = tuple(source_ids) if source_ids is not None else ("",) * n
        return cls(features, labels, sample_ids, source_ids, set_kind)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return FEATURE_SETS[self.set_kind]

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.set_kind == other.set_kind
            and self.sample_ids == other.sample_ids
            and self.source_ids == other.source_ids
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(
            self.features[idx], self.labels[idx],
            tuple(self.sample_ids[i] for i in idx), tuple(self.source_ids[i] for i in idx), self.set_kind,
        )

    def select_classes(self, classes) -> "LabeledDataset":
        return self.take(np.flatnonzero(np.isin(self.labels, list(classes))))

    def with_set(self, set_kind: str) -> "LabeledDataset":
        """Project a seventeen-feature table onto a feature subset."""
        if set_kind == self.set_kind:
            return self
        names = FEATURE_SETS[set_kind]
        cols = [self.feature_names.index(n) for n in names]
        return replace(self, features=self.features[:, cols], set_kind=set_kind)


@dataclass(frozen=True)
class SplitPair:
    train: LabeledDataset
    test: LabeledDataset
    seed: int | None = None
    swapped: bool = False


def split(ds: LabeledDataset, seed=None) -> SplitPair:
    """Balanced random split.

    Every class present contributes the same number of rows, ``m`` = the
    smallest class size; within a class the rows are shuffled with the
    seeded RNG, the first ``m // 2`` go to train and the next
    ``m - m // 2`` to test.  Rows beyond ``m`` are left out.
    """
    counts = Counter(int(c) for c in ds.labels)
    short = {c: n for c, n in counts.items() if n < MIN_PER_CLASS}
    if not counts or short:
        raise InsufficientClassSupportError(f"insufficient class support: {short or 'no rows'}")
    m = min(counts.values())
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in sorted(counts):
        rows = np.flatnonzero(ds.labels == c)
        rows = rows[rng.permutation(len(rows))][:m]
        train_idx.extend(rows[: m // 2])
        test_idx.extend(rows[m // 2 :])
    return SplitPair(ds.take(train_idx), ds.take(test_idx), seed, False)


def swap(sp: SplitPair) -> SplitPair:
    return SplitPair(sp.test, sp.train, sp.seed, not sp.swapped)


def enforce_minimum(labels, required_classes=None) -> None:
    """Check the image-count rule before classification.

    ``labels`` are the class labels of the selected images.  Passes when
    there are at least eight images and at least two per class; with
    ``required_classes`` every listed class must be present as well.
    Raises :class:`InsufficientImagesError` listing every deficit.
    A warning is issued when a class has fewer than four images.
    """
    counts = Counter(int(c) for c in labels)
    deficits = []
    total = sum(counts.values())
    if total < MIN_IMAGES:
        deficits.append(f"need at least {MIN_IMAGES} images, got {total} (short by {MIN_IMAGES - total})")
    classes = sorted(set(counts) | set(required_classes or ()))
    for c in classes:
        if counts.get(c, 0) < MIN_PER_CLASS:
            deficits.append(f"class {c}: need at least {MIN_PER_CLASS} images, got {counts.get(c, 0)}")
    if deficits:
        raise InsufficientImagesError(deficits)
    few = [c for c in classes if counts[c] < 4]
    if few:
        warnings.warn(f"classes {few} have fewer than four images", stacklevel=2)


def extra_test_pairs(n_images: int) -> int:
    """Fresh split+swap pairs beyond the first: one per image above eight."""
    return max(0, n_images - MIN_IMAGES)


# -- CSV ---------------------------------------------------------------------

def write_features_csv(path, ds: LabeledDataset, region_labels=None, include_class=True) -> None:
    names = ds.feature_names
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "source_id", "region_label", *names, *(["class"] if include_class else [])])
        for i in range(len(ds)):
            region = "" if region_labels is None else int(region_labels[i])
            row = [ds.sample_ids[i], ds.source_ids[i], region, *(_fmt(x) for x in ds.features[i])]
            if include_class:
                row.append(int(ds.labels[i]))
            w.writerow(row)


def _kind_from_header(cols) -> str:
    for kind, names in FEATURE_SETS.items():
        if tuple(cols) == names:
            return kind
    raise ValidationError(f"feature columns do not match a known set: {cols}")


def read_features_csv(path) -> LabeledDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path} is empty")
    head = rows[0]
    if head[:3] != ["sample_id", "source_id", "region_label"] or head[-1] != "class":
        raise ValidationError(f"{path}: expected sample_id,source_id,region_label,...,class header")
    kind = _kind_from_header(head[3:-1])
    body = rows[1:]
    feats = np.array([[float(x) for x in r[3:-1]] for r in body]).reshape(len(body), -1)
    return LabeledDataset.build(feats, [int(r[-1]) for r in body], [r[0] for r in body],
                                [r[1] for r in body], kind)


def write_dataset_csv(data_path, class_path, ds: LabeledDataset) -> None:
    with open(data_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "source_id", *ds.feature_names])
        for i in range(len(ds)):
            w.writerow([ds.sample_ids[i], ds.source_ids[i], *(_fmt(x) for x in ds.features[i])])
    with open(class_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class"])
        for c in ds.labels:
            w.writerow([int(c)])


def read_dataset_csv(data_path, class_path) -> LabeledDataset:
    for p in (data_path, class_path):
        if not os.path.isfile(p):
            raise ValidationError(f"file not found: {p}")
    with open(data_path, newline="") as fh:
        rows = list(csv.reader(fh))
    with open(class_path, newline="") as fh:
        crow = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["sample_id", "source_id"]:
        raise ValidationError(f"{data_path}: expected sample_id,source_id,... header")
    if not crow or crow[0] != ["class"]:
        raise ValidationError(f"{class_path}: expected a single 'class' column")
    kind = _kind_from_header(rows[0][2:])
    body, labels = rows[1:], [int(r[0]) for r in crow[1:]]
    if len(body) != len(labels):
        raise ValidationError(f"{data_path} has {len(body)} rows but {class_path} has {len(labels)}")
    feats = np.array([[float(x) for x in r[2:]] for r in body]).reshape(len(body), -1)
    return LabeledDataset.build(feats, labels, [r[0] for r in body], [r[1] for r in body], kind)


SPLIT_FILES = ("train.csv", "train_class.csv", "test.csv", "test_class.csv")


def write_split(sp: SplitPair, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_dataset_csv(os.path.join(out_dir, "train.csv"), os.path.join(out_dir, "train_class.csv"), sp.train)
    write_dataset_csv(os.path.join(out_dir, "test.csv"), os.path.join(out_dir, "test_class.csv"), sp.test)


def read_split(directory, seed=None) -> SplitPair:
    train = read_dataset_csv(os.path.join(directory, "train.csv"), os.path.join(directory, "train_class.csv"))
    test = read_dataset_csv(os.path.join(directory, "test.csv"), os.path.join(directory, "test_class.csv"))
    return SplitPair(train, test, seed)
