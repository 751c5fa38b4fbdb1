"""Texture descriptors for sample windows.

Neighbourhood operators (Phillips' texture chapter) are evaluated at every
pixel whose full ``n x n`` neighbourhood lies inside the window, and the
scalar feature is the mean of that per-pixel map.  Co-occurrence features
follow Haralick et al. (1973) on an 8-level, distance-1, four-direction
symmetric GLCM, averaged over directions.

Local moments are computed from integer power sums so that flat or
symmetric neighbourhoods give exactly zero.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError
from .sampling import SampleWindow

__all__ = [
    "PHILLIPS_NAMES",
    "STATS_NAMES",
    "EXTENDED_NAMES",
    "FEATURES_11",
    "FEATURES_17",
    "FEATURE_SETS",
    "Glcm",
    "FeatureVector",
    "variance_russ",
    "variance_levine",
    "sigma",
    "skewness",
    "mean",
    "median",
    "std_dev",
    "glcm",
    "haralick_five",
    "feature_vector",
    "feature_matrix",
    "feature_manifest_hash",
]

PHILLIPS_NAMES = tuple(
    f"{op}_{n}" for n in (3, 5) for op in ("variance_russ", "variance_levine", "sigma", "skewness")
)
STATS_NAMES = ("mean", "median", "stddev")
EXTENDED_NAMES = (
    "intensity",
    "glcm_contrast",
    "glcm_correlation",
    "glcm_energy",
    "glcm_homogeneity",
    "glcm_entropy",
)
FEATURES_11 = PHILLIPS_NAMES + STATS_NAMES
FEATURES_17 = FEATURES_11 + EXTENDED_NAMES
FEATURE_SETS = {"eleven": FEATURES_11, "seventeen": FEATURES_17}

# (d_row, d_col) for 0, 45, 90, 135 degrees at distance 1
DEFAULT_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1))


def feature_manifest_hash() -> str:
    """Short digest of the feature order and GLCM settings, stamped on CSVs."""
    text = ",".join(FEATURES_17) + f"|G=8|offsets={DEFAULT_OFFSETS}|symmetric"
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _pix(w) -> np.ndarray:
    a = w.pixels if isinstance(w, SampleWindow) else np.asarray(w)
    if a.ndim != 2:
        raise ValidationError("window must be 2-D")
    return a


def _neigh(w, n: int) -> np.ndarray:
    a = _pix(w)
    if n not in (3, 5):
        raise ValidationError("neighborhood must be 3 or 5")
    if a.shape[0] < n or a.shape[1] < n:
        raise ValidationError(f"window {a.shape} smaller than {n}x{n} neighborhood")
    return sliding_window_view(a.astype(np.int64), (n, n))


def _power_sums(w, n):
    nb = _neigh(w, n)
    s1 = nb.sum(axis=(-2, -1))
    s2 = (nb * nb).sum(axis=(-2, -1))
    s3 = (nb * nb * nb).sum(axis=(-2, -1))
    return s1, s2, s3


def variance_russ_map(w, n: int) -> np.ndarray:
    nb = _neigh(w, n)
    c = nb[..., n // 2, n // 2][..., None, None]
    return np.sqrt(((nb - c) ** 2).sum(axis=(-2, -1)).astype(float))


def variance_russ(w, neighborhood: int = 3) -> float:
    """Mean over interior pixels of sqrt(sum of squared centre-neighbour differences)."""
    return float(variance_russ_map(w, neighborhood).mean())


def _local_var_int(w, n):
    s1, s2, _ = _power_sums(w, n)
    N = n * n
    return N * s2 - s1 * s1, N  # N^2 * population variance


def variance_levine_map(w, n: int) -> np.ndarray:
    v, N = _local_var_int(w, n)
    return v / float(N * N)


def variance_levine(w, neighborhood: int = 3) -> float:
    return float(variance_levine_map(w, neighborhood).mean())


def sigma(w, neighborhood: int = 3) -> float:
    return float(np.sqrt(variance_levine_map(w, neighborhood)).mean())


def skewness_map(w, n: int) -> np.ndarray:
    s1, s2, s3 = _power_sums(w, n)
    N = n * n
    m3 = N * N * s3 - 3 * N * s1 * s2 + 2 * s1 ** 3  # N^3 * third central moment
    v = N * s2 - s1 * s1  # N^2 * variance
    out = np.zeros(v.shape)
    nz = v > 0
    out[nz] = m3[nz] / v[nz].astype(float) ** 1.5
    return out


def skewness(w, neighborhood: int = 3) -> float:
    """Mean local skewness; flat neighbourhoods contribute 0."""
    return float(skewness_map(w, neighborhood).mean())


def mean(w) -> float:
    return float(_pix(w).astype(np.int64).mean())


def median(w) -> float:
    """Lower median (the smaller middle value for even counts)."""
    a = np.sort(_pix(w), axis=None)
    return float(a[(a.size - 1) // 2])


def std_dev(w) -> float:
    """Population standard deviation over all window pixels."""
    a = _pix(w).astype(np.int64)
    n = a.size
    s1 = int(a.sum())
    s2 = int((a * a).sum())
    return float(np.sqrt((n * s2 - s1 * s1) / float(n * n)))


@dataclass(frozen=True)
class Glcm:
    levels: int
    matrices: np.ndarray  # (directions, G, G), each normalised to sum 1
    offsets: tuple[tuple[int, int], ...]
    counts: np.ndarray  # raw pair counts, same shape

    @property
    def matrix(self) -> np.ndarray:
        """Direction-averaged normalised matrix."""
        return self.matrices.mean(axis=0)


def quantize(a, levels: int = 8) -> np.ndarray:
    return (np.asarray(a).astype(np.int64) * levels) // 256


def glcm(w, levels: int = 8, offsets=DEFAULT_OFFSETS, symmetric: bool = True) -> Glcm:
    """Gray-level co-occurrence matrices, one per offset.

    Offsets that do not fit in the window are dropped; if none fit a
    :class:`ValidationError` is raised.
    """
    if levels < 1 or 256 % levels:
        raise ValidationError("levels must divide 256")
    q = quantize(_pix(w), levels)
    h, wd = q.shape
    kept, mats, cnts = [], [], []
    for dr, dc in offsets:
        if abs(dr) >= h or abs(dc) >= wd:
            continue
        r0, c0 = max(0, -dr), max(0, -dc)
        a = q[r0 : h - max(0, dr), c0 : wd - max(0, dc)]
        b = q[r0 + dr : r0 + dr + a.shape[0], c0 + dc : c0 + dc + a.shape[1]]
        c = np.bincount((a * levels + b).ravel(), minlength=levels * levels).reshape(levels, levels)
        if symmetric:
            c = c + c.T
        kept.append((dr, dc))
        cnts.append(c)
        mats.append(c / c.sum())
    if not kept:
        raise ValidationError(f"window {q.shape} admits none of the GLCM offsets")
    return Glcm(levels=levels, matrices=np.stack(mats), offsets=tuple(kept), counts=np.stack(cnts))


def _haralick_single(p: np.ndarray) -> np.ndarray:
    G = p.shape[0]
    i, j = np.indices((G, G))
    contrast = np.sum(p * (i - j) ** 2)
    mu_x = np.sum(i * p)
    mu_y = np.sum(j * p)
    sd_x = np.sqrt(np.sum(p * (i - mu_x) ** 2))
    sd_y = np.sqrt(np.sum(p * (j - mu_y) ** 2))
    if sd_x * sd_y < 1e-12:
        correlation = 1.0
    else:
        correlation = np.sum(p * (i - mu_x) * (j - mu_y)) / (sd_x * sd_y)
    energy = np.sum(p * p)
    homogeneity = np.sum(p / (1.0 + np.abs(i - j)))
    nz = p[p > 0]
    entropy = -np.sum(nz * np.log2(nz))
    return np.array([contrast, correlation, energy, homogeneity, entropy])


def haralick_five(g: Glcm) -> dict[str, float]:
    vals = np.mean([_haralick_single(p) for p in g.matrices], axis=0)
    keys = ("contrast", "correlation", "energy", "homogeneity", "entropy")
    return {k: float(v) for k, v in zip(keys, vals)}


@dataclass(frozen=True)
class FeatureVector:
    values: dict[str, float]
    set_kind: str

    @property
    def names(self) -> tuple[str, ...]:
        return FEATURE_SETS[self.set_kind]

    def as_array(self) -> np.ndarray:
        return np.array([self.values[k] for k in self.names])

    def __len__(self):
        return len(self.values)


def _resolve_kind(set_kind) -> str:
    kinds = {"eleven": "eleven", "11": "eleven", 11: "eleven", "seventeen": "seventeen", "17": "seventeen", 17: "seventeen"}
    try:
        return kinds[set_kind]
    except (KeyError, TypeError):
        raise ValidationError(f"unknown feature set {set_kind!r}") from None


def feature_vector(w, set_kind="seventeen") -> FeatureVector:
    kind = _resolve_kind(set_kind)
    vals = {}
    for n in (3, 5):
        vals[f"variance_russ_{n}"] = variance_russ(w, n)
        vals[f"variance_levine_{n}"] = variance_levine(w, n)
        vals[f"sigma_{n}"] = sigma(w, n)
        vals[f"skewness_{n}"] = skewness(w, n)
    vals["mean"] = mean(w)
    vals["median"] = median(w)
    vals["stddev"] = std_dev(w)
    if kind == "seventeen":
        vals["intensity"] = vals["mean"]
        for k, v in haralick_five(glcm(w)).items():
            vals[f"glcm_{k}"] = v
    ordered = {k: vals[k] for k in FEATURE_SETS[kind]}
    return FeatureVector(ordered, kind)


def feature_matrix(windows, set_kind="seventeen") -> np.ndarray:
    """Stack feature vectors for many windows, rows in input order."""
    kind = _resolve_kind(set_kind)
    if not windows:
        return np.empty((0, len(FEATURE_SETS[kind])))
    return np.vstack([feature_vector(w, kind).as_array() for w in windows])
