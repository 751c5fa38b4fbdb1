"""Histogram peak/valley detection and the two region templates.

Two templates are built from the same histogram: a multi-threshold
template whose cut points are the histogram valleys, and a 1-D k-means
template over intensities with ``len(valleys) + 1`` clusters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import DegenerateClusteringError, ValidationError
from .image_core import Histogram, as_gray, histogram

__all__ = [
    "ValleyReport",
    "SegmentationTemplate",
    "KMeansResult",
    "detect_valleys",
    "thresholds_from_valleys",
    "threshold_segment",
    "kmeans_1d",
    "kmeans_segment",
    "segment",
]


@dataclass(frozen=True)
class ValleyReport:
    smoothed_bins: np.ndarray
    peaks: list[int]
    valleys: list[int]


@dataclass(frozen=True)
class SegmentationTemplate:
    """Per-pixel region labels in ``[0, K-1]``.

    ``thresholds`` is filled for ``method == "threshold"`` and ``centers``
    for ``method == "kmeans"``.
    """

    labels: np.ndarray
    K: int
    method: str
    thresholds: tuple[int, ...] = ()
    centers: tuple[float, ...] = ()
    sse: float | None = None

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def to_json(self) -> dict:
        d = {"K": self.K, "method": self.method}
        if self.method == "threshold":
            d["thresholds"] = list(self.thresholds)
        else:
            d["centers"] = list(self.centers)
        return d


def detect_valleys(h: Histogram | np.ndarray, smoothing_window: int = 9, min_prominence: float = 0.05) -> ValleyReport:
    """Find modes and the valleys separating them in a 256-bin histogram.

    The histogram is smoothed with a centred moving average.  Peaks are
    local maxima whose topographic prominence is at least
    ``min_prominence * max(smoothed)``; histogram ends may be peaks.  Each
    valley is the lowest smoothed bin strictly between two consecutive
    peaks, ties going to the lower intensity.
    """
    if smoothing_window < 1 or smoothing_window % 2 == 0:
        raise ValidationError("smoothing_window must be an odd integer >= 1")
    if not 0 <= min_prominence < 1:
        raise ValidationError("min_prominence must lie in [0, 1)")
    bins = np.asarray(h.bins if isinstance(h, Histogram) else h, dtype=float)
    kernel = np.ones(smoothing_window) / smoothing_window
    smoothed = np.convolve(bins, kernel, mode="same")
    top = smoothed.max()
    if top <= 0:
        return ValleyReport(smoothed, [], [])
    # zero padding lets a mode sitting on bin 0 or 255 register as a peak
    padded = np.concatenate([[0.0], smoothed, [0.0]])
    idx, _ = find_peaks(padded, prominence=max(min_prominence * top, np.finfo(float).tiny))
    peaks = [int(i) - 1 for i in idx]
    valleys = []
    for a, b in zip(peaks, peaks[1:]):
        seg = smoothed[a + 1 : b]
        valleys.append(a + 1 + int(np.argmin(seg)))
    return ValleyReport(smoothed, peaks, valleys)


def thresholds_from_valleys(valleys) -> list[int]:
    """Valley intensities become band cut points (a pixel equal to the
    valley starts the upper band)."""
    out = sorted({int(v) for v in valleys if 1 <= int(v) <= 255})
    return out


def threshold_segment(img, thresholds) -> SegmentationTemplate:
    """Label each pixel with the number of thresholds it is >= to."""
    a = as_gray(img)
    t = [int(x) for x in thresholds]
    if any(not 1 <= x <= 255 for x in t):
        raise ValidationError("thresholds must lie in [1, 255]")
    if any(b <= a_ for a_, b in zip(t, t[1:])):
        raise ValidationError("thresholds must be strictly ascending")
    lut = np.searchsorted(np.asarray(t, dtype=np.int64), np.arange(256), side="right").astype(np.int32)
    return SegmentationTemplate(labels=lut[a], K=len(t) + 1, method="threshold", thresholds=tuple(t))


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray
    assignment: np.ndarray  # cluster index for each input value
    sse: float
    sse_history: list[float] = field(default_factory=list)


def _weighted_sse(values, weights, centers, assign):
    return float(np.sum(weights * (values - centers[assign]) ** 2))


def _assign(values, centers):
    # argmin keeps the first minimum, i.e. the lower-indexed centre on ties
    return np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)


def _kmeanspp_init(values, weights, K, rng):
    centers = [values[rng.choice(len(values), p=weights / weights.sum())]]
    for _ in range(1, K):
        d2 = np.min((values[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        mass = weights * d2
        if mass.sum() <= 0:
            remaining = np.setdiff1d(values, centers)
            centers.append(remaining[rng.integers(len(remaining))])
        else:
            centers.append(values[rng.choice(len(values), p=mass / mass.sum())])
    return np.asarray(centers, dtype=float)


def _lloyd(values, weights, centers, max_iter):
    K = len(centers)
    assign = _assign(values, centers)
    history = [_weighted_sse(values, weights, centers, assign)]
    for _ in range(max_iter):
        new_centers = centers.copy()
        for c in range(K):
            m = assign == c
            w = weights[m].sum()
            if w > 0:
                new_centers[c] = np.sum(weights[m] * values[m]) / w
            else:
                # empty cluster: move it onto the worst-fitted value
                err = weights * (values - new_centers[assign]) ** 2
                new_centers[c] = values[int(np.argmax(err))]
        new_assign = _assign(values, new_centers)
        sse = _weighted_sse(values, weights, new_centers, new_assign)
        converged = np.array_equal(new_assign, assign) and np.allclose(new_centers, centers, rtol=0, atol=1e-12)
        centers, assign = new_centers, new_assign
        history.append(sse)
        if converged:
            break
    return centers, assign, history


def kmeans_1d(values, weights=None, K: int = 2, restarts: int = 3, seed=None, max_iter: int = 100) -> KMeansResult:
    """Weighted 1-D k-means, best of ``restarts`` k-means++ initialisations.

    Centres in the result are sorted ascending and ``assignment`` refers to
    that order.
    """
    values = np.asarray(values, dtype=float)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    keep = weights > 0
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    if K < 1:
        raise ValidationError("K must be >= 1")
    n_distinct = len(np.unique(values[keep]))
    if K > n_distinct:
        raise DegenerateClusteringError(
            f"degenerate clustering: K={K} exceeds {n_distinct} distinct intensities"
        )
    v, w = values[keep], weights[keep]
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        init = _kmeanspp_init(v, w, K, rng)
        centers, assign, history = _lloyd(v, w, init, max_iter)
        if best is None or history[-1] < best[2][-1]:
            best = (centers, assign, history)
    centers, _, history = best
    order = np.argsort(centers, kind="stable")
    centers = centers[order]
    full_assign = _assign(values, centers)
    return KMeansResult(centers=centers, assignment=full_assign, sse=history[-1], sse_history=history)


def kmeans_segment(img, K: int, restarts: int = 3, seed=None) -> SegmentationTemplate:
    """Cluster pixel intensities into ``K`` groups (on the histogram)."""
    if not 1 <= K <= 255:
        raise ValidationError("K must lie in [1, 255]")
    a = as_gray(img)
    bins = histogram(a).bins
    res = kmeans_1d(np.arange(256), bins, K=K, restarts=restarts, seed=seed)
    lut = res.assignment.astype(np.int32)
    return SegmentationTemplate(
        labels=lut[a], K=K, method="kmeans", centers=tuple(float(c) for c in res.centers), sse=res.sse
    )


def segment(img, method: str = "threshold", valleys: int | None = None, seed=None,
            smoothing_window: int = 9, min_prominence: float = 0.05) -> SegmentationTemplate:
    """Build a template the way the pipeline does: detect valleys, then cut.

    ``valleys`` overrides the detected valley count.  When fewer valleys
    are detected than requested, the lowest remaining interior minima of
    the smoothed histogram are added.
    """
    a = as_gray(img)
    report = detect_valleys(histogram(a), smoothing_window, min_prominence)
    found = list(report.valleys)
    if valleys is not None:
        if valleys < 0:
            raise ValidationError("valleys must be >= 0")
        found = _adjust_valleys(report, valleys)
    if method == "threshold":
        return threshold_segment(a, thresholds_from_valleys(found))
    if method == "kmeans":
        K = min(len(found) + 1, len(np.unique(a)))
        return kmeans_segment(a, K, seed=seed)
    raise ValidationError(f"unknown segmentation method {method!r}")


def _adjust_valleys(report: ValleyReport, n: int) -> list[int]:
    v = list(report.valleys)
    s = report.smoothed_bins
    if len(v) > n:
        # keep the deepest valleys
        v = sorted(sorted(v, key=lambda i: (s[i], i))[:n])
        return v
    occupied = np.nonzero(s > 0)[0]
    if len(occupied) == 0:
        return v
    lo, hi = occupied[0], occupied[-1]
    candidates = [i for i in range(lo + 1, hi) if i not in v and s[i] <= s[i - 1] and s[i] <= s[i + 1]]
    candidates.sort(key=lambda i: (s[i], i))
    for i in candidates:
        if len(v) >= n:
            break
        v.append(i)
    if len(v) < n:
        # fall back to evenly spaced cuts across the occupied range
        extra = np.linspace(lo, hi, n - len(v) + 2)[1:-1].round().astype(int)
        v.extend(int(i) for i in extra if int(i) not in v)
    return sorted(set(v))[:n]
