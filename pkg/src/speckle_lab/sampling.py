"""Template matching (NCC and SSD) and extraction of square sample windows.

Positions are ``(u, v)`` = (column, row) of the template's top-left corner
inside the searched image.  Two scan paths exist for :func:`best_match`:
``"exhaustive"`` evaluates the score formula directly at every position,
and ``"fast"`` computes the same quantities from integral images plus an
exact integer cross-correlation.  Both apply the same tie-break.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from .errors import NoValidMatchError, UndefinedCorrelationError, ValidationError
from .image_core import as_gray
from .segmentation import SegmentationTemplate

__all__ = [
    "SAMPLE_SIZES",
    "SampleWindow",
    "MatchScore",
    "ncc_score",
    "ssd_score",
    "best_match",
    "ncc_map",
    "extract_samples",
    "window_at",
    "COVERAGE",
]

SAMPLE_SIZES = (30, 60, 90, 120)
COVERAGE = 0.8


@dataclass(frozen=True)
class SampleWindow:
    origin: tuple[int, int]  # (x, y) top-left
    size: int
    pixels: np.ndarray
    source_id: str = ""
    region_label: int = 0

    def __post_init__(self):
        if self.pixels.shape != (self.size, self.size):
            raise ValidationError(f"window pixels {self.pixels.shape} do not match size {self.size}")


@dataclass(frozen=True)
class MatchScore:
    position: tuple[int, int]  # (u, v)
    score: float
    metric: str


def _pixels(t) -> np.ndarray:
    return t.pixels if isinstance(t, SampleWindow) else as_gray(t)


def _real_pixels(t) -> np.ndarray:
    # score functions accept real-valued templates, e.g. a*t + b
    a = t.pixels if isinstance(t, SampleWindow) else np.asarray(t)
    if a.dtype.kind == "f":
        if a.ndim != 2 or a.size == 0 or not np.isfinite(a).all():
            raise ValidationError(f"template must be a finite non-empty 2-D array, got shape {a.shape}")
        return a
    return as_gray(a)


def _region(f, t, u, v):
    f = as_gray(f)
    th, tw = t.shape
    if u < 0 or v < 0 or v + th > f.shape[0] or u + tw > f.shape[1]:
        raise ValidationError(f"template {t.shape} does not fit inside image {f.shape} at (u={u}, v={v})")
    return f[v : v + th, u : u + tw]


def ncc_score(f, t, u: int, v: int) -> float:
    """Normalised cross-correlation of template ``t`` against ``f`` at (u, v).

    Both the template and the covered region are mean-centred; the result
    lies in [-1, 1].  Raises :class:`UndefinedCorrelationError` when either
    has zero variance.
    """
    t = _real_pixels(t).astype(float)
    region = _region(f, t, u, v).astype(float)
    fc = region - region.mean()
    tc = t - t.mean()
    den = np.sqrt(np.sum(fc * fc) * np.sum(tc * tc))
    if den == 0:
        raise UndefinedCorrelationError("undefined correlation: zero variance under the template")
    return float(np.sum(fc * tc) / den)


def ssd_score(f, t, u: int, v: int) -> float:
    t = _real_pixels(t)
    region = _region(f, t, u, v)
    if t.dtype.kind == "f":
        return float(np.sum((region - t) ** 2))
    return float(np.sum((region.astype(np.int64) - t.astype(np.int64)) ** 2))


def _exact_correlation(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Integer valued sum_xy f(x+u, y+v) t(x, y) for every valid (u, v)."""
    th, tw = t.shape
    if th * tw <= 64:
        win = sliding_window_view(f.astype(np.int64), t.shape)
        return np.einsum("ijkl,kl->ij", win, t.astype(np.int64))
    # every term is an integer below 2**53, so rounding the FFT result is exact
    corr = fftconvolve(f.astype(float), t[::-1, ::-1].astype(float), mode="valid")
    return np.rint(corr).astype(np.int64)


def _box_sums(a: np.ndarray, h: int, w: int) -> np.ndarray:
    ii = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = a.astype(np.int64).cumsum(0).cumsum(1)
    return ii[h:, w:] - ii[:-h, w:] - ii[h:, :-w] + ii[:-h, :-w]


def ncc_map(f, t) -> np.ndarray:
    """NCC at every valid position (rows = v, cols = u); NaN where undefined."""
    f = as_gray(f)
    t = _pixels(t)
    th, tw = t.shape
    n = th * tw
    s_f = _box_sums(f, th, tw)
    s_ff = _box_sums(f.astype(np.int64) ** 2, th, tw)
    s_t = int(t.astype(np.int64).sum())
    s_tt = int((t.astype(np.int64) ** 2).sum())
    s_ft = _exact_correlation(f, t)
    # n^2 times the centred sums; all exact in int64 for 8-bit data
    num = n * s_ft - s_t * s_f
    var_f = n * s_ff - s_f * s_f
    var_t = n * s_tt - s_t * s_t
    out = np.full(num.shape, np.nan)
    ok = (var_f > 0) & (var_t > 0)
    out[ok] = num[ok] / np.sqrt(var_f[ok].astype(float) * float(var_t))
    return out


def _ssd_map(f, t) -> np.ndarray:
    th, tw = t.shape
    s_ff = _box_sums(f.astype(np.int64) ** 2, th, tw)
    s_tt = int((t.astype(np.int64) ** 2).sum())
    return (s_ff - 2 * _exact_correlation(f, t) + s_tt).astype(float)


def _pick(scores: np.ndarray, metric: str) -> MatchScore:
    valid = ~np.isnan(scores)
    if not valid.any():
        raise NoValidMatchError("no valid match: NCC undefined at every position")
    target = np.nanmax(scores) if metric == "ncc" else np.nanmin(scores)
    # first hit in row-major order = smallest (v, u)
    v, u = np.argwhere(valid & (scores == target))[0]
    return MatchScore(position=(int(u), int(v)), score=float(target), metric=metric)


def best_match(f, t, metric: str = "ncc", method: str = "fast") -> MatchScore:
    """Scan every valid placement of ``t`` in ``f`` and return the best one.

    NCC is maximised, SSD minimised.  Positions where NCC is undefined are
    skipped.  Ties go to the smallest ``(v, u)``.
    """
    f = as_gray(f)
    tp = _pixels(t)
    if tp.shape[0] > f.shape[0] or tp.shape[1] > f.shape[1]:
        raise ValidationError(f"template {tp.shape} larger than image {f.shape}")
    if metric not in ("ncc", "ssd"):
        raise ValidationError(f"unknown metric {metric!r}")
    if method == "fast":
        scores = ncc_map(f, tp) if metric == "ncc" else _ssd_map(f, tp)
    elif method == "exhaustive":
        rows = f.shape[0] - tp.shape[0] + 1
        cols = f.shape[1] - tp.shape[1] + 1
        scores = np.full((rows, cols), np.nan)
        for v in range(rows):
            for u in range(cols):
                if metric == "ssd":
                    scores[v, u] = ssd_score(f, tp, u, v)
                else:
                    try:
                        scores[v, u] = ncc_score(f, tp, u, v)
                    except UndefinedCorrelationError:
                        pass
    else:
        raise ValidationError(f"unknown scan method {method!r}")
    return _pick(scores, metric)


def window_at(img, origin, size: int, source_id: str = "", region_label: int = 0) -> SampleWindow:
    a = as_gray(img)
    x, y = origin
    if x < 0 or y < 0 or y + size > a.shape[0] or x + size > a.shape[1]:
        raise ValidationError(f"window at {origin} of size {size} leaves image {a.shape}")
    return SampleWindow(
        origin=(int(x), int(y)), size=int(size), pixels=a[y : y + size, x : x + size].copy(),
        source_id=source_id, region_label=int(region_label),
    )


def qualifying_origins(template: SegmentationTemplate, label: int, size: int, coverage: float = COVERAGE) -> np.ndarray:
    """Boolean map over origins (rows = y, cols = x): footprint covered by
    ``label`` on at least ``coverage`` of its pixels."""
    counts = _box_sums((template.labels == label).astype(np.int64), size, size)
    return counts >= coverage * size * size


def extract_samples(img, template: SegmentationTemplate, size: int, per_region: int = 1, seed=None,
                    source_id: str = "", allow_any_size: bool = False) -> list[SampleWindow]:
    """Draw up to ``per_region`` windows from each region of ``template``.

    Origins qualify when the window is at least 80% covered by the region.
    Among qualifying origins, picks are uniform at random, first avoiding
    overlap with any window already chosen, then (if the region runs out of
    room) allowing overlap with distinct origins.  Regions with no
    qualifying origin contribute nothing.
    """
    a = as_gray(img)
    if template.labels.shape != a.shape:
        raise ValidationError("template and image shapes differ")
    if size > min(a.shape):
        raise ValidationError(f"sample size {size} exceeds image {a.shape}")
    if size < 1 or per_region < 1:
        raise ValidationError("size and per_region must be >= 1")
    if not allow_any_size and size not in SAMPLE_SIZES:
        raise ValidationError(f"sample size must be one of {SAMPLE_SIZES}")
    rng = np.random.default_rng(seed)
    rows, cols = a.shape[0] - size + 1, a.shape[1] - size + 1
    blocked = np.zeros((rows, cols), dtype=bool)
    out = []
    for label in range(template.K):
        ok = qualifying_origins(template, label, size)
        chosen = []
        taken = np.zeros_like(ok)
        for allow_overlap in (False, True):
            while len(chosen) < per_region:
                pool = ok & ~taken if allow_overlap else ok & ~blocked
                flat = np.flatnonzero(pool)
                if flat.size == 0:
                    break
                idx = flat[rng.integers(flat.size)]
                y, x = divmod(int(idx), cols)
                chosen.append((x, y))
                taken[y, x] = True
                blocked[max(0, y - size + 1) : y + size, max(0, x - size + 1) : x + size] = True
        for x, y in chosen:
            out.append(window_at(a, (x, y), size, source_id, label))
    return out
