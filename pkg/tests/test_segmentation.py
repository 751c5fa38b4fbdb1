import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import best_contiguous_partition_sse
from speckle_lab.errors import DegenerateClusteringError, ValidationError
from speckle_lab.image_core import histogram
from speckle_lab.segmentation import (
    detect_valleys,
    kmeans_1d,
    kmeans_segment,
    segment,
    threshold_segment,
)


def mixture_image(modes, n_per_mode=4000, spread=6, seed=0):
    rng = np.random.default_rng(seed)
    vals = np.concatenate([rng.normal(m, spread, n_per_mode) for m in modes])
    vals = np.clip(np.round(vals), 0, 255).astype(np.uint8)
    rng.shuffle(vals)
    return vals.reshape(len(modes) * 40, -1)


def test_constant_image_single_peak():
    r = detect_valleys(histogram(np.full((10, 10), 7, dtype=np.uint8)))
    assert r.peaks == [7] and r.valleys == []


def test_two_spikes_one_valley():
    img = np.full((10, 10), 50, dtype=np.uint8)
    img[:, 5:] = 200
    r = detect_valleys(histogram(img))
    assert r.peaks == [50, 200]
    # brute force: lowest smoothed bin strictly between the spikes, lowest index on ties
    s = r.smoothed_bins
    inner = range(51, 200)
    lowest = min(s[i] for i in inner)
    expect = min(i for i in inner if s[i] == lowest)
    assert r.valleys == [expect]
    assert 50 < r.valleys[0] < 200


def test_four_modes_three_valleys():
    img = mixture_image([30, 90, 150, 210])
    r = detect_valleys(histogram(img))
    assert len(r.peaks) == 4 and len(r.valleys) == 3
    for lo, v, hi in zip(r.peaks, r.valleys, r.peaks[1:]):
        assert lo < v < hi
    tpl = threshold_segment(img, r.valleys)
    assert tpl.K == 4


def test_peak_at_histogram_edge():
    img = np.zeros((10, 10), dtype=np.uint8)
    img[:, 5:] = 255
    r = detect_valleys(histogram(img))
    # smoothing flattens a spike at the edge into a plateau; its centre sits within half a window
    assert r.peaks[0] <= 4 and r.peaks[1] >= 251 and len(r.valleys) == 1


@pytest.mark.parametrize("window,prom", [(0, 0.05), (4, 0.05), (3, 1.0), (3, -0.1)])
def test_detect_valleys_rejects_bad_params(window, prom):
    with pytest.raises(ValidationError):
        detect_valleys(np.ones(256), window, prom)


@given(arrays(np.int64, 256, elements=st.integers(0, 50)), st.sampled_from([1, 3, 5, 9]))
def test_valleys_interleave_peaks(bins, window):
    r = detect_valleys(bins, window, 0.05)
    assert r.peaks == sorted(r.peaks)
    if len(r.peaks) >= 2:
        assert len(r.valleys) == len(r.peaks) - 1
        for lo, v, hi in zip(r.peaks, r.valleys, r.peaks[1:]):
            assert lo < v < hi
    else:
        assert r.valleys == []


def test_threshold_boundary_convention():
    img = np.array([[99, 100, 101]], dtype=np.uint8)
    assert threshold_segment(img, [100]).labels.tolist() == [[0, 1, 1]]


def test_threshold_all_below_first():
    img = np.full((4, 4), 10, dtype=np.uint8)
    tpl = threshold_segment(img, [50, 100])
    assert tpl.K == 3 and (tpl.labels == 0).all()


def test_threshold_empty_list_single_band():
    tpl = threshold_segment(np.arange(16, dtype=np.uint8).reshape(4, 4), [])
    assert tpl.K == 1 and (tpl.labels == 0).all()


@pytest.mark.parametrize("bad", [[100, 100], [150, 100], [0], [256]])
def test_threshold_validation(bad):
    with pytest.raises(ValidationError):
        threshold_segment(np.zeros((2, 2), dtype=np.uint8), bad)


@given(arrays(np.uint8, (8, 8)), st.lists(st.integers(1, 255), min_size=0, max_size=5, unique=True))
def test_threshold_labels_monotone(img, ts):
    tpl = threshold_segment(img, sorted(ts))
    flat_i, flat_l = img.ravel(), tpl.labels.ravel()
    order = np.argsort(flat_i, kind="stable")
    assert (np.diff(flat_l[order]) >= 0).all()
    assert flat_l.max() < tpl.K


def test_kmeans_two_values_exact():
    img = np.full((6, 6), 10, dtype=np.uint8)
    img[3:] = 200
    tpl = kmeans_segment(img, 2, seed=1)
    assert tpl.centers == (10.0, 200.0) and tpl.sse == 0.0
    assert (tpl.labels[:3] == 0).all() and (tpl.labels[3:] == 1).all()


def test_kmeans_degenerate():
    with pytest.raises(DegenerateClusteringError, match="degenerate clustering"):
        kmeans_segment(np.full((4, 4), 3, dtype=np.uint8), 2)


def test_kmeans_best_of_three_le_single_runs():
    img = mixture_image([40, 60, 130, 200], seed=3)
    bins = histogram(img).bins
    best = kmeans_1d(np.arange(256), bins, K=4, restarts=3, seed=7)
    rng_state = np.random.default_rng(7)
    singles = []
    # replay the three restarts one at a time from the same RNG stream
    from speckle_lab.segmentation import _kmeanspp_init, _lloyd
    v, w = np.arange(256.0)[bins > 0], bins[bins > 0].astype(float)
    for _ in range(3):
        _, _, hist = _lloyd(v, w, _kmeanspp_init(v, w, 4, rng_state), 100)
        singles.append(hist[-1])
    assert best.sse == min(singles)
    assert all(best.sse <= s for s in singles)


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_matches_exhaustive_partition(seed):
    rng = np.random.default_rng(seed)
    values = np.sort(rng.choice(256, 20, replace=False))
    weights = rng.integers(1, 30, 20)
    res = kmeans_1d(values, weights, K=3, restarts=3, seed=seed)
    assert res.sse == pytest.approx(best_contiguous_partition_sse(values.tolist(), weights.tolist(), 3), rel=1e-12)


def test_kmeans_deterministic_and_sse_monotone():
    img = mixture_image([20, 100, 180], seed=5)
    a = kmeans_segment(img, 3, seed=11)
    b = kmeans_segment(img, 3, seed=11)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.centers == b.centers
    res = kmeans_1d(np.arange(256), histogram(img).bins, K=3, seed=11)
    assert all(y <= x + 1e-9 for x, y in zip(res.sse_history, res.sse_history[1:]))
    assert list(res.centers) == sorted(res.centers)


@settings(max_examples=60)
@given(st.integers(0, 100), st.integers(100, 155), st.integers(0, 10_000))
def test_threshold_and_kmeans_agree_on_separated_modes(low, gap, seed):
    high = low + gap
    img = mixture_image([low + 3, min(high, 252)], n_per_mode=2000, spread=3, seed=seed)
    th = segment(img, "threshold")
    km = segment(img, "kmeans", seed=seed)
    assert th.K == km.K == 2
    assert np.mean(th.labels == km.labels) >= 0.95


def test_segment_valley_override():
    img = mixture_image([30, 90, 150, 210])
    assert segment(img, "threshold", valleys=1).K == 2
    assert segment(img, "threshold", valleys=5).K == 6
    assert segment(img, "kmeans", valleys=2, seed=0).K == 3
