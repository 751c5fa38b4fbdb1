import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from speckle_lab.dataset import LabeledDataset
from speckle_lab.errors import SpeckleLabError, ValidationError
from speckle_lab.knn import METRICS, EvalResult, KnnConfig, distance, evaluate_grid, fit_predict, predict


def ds(x, y, kind="seventeen"):
    return LabeledDataset.build(np.asarray(x, float), y, set_kind=kind)


def test_identical_row_k1():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(9, 17))
    y = [1, 2, 3] * 3
    r = fit_predict(ds(x, y), ds(x[4:5], [y[4]]), KnnConfig(1))
    assert r.predictions.tolist() == [y[4]] and r.accuracy == 1.0


@pytest.mark.parametrize("metric", METRICS)
@pytest.mark.parametrize("k", [1, 3, 5])
def test_predictions_equal_oracle(metric, k):
    rng = np.random.default_rng(hash((metric, k)) % 2**32)
    x = rng.normal(size=(200, 17))
    y = rng.integers(1, 4, 200)
    train, test = ds(x[:120], y[:120]), ds(x[120:], y[120:])
    preds, _ = predict(train, test.features, KnnConfig(k, metric, standardize=False))
    assert preds.tolist() == oracles.knn_predict(x[:120].tolist(), y[:120].tolist(), x[120:].tolist(), k, metric)


def test_tied_kth_neighbours_all_vote():
    # distances 1, 2, 2, 2: with k=2 all three rows at distance 2 vote
    train = ds([[1.0] + [0] * 16, [2.0] + [0] * 16, [-2.0] + [0] * 16, [0] * 16 + [2.0]], [1, 2, 2, 3])
    test = ds([[0.0] * 17], [2])
    preds, _ = predict(train, test.features, KnnConfig(2, "euclidean", False))
    assert preds.tolist() == [2]
    assert oracles.knn_predict(train.features.tolist(), [1, 2, 2, 3], test.features.tolist(), 2, "euclidean") == [2]


def test_vote_tie_breaks():
    # one vote each; class 3 is closer in summed distance
    train = ds([[3.0] + [0] * 16, [1.0] + [0] * 16], [1, 3])
    preds, _ = predict(train, np.zeros((1, 17)), KnnConfig(2, "euclidean", False))
    assert preds.tolist() == [3]
    # equal counts and equal sums: lower label
    train = ds([[1.0] + [0] * 16, [-1.0] + [0] * 16], [2, 1])
    preds, _ = predict(train, np.zeros((1, 17)), KnnConfig(2, "euclidean", False))
    assert preds.tolist() == [1]


def test_separated_clusters_perfect():
    rng = np.random.default_rng(1)
    centres = np.array([[0.0] * 17, [10.0] * 17, [20.0] * 17])
    y = np.repeat([1, 2, 3], 20)
    x = centres[y - 1] + rng.normal(0, 0.1, (60, 17))
    order = rng.permutation(60)
    tr, te = order[:30], order[30:]
    r = fit_predict(ds(x[tr], y[tr]), ds(x[te], y[te]), KnnConfig(3, "euclidean"))
    assert r.accuracy == 1.0
    assert r.confusion.sum() == 30 and np.trace(r.confusion) == 30


def test_distance_examples():
    assert distance([0, 0], [3, 4]) == 5.0
    assert distance([0, 0], [3, 4], "manhattan") == 7.0
    assert distance([0, 0], [3, 4], "chebyshev") == 4.0
    assert distance([1, 0], [0, 2], "cosine") == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(SpeckleLabError):
        distance([0, 0], [1, 1], "cosine")
    with pytest.raises(ValidationError):
        distance([0], [1], "hamming")


@given(arrays(float, 6, elements=st.floats(-1e3, 1e3)), arrays(float, 6, elements=st.floats(-1e3, 1e3)),
       st.sampled_from(METRICS))
def test_distance_matches_oracle(a, b, metric):
    if metric == "cosine" and (not a.any() or not b.any()):
        return
    assert distance(a, b, metric) == pytest.approx(oracles.dist(a.tolist(), b.tolist(), metric), abs=1e-12, rel=1e-12)


@given(arrays(float, 5, elements=st.floats(-1e3, 1e3)), arrays(float, 5, elements=st.floats(-1e3, 1e3)),
       st.sampled_from(METRICS[:3]))
def test_metric_axioms(a, b, metric):
    d = distance(a, b, metric)
    assert d >= 0
    assert d == distance(b, a, metric)
    assert distance(a, a, metric) == 0


def test_standardisation_affine_invariance():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(60, 17))
    y = rng.integers(1, 4, 60)
    scale = rng.uniform(0.01, 100, 17) * rng.choice([-1, 1], 17)
    shift = rng.uniform(-1e3, 1e3, 17)
    for metric in ("euclidean", "manhattan", "chebyshev"):
        a = fit_predict(ds(x[:30], y[:30]), ds(x[30:], y[30:]), KnnConfig(3, metric))
        b = fit_predict(ds(x[:30] * scale + shift, y[:30]), ds(x[30:] * scale + shift, y[30:]), KnnConfig(3, metric))
        assert a.predictions.tolist() == b.predictions.tolist()


def test_zero_variance_feature_dropped():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(12, 11))
    x[:, 4] = 7.0
    r = fit_predict(ds(x[:6], [1, 2, 3] * 2, "eleven"), ds(x[6:], [1, 2, 3] * 2, "eleven"), KnnConfig(1))
    assert r.dropped_features == (4,)


def test_eval_result_json_and_mass():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(20, 17))
    y = rng.integers(1, 4, 20)
    r = fit_predict(ds(x[:10], y[:10]), ds(x[10:], y[10:]), KnnConfig(5, "manhattan"), split_seed=7, swapped=True)
    assert r.confusion.sum() == 10 and r.accuracy == np.trace(r.confusion) / 10
    back = EvalResult.from_json(r.to_json())
    assert back.accuracy == r.accuracy and back.config == r.config and (back.confusion == r.confusion).all()
    assert back.split_seed == 7 and back.swapped


def test_evaluate_grid_equals_individual_runs():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(40, 17))
    y = rng.integers(1, 4, 40)
    tr, te = ds(x[:20], y[:20]), ds(x[20:], y[20:])
    grid = evaluate_grid(tr, te, (1, 3, 5), METRICS)
    for (k, m), r in grid.items():
        assert r.predictions.tolist() == fit_predict(tr, te, KnnConfig(k, m)).predictions.tolist()


def test_errors():
    tr = ds(np.ones((3, 17)), [1, 2, 3])
    with pytest.raises(ValidationError):
        fit_predict(tr, ds(np.ones((0, 17)), []), KnnConfig(1))
    with pytest.raises(ValidationError):
        fit_predict(tr, ds(np.ones((1, 11)), [1], "eleven"), KnnConfig(1))
    with pytest.raises(ValidationError):
        fit_predict(tr, ds(np.ones((1, 17)), [1]), KnnConfig(4))
    with pytest.raises(ValidationError):
        KnnConfig(0)
    with pytest.raises(ValidationError):
        KnnConfig(1, "minkowski")
