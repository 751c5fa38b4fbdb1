import csv
import json

import numpy as np
import pytest

from speckle_lab.errors import InsufficientImagesError, ValidationError
from speckle_lab.optimizer import (
    ConfigResult,
    GridSpec,
    OptimizationReport,
    collect_windows,
    derive_seed,
    report_tables,
    run_grid,
    scope_name,
    select_best,
    write_tables,
)
from speckle_lab.speckle_synth import LabeledImage, make_corpus, preset_classes

SMALL = dict(sample_sizes=(30,), feature_sets=("eleven", "seventeen"), ks=(1, 3), metrics=("euclidean", "cosine"))


@pytest.fixture(scope="module")
def corpus():
    return make_corpus(preset_classes(width=72, height=72), 4, seed=5)


def test_counting(corpus):
    spec = GridSpec(sample_sizes=(30,), feature_sets=("seventeen",), ks=(1,), metrics=("euclidean",), runs=3)
    rep = run_grid(corpus, spec)
    assert len(rep.results) == 1
    # twelve images: one base pair plus four extra, each split and swap
    assert rep.notes["tests_per_run"] == 2 * (1 + 4)
    assert len(rep.results[0].evals) == 3 * 10
    assert {(e["run"], e["pair"], e["swapped"]) for e in rep.results[0].evals} == {
        (r, p, s) for r in range(3) for p in range(5) for s in (False, True)
    }
    assert rep.notes["pilot_images"] == {"1": "c1_000", "2": "c2_000", "3": "c3_000"}


def test_pairwise_scope_counts(corpus):
    spec = GridSpec(**SMALL, class_scope=(3, 1), runs=1)
    rep = run_grid(corpus, spec)
    assert rep.scope == "pair_1_3" and rep.notes["images_in_scope"] == 8
    assert rep.notes["tests_per_run"] == 2


def test_best_config_is_argmax(corpus):
    rep = run_grid(corpus, GridSpec(**SMALL, runs=2))
    best = rep.result_for(tuple(rep.best_config.values()))
    assert all(best.mean_accuracy >= r.mean_accuracy for r in rep.results)
    for r in rep.results:
        accs = [e["accuracy"] for e in r.evals]
        assert r.mean_accuracy == np.mean(accs) and r.max_accuracy == max(accs)


def duplicate_corpus():
    # every class is one image repeated: matching windows are identical, so k=1 is perfect
    base = {im.label: im.pixels for im in make_corpus(preset_classes(width=64, height=64), 4, seed=1)}
    return [LabeledImage(f"c{c}_{j:03d}", c, base[c]) for c in (1, 2, 3) for j in range(4)]


def test_dominance_fixture():
    rep = run_grid(duplicate_corpus(), GridSpec(**SMALL, runs=1))
    best = rep.result_for(tuple(rep.best_config.values()))
    assert best.mean_accuracy == 1.0
    assert rep.best_config == {"sample_size": 30, "feature_set": "eleven", "k": 1, "metric": "cosine"}


def test_select_best_tie_chain():
    def cr(size, fs, k, m, mean, mx):
        return ConfigResult({"sample_size": size, "feature_set": fs, "k": k, "metric": m}, mean, mx)
    rs = [cr(30, "eleven", 1, "euclidean", 0.8, 0.9), cr(60, "eleven", 1, "euclidean", 0.9, 0.95),
          cr(90, "seventeen", 3, "cosine", 0.9, 1.0), cr(30, "seventeen", 1, "manhattan", 0.9, 1.0)]
    assert select_best(rs).key == (30, "seventeen", 1, "manhattan")
    rs.append(ConfigResult(rs[0].config, error="boom"))
    assert select_best([rs[-1]]) is None


@pytest.mark.parametrize("field", ["sample_sizes", "feature_sets", "ks", "metrics"])
def test_empty_dimension_rejected(field):
    with pytest.raises(ValidationError, match=field):
        GridSpec(**{field: ()})


@pytest.mark.parametrize("kw", [dict(sample_sizes=(45,)), dict(ks=(0,)), dict(runs=0), dict(metrics=("l3",)),
                                dict(class_scope=(1, 1)), dict(class_scope="pairs"), dict(feature_sets=("nine",))])
def test_grid_validation(kw):
    with pytest.raises(ValidationError):
        GridSpec(**kw)


def test_grid_json_round_trip():
    spec = GridSpec(**SMALL, class_scope=(1, 2), base_seed=7)
    assert GridSpec.from_json(json.loads(json.dumps(spec.to_json()))) == spec
    with pytest.raises(ValidationError):
        GridSpec.from_json({"sizes": [30]})


def test_report_round_trip_bit_exact(corpus, tmp_path):
    rep = run_grid(corpus, GridSpec(**SMALL, runs=1))
    rep.dump(tmp_path / "r.json")
    back = OptimizationReport.load(tmp_path / "r.json")
    assert back.to_json() == rep.to_json()
    for a, b in zip(rep.results, back.results):
        assert [e["accuracy"] for e in a.evals] == [e["accuracy"] for e in b.evals]
        assert a.mean_accuracy.hex() == b.mean_accuracy.hex()


def test_determinism_and_workers(corpus):
    spec = GridSpec(sample_sizes=(30, 60), feature_sets=("eleven",), ks=(1,), metrics=("euclidean",), runs=1)
    a = run_grid(corpus, spec).to_json()
    assert run_grid(corpus, spec).to_json() == a
    assert run_grid(corpus, spec, workers=2).to_json() == a


def test_scope_does_not_change_class_windows(corpus):
    full = collect_windows(corpus, 30, (1, 2, 3))
    pair = collect_windows(corpus, 30, (2, 3))
    pick = [(c, w.source_id, w.origin) for c, w in full if c in (2, 3)]
    assert pick == [(c, w.source_id, w.origin) for c, w in pair]


def test_minimum_enforced():
    small = make_corpus(preset_classes(width=40, height=40), 4, seed=0)
    three = [im for im in small if im.label in (1, 2)][:7]
    with pytest.raises(InsufficientImagesError):
        run_grid(three, GridSpec(**SMALL, class_scope=(1, 2)))


def test_failed_size_reported_not_fatal():
    tiny = make_corpus(preset_classes(width=40, height=40), 4, seed=0)
    rep = run_grid(tiny, GridSpec(sample_sizes=(30, 60), feature_sets=("eleven",), ks=(1,), metrics=("euclidean",),
                                  runs=1))
    assert any("sample_size=60" in e for e in rep.errors)
    assert rep.result_for((60, "eleven", 1, "euclidean")).error
    assert rep.result_for((30, "eleven", 1, "euclidean")).error is None
    assert rep.best_config["sample_size"] == 30


def test_tables_layout(corpus, tmp_path):
    spec = GridSpec(sample_sizes=(30, 60), feature_sets=("eleven", "seventeen"), ks=(1,), metrics=("euclidean",),
                    runs=1)
    reps = [run_grid(corpus, spec), run_grid(corpus, GridSpec(**{**spec.to_json(), "class_scope": [1, 2]}))]
    t = report_tables(reps)
    assert t["size_order"] == [60, 30]
    assert [r["scope"] for r in t["by_size"]] == ["all_three", "pair_1_2"]
    files = write_tables(t, tmp_path)
    with open(files[0]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["scope", "60", "30"]
    full = GridSpec()
    assert report_tables([OptimizationReport(full, [], None)])["size_order"] == [120, 90, 60, 30]


def test_seed_derivation():
    assert derive_seed(0, 3, 30, 0, 0) == derive_seed(0, 3, 30, 0, 0)
    assert len({derive_seed(0, 3, 30, r, p) for r in range(3) for p in range(5)}) == 15
    assert scope_name((2, 1)) == "pair_1_2"
