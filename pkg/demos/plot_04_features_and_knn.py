"""
Texture features and a k-NN split
=================================

Three speckle classes, windows at their best matches, seventeen
features each, a balanced split and its swap.
"""

from speckle_lab import KnnConfig, fit_predict, make_corpus
from speckle_lab.dataset import split, swap
from speckle_lab.optimizer import build_sample_table
from speckle_lab.speckle_synth import preset_classes

corpus = make_corpus(preset_classes(width=128, height=128), 6, seed=3)
table, regions = build_sample_table(corpus, 30)
print(len(table), "rows;", ", ".join(table.feature_names))

sp = split(table, seed=11)
for part in (sp, swap(sp)):
    for fs in ("eleven", "seventeen"):
        r = fit_predict(part.train.with_set(fs), part.test.with_set(fs), KnnConfig(3, "euclidean"))
        print(f"swapped={part.swapped!s:5} {fs:9s} accuracy={r.accuracy:.3f}")
        print(r.confusion)
