"""
Sweeping the parameter grid
===========================

Run the optimizer over every class scope on a small corpus and print
the accuracy tables by sample size and feature set.  The preset classes
separate easily, so a harder set with closer contrast is run as well.
"""

from speckle_lab import GridSpec, make_corpus, report_tables, run_grid
from speckle_lab.speckle_synth import SpeckleParams, preset_classes


def sweep(classes, label):
    corpus = make_corpus(classes, 8, seed=5)
    tables, reports = {}, []
    for scope in ("all_three", (1, 2), (1, 3), (2, 3)):
        spec = GridSpec(sample_sizes=(30, 60), ks=(1, 3, 5), runs=2, class_scope=scope)
        reports.append(run_grid(corpus, spec, tables=tables))
    t = report_tables(reports)
    print(f"\n{label}: best mean accuracy by sample size {t['size_order']}")
    for row in t["by_size"]:
        print(f"  {row['scope']:10s}", "  ".join(f"{row[str(s)]:.3f}" for s in t["size_order"]))
    for row in t["by_feature_set"]:
        print(f"  {row['scope']:10s} {row['feature_set']:9s}", "  ".join(f"{row[str(s)]:.3f}" for s in t["size_order"]))
    print("  flags:", t["flags"])


sweep(preset_classes(width=128, height=128), "preset")

close = [SpeckleParams(128, 128, w, r) for w, r in ((0.8, 1.5), (0.75, 1.7), (0.7, 1.9))]
sweep(close, "close classes")
