"""
Histogram valleys, templates and sample windows
===============================================

Build a four-band test image, find the valleys in its histogram, turn
them into threshold and k-means templates, then draw windows per region.
"""

import numpy as np

from speckle_lab import detect_valleys, extract_samples, histogram, segment

rng = np.random.default_rng(0)
bands = [30, 90, 150, 210]
img = np.concatenate([rng.normal(m, 8, (60, 240)) for m in bands])
img = np.clip(np.round(img), 0, 255).astype(np.uint8)

report = detect_valleys(histogram(img))
print("peaks:", report.peaks)
print("valleys:", report.valleys)

thr = segment(img, "threshold")
km = segment(img, "kmeans", seed=0)
print("threshold template K =", thr.K, "cuts", thr.thresholds)
print("k-means template K =", km.K, "centres", [round(c, 1) for c in km.centers])
print("label agreement:", float(np.mean(thr.labels == km.labels)))

###############################################################################
# Each window must sit at least 80% inside its region.

for w in extract_samples(img, thr, 30, per_region=2, seed=1, source_id="bands"):
    print(f"region {w.region_label}  origin {w.origin}  mean {w.pixels.mean():6.1f}")
