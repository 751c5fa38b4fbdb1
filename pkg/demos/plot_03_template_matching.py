"""
Finding a pilot window in another image
=======================================

A window cut from one speckle image is located in a shifted copy by
normalised cross-correlation.  The fast path (integral images plus an
exact correlation) and the direct scan agree.
"""

import time

from speckle_lab import SpeckleParams, best_match, generate_speckle

big = generate_speckle(SpeckleParams(200, 200, 0.8, 1.5, seed=7))
ref, moved = big[20:180, 20:180], big[11:171, 26:186]  # moved is ref shifted by (-6, +9)
patch = ref[50:80, 60:90]

for method in ("fast", "exhaustive"):
    t0 = time.perf_counter()
    m = best_match(moved, patch, "ncc", method)
    print(f"{method:10s} position={m.position} score={m.score:.6f}  {time.perf_counter() - t0:.3f}s")

# SSD points at the same place for a noiseless copy
print("ssd:", best_match(moved, patch, "ssd").position)
