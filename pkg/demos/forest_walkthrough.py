"""One seeded instance through the decomposition: strata, trees and a few measured constants.

Run: python3 demos/forest_walkthrough.py [seed]
"""

import sys

from vfhilbert import pipeline as pl
from vfhilbert import verify as vf

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 3
cfg = pl.golden_config("n64")
res = pl.run_instance(cfg, seed)
print(f"{res.instance_id}: |E| = {res.E.measure():.4f}, |F| = {res.F.measure():.4f}")

forest = res.forest
for (delta, sigma), records in sorted(forest.strata.items(), key=lambda kv: (-kv[0][0], -kv[0][1])):
    sizes = ", ".join(f"{len(r.members)}" for r in records)
    print(f"delta = {delta:g}, sigma = {sigma:g}: {len(records)} trees with {sizes} tiles")
print(f"residual {forest.residual.size} tiles, udense = 0 on {forest.zero_udense.size} tiles")

print("structural checks:", ", ".join(k for k, ok in res.structural.items() if ok), "hold")
for key, (count, lo, hi) in sorted(vf.summarize(res.reports).items()):
    print(f"{key:24s} {count:4d} records, ratio in [{lo:.3g}, {hi:.3g}]")
