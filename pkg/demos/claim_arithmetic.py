"""The dyadic summation behind the basic claim: the ratio stays below 4 for any measures.

Run: python3 demos/claim_arithmetic.py
"""

import numpy as np

from vfhilbert import verify as vf

rng = np.random.default_rng(1)
ratios = [vf.claim_basic_ratio(d, e, f) for d, e, f in rng.uniform(1e-6, 1, size=(1000, 3))]
print(f"1000 random (delta, |E|, |F|): max ratio {max(ratios):.4f}, bound {vf.CLAIM_BASIC_BOUND}")
print(f"delta = |E| = |F| = 1: {vf.claim_basic_ratio(1.0, 1.0, 1.0):.6f}")
