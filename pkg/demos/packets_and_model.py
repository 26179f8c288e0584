"""Wave packets on a 64-point torus and the averaged model against the constant-field oracle.

Run: python3 demos/packets_and_model.py
"""

import numpy as np

from vfhilbert import modelop as mo
from vfhilbert import wavepackets as wp
from vfhilbert.geometry import FrequencyInterval, Lattice, VectorField
from vfhilbert.grid import GridFunction, GridSpec, inner_product

lat = Lattice(GridSpec(64), 1 / 8, 3)
print(f"lattice: {lat.tile_count()} tiles, C = {lat.C}")

# packets of four disjoint level-1 slope intervals at one point
omegas = [FrequencyInterval(1, k) for k in range(2, 6)]
packets = [wp.make_packet(lat.containing_tile(om, 0.3, 0.6), lat).samples for om in omegas]
for om, p in zip(omegas, packets):
    print(f"omega [{om.left:+.2f}, {om.right:+.2f}): norm {p.norm():.12f}")
worst = max(abs(inner_product(a, b)) for i, a in enumerate(packets) for b in packets[i + 1:])
print(f"largest cross inner product: {worst:.2e}")

# curved packets follow the field; for u = 0 they equal the flat ones
tile = lat.containing_tile(FrequencyInterval(1, 4), 0.5, 0.5)
flat = wp.make_packet(tile, lat, "alpha").samples.samples
curved = wp.make_packet(tile, lat, "curved", VectorField.constant(lat.spec, 0.0)).samples.samples
print(f"curved vs flat for u = 0: {np.max(np.abs(curved - flat)):.2e}")

# averaged model reconstruction of the directional Hilbert transform
rng = np.random.default_rng(0)
f = GridFunction(lat.spec, rng.normal(size=(64, 64)))
for u0 in (-0.7, 0.0, 0.4):
    projected, model = mo.averaged_model_reconstruction(f, u0, lat)
    oracle = mo.constant_field_oracle(f, u0, lat).samples
    approx = -1j * np.pi * projected.samples + 2j * np.pi * model.samples
    err = np.linalg.norm(approx - oracle) / np.linalg.norm(oracle)
    print(f"u0 = {u0:+.1f}: relative L2 error {err:.2e}")
