"""A one-probe structure for graphical neighbor search on the cube.

Picks the cell count m from the load fixed point, stores the dataset in
translated copies of a Hamming ball, and simulates noisy queries.
"""

import numpy as np

from nnsexpansion import gns

d, r, n = 12, 3, 64
fp = gns.fixed_point_m(d, r, n)
print("scan of m (m, Phi_r, expected load):")
for m, phi, load in fp.scan:
    print(f"  {m:6d} {phi:10.3f} {load:8.3f}")
print(f"chosen m = {fp.m}, converged = {fp.converged}")

e = gns.noise_for_radius(d, r)
inst = gns.sample_instance(e, n, seed=1)
ds = gns.build_translation_structure(inst, fp.base, fp.m, seed=1)
ys, idx = gns.sample_queries(inst, e, 2000, seed=1)
out = ds.answer_all(ys)
print(f"success rate {np.mean(out.answers == inst.bits[idx]):.3f}")
print(f"queries with a unique stored match {np.mean(out.matches == 1):.3f}")
print(f"cells that overflowed the cap {np.mean(ds.overflow > 0):.3f}")
