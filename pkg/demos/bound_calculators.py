"""Turning expansion into space and update-time lower bounds."""

from nnsexpansion import analytic_bounds as ab

det = ab.det_space_bound_cellsample(2**20, 64, 2, 1024)
print(f"deterministic, two probes of 64-bit words, n = 2^20: m >= {det.derived['m']}")

for phi in (4, 16, 64):
    rnd = ab.rand_space_bound(1024, 8, 1, lambda delta, gamma, phi=phi: phi)
    print(f"randomized, one probe, Phi_r = {phi}: m >= {rnd.derived['m_cell']}")

for t in (1, 2, 3):
    b = ab.dynamic_update_bound(t, 0.01, 4096)
    print(f"dynamic, t = {t}, contention 0.01, Phi_r = 4096: t_U >= {b.headline:.3f}")
