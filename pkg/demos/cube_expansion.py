"""How fast do small sets of the noisy hypercube spread out?

Computes vertex, edge and robust expansion of small sets exactly on a
6-dimensional cube and sets them beside the analytic lower bounds.
"""

from fractions import Fraction

from nnsexpansion import analytic_bounds as ab
from nnsexpansion import expansion as ex
from nnsexpansion.metric_graphs import PointMeasure, build_hypercube_ball_graph, build_noise_distribution

d = 6
n = 2**d

print(f"Hamming ball graph on {{0,1}}^{d}, radius 1")
G = build_hypercube_ball_graph(d, 1)
mu = PointMeasure.uniform(G.domain_U)
for k in (1, 2, 4, 7):
    res = ex.vertex_expansion_at(G, mu, mu, k / n)
    harper = ab.harper_neighborhood_bound(d, 1, Fraction(k, n))
    print(f"  |A| <= {k}: Phi_v = {res.value:.3f} ({res.mode}); neighborhood at least {float(harper) * n:.0f} of {n} points")

print("\nNoise graph, edge and robust expansion at delta = 2/64")
for rho in (0.3, 0.6, 0.9):
    e = build_noise_distribution(d, rho)
    pe = ex.edge_expansion_at(e, 2 / n)
    pr = ex.robust_expansion_at(e, 2 / n, 0.5)
    print(f"  rho = {rho}: Phi_e = {pe.value:.3f}, Phi_r(gamma=1/2) = {pr.value:.3f} ({pr.mode})")
    print(f"             hypercontractive self-mass cap for |A| = 2: {ab.hypercontractive_self_mass_bound(2 / n, rho):.4f}")
