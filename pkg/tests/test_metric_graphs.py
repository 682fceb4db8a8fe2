import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from nnsexpansion.metric_graphs import (
    DenseEdgeDistribution,
    ExplicitGraph,
    HammingWithin,
    NeverCollide,
    PointMeasure,
    VertexDomain,
    build_hypercube_ball_graph,
    build_linfty_measure,
    build_noise_distribution,
    check_strong_independence,
    check_weak_independence,
    conditional_neighbor_measure,
    equality_collision,
    graph_edge_distribution,
    hamming_ball,
    linfty_pi,
    marginals,
)
from nnsexpansion._util import rng_for


class TestDomains:
    def test_sizes(self):
        assert VertexDomain.hypercube(5).size == 32
        assert VertexDomain.grid(2, 3).size == 27

    def test_explicit_cap(self):
        with pytest.raises(ValueError):
            VertexDomain.explicit(2**24 + 1)

    def test_grid_round_trip(self):
        dom = VertexDomain.grid(3, 4)
        codes = dom.vertices()
        np.testing.assert_array_equal(dom.encode(dom.decode(codes)), codes)

    def test_measure_rejects_negative(self):
        with pytest.raises(ValueError):
            PointMeasure(VertexDomain.explicit(2), [0.5, -0.1])


class TestHammingBallGraph:
    def test_r0_is_identity(self):
        G = build_hypercube_ball_graph(1, 0)
        np.testing.assert_array_equal(G.adjacency_matrix(), np.eye(2, dtype=bool))

    def test_radius_one_neighborhood(self):
        G = build_hypercube_ball_graph(4, 1)
        assert G.neighborhood([0]).sum() == 5

    def test_full_radius(self):
        G = build_hypercube_ball_graph(4, 4)
        assert G.adjacency_matrix().all()

    def test_dimension_cap(self):
        with pytest.raises(ValueError):
            build_hypercube_ball_graph(31, 1)

    def test_symmetric_with_self_loops(self):
        adj = build_hypercube_ball_graph(5, 2).adjacency_matrix()
        np.testing.assert_array_equal(adj, adj.T)
        assert adj.diagonal().all()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 2**32 - 1))
    def test_dilation_matches_adjacency(self, d, r, seed):
        r = min(r, d)
        G = build_hypercube_ball_graph(d, r)
        mask = rng_for(seed).random(2**d) < 0.2
        expected = G.adjacency_matrix()[:, mask].any(axis=1)
        np.testing.assert_array_equal(G.neighborhood(mask), expected)

    def test_ball_prefix(self):
        ball = hamming_ball(12, 64)
        weights = np.array([bin(v).count("1") for v in np.flatnonzero(ball)])
        assert (weights <= 2).all() and (weights == 2).sum() == 51


class TestNoiseDistribution:
    def test_one_bit(self):
        e = build_noise_distribution(1, 0.5)
        np.testing.assert_allclose(e.dense(), [[3 / 8, 1 / 8], [1 / 8, 3 / 8]])

    def test_noiseless(self):
        np.testing.assert_allclose(build_noise_distribution(1, 1.0).dense(), np.eye(2) / 2)

    def test_independent(self):
        np.testing.assert_allclose(build_noise_distribution(2, 0.0).dense(), np.full((4, 4), 1 / 16))

    @pytest.mark.parametrize("rho", [-0.1, 1.5])
    def test_rho_range(self, rho):
        with pytest.raises(ValueError):
            build_noise_distribution(3, rho)

    @pytest.mark.parametrize("d", [1, 3, 6, 12])
    def test_dense_matches_kernel(self, d):
        e = build_noise_distribution(d, 0.3)
        x = rng_for(d).integers(0, 2**d, size=200)
        y = rng_for(d, 1).integers(0, 2**d, size=200)
        np.testing.assert_allclose(e.dense()[x, y], e.pointwise(x, y), rtol=0, atol=1e-12)

    def test_dense_matches_oracle(self):
        np.testing.assert_allclose(build_noise_distribution(3, 0.4).dense(), oracles.noise_matrix(3, 0.4), atol=1e-15)

    @pytest.mark.parametrize("rho", [0.0, 0.25, 0.9, 1.0])
    def test_fwht_edge_mass(self, rho):
        e = build_noise_distribution(6, rho)
        A = rng_for(3).random(64) < 0.3
        np.testing.assert_allclose(e.edge_mass_into(A), e.dense()[:, A].sum(axis=1), atol=1e-15)

    def test_conditional_masses(self):
        e = build_noise_distribution(5, 0.6)
        labels = rng_for(4).integers(-1, 4, size=32)
        M = e.conditional_masses(labels, 4)
        cond = e.dense() * 32
        for i in range(4):
            np.testing.assert_allclose(M[:, i], cond[:, labels == i].sum(axis=1), atol=1e-12)

    @pytest.mark.parametrize("d", [4, 8])
    def test_empirical_marginal(self, d):
        e = build_noise_distribution(d, 0.5)
        rng = rng_for(11)
        xs = e.sample_mu(rng, 100_000)
        ys = e.sample_conditional(xs, rng)
        p = 1 / 2**d
        se = math.sqrt(p * (1 - p) / 100_000)
        for sample in (xs, ys):
            freq = np.bincount(sample, minlength=2**d) / 100_000
            assert np.abs(freq - p).max() <= 3 * se * 1.35  # max of 2^d buckets

    def test_flip_distribution(self):
        e = build_noise_distribution(8, 0.5)
        rng = rng_for(2)
        xs = e.sample_mu(rng, 20_000)
        dist = np.array([bin(v).count("1") for v in xs ^ e.sample_conditional(xs, rng)])
        assert abs(dist.mean() - 2.0) < 3 * math.sqrt(8 * 0.25 * 0.75 / 20_000)

    def test_sampling_reproducible(self):
        e = build_noise_distribution(10, 0.5)
        a = e.sample_conditional(e.sample_mu(rng_for(5), 50), rng_for(6))
        b = e.sample_conditional(e.sample_mu(rng_for(5), 50), rng_for(6))
        np.testing.assert_array_equal(a, b)


class TestMarginalsAndConditionals:
    def test_noise_marginals(self):
        mu, nu = marginals(build_noise_distribution(1, 0.5))
        np.testing.assert_allclose(mu.values, [0.5, 0.5])
        np.testing.assert_allclose(nu.values, [0.5, 0.5])

    def test_dense_identity(self):
        mu, nu = marginals(DenseEdgeDistribution(np.eye(2) / 2))
        np.testing.assert_allclose(mu.values, [0.5, 0.5])
        assert mu.is_probability() and nu.is_probability()

    def test_dense_validation(self):
        with pytest.raises(ValueError):
            DenseEdgeDistribution([[0.5, 0.6]])
        with pytest.raises(ValueError):
            DenseEdgeDistribution([[1.2, -0.2]])

    def test_conditional_examples(self):
        e = build_noise_distribution(1, 0.5)
        np.testing.assert_allclose(conditional_neighbor_measure(e, 0).values, [0.75, 0.25])
        point = conditional_neighbor_measure(build_noise_distribution(3, 1.0), 5).values
        assert point[5] == 1.0 and point.sum() == 1.0
        np.testing.assert_allclose(conditional_neighbor_measure(build_noise_distribution(2, 0.0), 3).values, 0.25)

    def test_zero_marginal(self):
        e = DenseEdgeDistribution([[0.5, 0.5], [0.0, 0.0]])
        with pytest.raises(ValueError):
            conditional_neighbor_measure(e, 1)

    def test_dense_sampling_matches_matrix(self):
        E = np.array([[0.1, 0.2], [0.3, 0.4]])
        e = DenseEdgeDistribution(E)
        rng = rng_for(9)
        xs = e.sample_mu(rng, 40_000)
        ys = e.sample_conditional(xs, rng)
        emp = np.zeros((2, 2))
        np.add.at(emp, (xs, ys), 1 / 40_000)
        np.testing.assert_allclose(emp, E, atol=0.01)


class TestLinftyMeasure:
    def test_pi_values(self):
        np.testing.assert_allclose(linfty_pi(2, 1.0), [0.6875, 0.25, 0.0625])

    def test_product(self):
        mu = build_linfty_measure(2, 2, 1.0)
        assert mu.values[0] == pytest.approx(0.47265625, abs=1e-15)
        assert mu.total == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("side,d,rho", [(2, 3, 1.0), (3, 2, 0.75), (4, 2, 2.0)])
    def test_factorizes(self, side, d, rho):
        pi = linfty_pi(side, rho)
        mu = build_linfty_measure(side, d, rho)
        coords = mu.domain.decode(mu.domain.vertices())
        np.testing.assert_allclose(mu.values, np.prod(pi[coords], axis=1))
        assert mu.total == pytest.approx(1.0, abs=1e-12)

    def test_nonpositive_head(self):
        with pytest.raises(ValueError):
            linfty_pi(3, 0.5)


class TestStrongIndependence:
    def test_r0(self):
        G = build_hypercube_ball_graph(20, 0)
        res = check_strong_independence(G, PointMeasure.uniform(G.domain_U), n=8)
        assert res.estimate == 2.0**-20 and res.verdict

    def test_full_radius(self):
        G = build_hypercube_ball_graph(6, 6)
        res = check_strong_independence(G, PointMeasure.uniform(G.domain_U), n=1)
        assert res.estimate == 1.0 and not res.verdict

    def test_third_radius_exact_value(self):
        # two radius-8 balls meet iff the centers are within 16
        G = build_hypercube_ball_graph(24, 8)
        res = check_strong_independence(G, PointMeasure.uniform(G.domain_U), n=4, trials=10**5, seed=1)
        assert res.estimate == pytest.approx(float(oracles.binomial_half_cdf(24, 16)))
        assert res.mode == "exact"
        assert not res.verdict

    def test_explicit_exact_matches_oracle(self):
        adj = rng_for(1).random((10, 12)) < 0.2
        adj[np.arange(10), np.arange(10)] = True
        G = ExplicitGraph(adj)
        mu = PointMeasure.uniform(G.domain_U)
        res = check_strong_independence(G, mu, n=2)
        brute = sum(
            0.01 for x in range(10) for z in range(10) if (adj[x] & adj[z]).any()
        )
        assert res.estimate == pytest.approx(brute)

    def test_monte_carlo_brackets_exact(self):
        G = build_hypercube_ball_graph(13, 3)
        vals = np.full(2**13, 1.0)
        vals[0] = 1.0 + 1e-9  # not uniform: bypasses the closed form
        mu = PointMeasure(G.domain_U, vals / vals.sum())
        res = check_strong_independence(G, mu, n=1, trials=20_000, seed=3)
        assert res.mode == "monte-carlo"
        exact = float(oracles.binomial_half_cdf(13, 6))
        assert abs(res.estimate - exact) <= res.half_width


class TestWeakIndependence:
    def test_independent_equality(self):
        e = build_noise_distribution(8, 0.0)
        res = check_weak_independence(e, equality_collision(), n=1, gamma=1.0)
        assert res.estimate == pytest.approx(2.0**-8)

    def test_quarter_threshold_exact(self):
        e = build_noise_distribution(20, 0.5)
        res = check_weak_independence(e, HammingWithin(5), n=16, gamma=0.01, trials=10**5, seed=0)
        assert res.estimate == pytest.approx(21700 / 2**20)
        assert not res.verdict  # 0.0207 > 0.01/16

    def test_never(self):
        res = check_weak_independence(build_noise_distribution(4, 0.5), NeverCollide(), n=10, gamma=0.1)
        assert res.estimate == 0.0 and res.verdict

    def test_dense_path_matches_brute_force(self):
        E = rng_for(7).random((6, 6))
        e = DenseEdgeDistribution(E / E.sum())
        collide = lambda y, z: (np.asarray(y) + np.asarray(z)) % 3 == 0
        res = check_weak_independence(e, collide, n=1, gamma=1.0)
        M = E / E.sum()
        mu, nu = M.sum(axis=1), M.sum(axis=0)
        brute = sum(nu[y] * mu[z] for y in range(6) for z in range(6) if (y + z) % 3 == 0)
        assert res.estimate == pytest.approx(brute)

    def test_monte_carlo_agrees(self):
        res = check_weak_independence(build_noise_distribution(13, 0.5), lambda y, z: np.asarray(y) == np.asarray(z), n=1, gamma=1.0, trials=20_000, seed=1)
        assert res.mode == "monte-carlo"
        assert abs(res.estimate - 2.0**-13) <= res.half_width

    def test_graph_edge_distribution(self):
        e = graph_edge_distribution(build_hypercube_ball_graph(4, 1))
        mu, nu = marginals(e)
        np.testing.assert_allclose(mu.values, 1 / 16)
        assert e.dense().sum() == pytest.approx(1.0)
