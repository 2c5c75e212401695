import numpy as np
import pytest

import graphon_epi as g


def make_suite(connection, mean_weight, spread=None, limit=None, omega_star=10.0):
    return g.KernelSuite(connection=connection, mean_weight=mean_weight,
                         spread=spread or g.WeightSpread("deterministic"),
                         limit_kernel=limit or g.ConstPair(1.0),
                         omega_star=omega_star)


def test_zero_kappa_empty_graph():
    xs = np.random.default_rng(0).random((50, 1))
    ker = make_suite(g.ConstPair(0.0), g.ConstPair(1.0, per_n=True))
    graph = g.sample_graph(xs, ker, 50, 0)
    assert graph.edge_count == 0
    assert graph.weight(0, 1) == 0.0


def test_full_kappa_complete_triangle():
    xs = np.zeros((3, 1))
    ker = make_suite(g.ConstPair(1.0), g.ConstPair(2.0))
    graph = g.sample_graph(xs, ker, 3, 0)
    assert graph.edge_count == 3
    for i in range(3):
        for j in range(3):
            assert graph.weight(i, j) == (2.0 if i != j else 0.0)


def test_er_mean_degree_binomial_band():
    # mean degree of G(N, 10/N) is 10 (N-1)/N; averaged over 20 seeds the
    # 3-sigma band is ~0.03
    n = 10_000
    ker = make_suite(g.ConstPair(10.0 / n), g.ConstPair(1.0, per_n=True))
    xs = np.random.default_rng(1).random((n, 1))
    degs = []
    for seed in range(20):
        graph = g.sample_graph(xs, ker, n, seed)
        degs.append(2.0 * graph.edge_count / n)
    expected = 10.0 * (n - 1) / n
    sigma_mean = np.sqrt(2.0 * 10.0 / n / 20)
    assert abs(np.mean(degs) - expected) <= 3 * sigma_mean


def test_dense_path_edge_count_band():
    n = 300
    p = 0.3
    ker = make_suite(g.ConstPair(p), g.ConstPair(1.0, per_n=True))
    xs = np.random.default_rng(2).random((n, 1))
    pairs = n * (n - 1) / 2
    counts = [g.sample_graph(xs, ker, n, s).edge_count for s in range(20)]
    sigma_mean = np.sqrt(pairs * p * (1 - p) / 20)
    assert abs(np.mean(counts) - pairs * p) <= 3 * sigma_mean


def test_graph_deterministic_given_seed():
    sc = g.make_scenario("product_graphon")
    xs = g.sample_characteristics(sc, 400, np.random.default_rng(3))
    g1 = g.sample_graph(xs, sc.kernels, 400, 77)
    g2 = g.sample_graph(xs, sc.kernels, 400, 77)
    assert np.array_equal(g1.indptr, g2.indptr)
    assert np.array_equal(g1.nbr, g2.nbr)
    assert np.array_equal(g1.w_in, g2.w_in)
    assert np.array_equal(g1.w_out, g2.w_out)
    g3 = g.sample_graph(xs, sc.kernels, 400, 78)
    assert not np.array_equal(g1.nbr, g3.nbr)


def test_edge_symmetry_and_direction_consistency():
    sc = g.make_scenario("two_scale")
    xs = g.sample_characteristics(sc, 200, np.random.default_rng(4))
    graph = g.sample_graph(xs, sc.kernels, 200, 5)
    for i in (0, 17, 100):
        nbr, win, wout = graph.row(i)
        for k, j in enumerate(nbr):
            # my incoming weight is stored as my neighbor's outgoing weight
            jn, jwin, jwout = graph.row(int(j))
            pos = np.searchsorted(jn, i)
            assert jn[pos] == i
            assert jwout[pos] == win[k]
            assert jwin[pos] == wout[k]


def test_uniform_spread_halfwidth_guard():
    xs = np.zeros((10, 1))
    ker = make_suite(g.ConstPair(1.0), g.ConstPair(0.5),
                     spread=g.WeightSpread("uniform", sigma=0.8))
    with pytest.raises(g.ConfigError):
        g.sample_graph(xs, ker, 10, 0)


# ---------------------------------------------------------------------------
# statistics

def brute_force_stats(xs, ker, n):
    """Independent quadratic-loop oracle for gamma_bar^N and Upsilon^N."""
    gsum, usum = 0.0, 0.0
    for i in range(n):
        for j in range(n):
            gam = float(np.asarray(ker.gamma(n, xs[i:i + 1], xs[j:j + 1]))[0])
            kap = float(np.asarray(ker.kappa(n, xs[i:i + 1], xs[j:j + 1]))[0])
            var = float(ker.spread.conditional_variance(n, np.array([gam]))[0])
            gsum += gam
            usum += kap * var
    return gsum / n ** 2, usum / n


def test_er_gamma_upsilon_closed_form():
    n = 5000
    sc = g.make_scenario("er_gamma")
    xs = g.sample_characteristics(sc, n, np.random.default_rng(6))
    graph = g.sample_graph(xs, sc.kernels, n, 6)
    stats = g.graph_stats(graph, xs, sc.kernels)
    kappa = sc.kernels.connection.value
    gamma_n = sc.kernels.mean_weight.value / n
    sigma = sc.kernels.spread.sigma
    assert stats.upsilon == n * kappa * sigma * gamma_n
    assert stats.gamma_bar == gamma_n


def test_er_uniform_upsilon_closed_form():
    n = 2000
    sc = g.make_scenario("er_uniform")
    xs = g.sample_characteristics(sc, n, np.random.default_rng(7))
    graph = g.sample_graph(xs, sc.kernels, n, 7)
    stats = g.graph_stats(graph, xs, sc.kernels)
    kappa = sc.kernels.connection.value
    sigma_n = sc.kernels.spread.sigma_at(n)
    assert stats.upsilon == n * kappa * sigma_n ** 2 / 3.0


def test_deterministic_weights_zero_upsilon():
    n = 500
    sc = g.make_scenario("product_graphon")
    xs = g.sample_characteristics(sc, n, np.random.default_rng(8))
    graph = g.sample_graph(xs, sc.kernels, n, 8)
    stats = g.graph_stats(graph, xs, sc.kernels)
    assert stats.upsilon == 0.0
    # product-form kernels: N kappa gamma equals the limit kernel identically
    assert stats.kernel_gap <= 1e-12
    assert stats.gap_exact


def test_stats_match_brute_force_oracle():
    n = 60
    sc = g.make_scenario("two_scale")
    ker = g.KernelSuite(connection=sc.kernels.connection,
                        mean_weight=sc.kernels.mean_weight,
                        spread=g.WeightSpread("gamma", sigma=0.2),
                        limit_kernel=sc.kernels.limit_kernel,
                        omega_star=sc.kernels.omega_star)
    xs = g.sample_characteristics(sc, n, np.random.default_rng(9))
    graph = g.sample_graph(xs, ker, n, 9)
    gb_ref, up_ref = brute_force_stats(xs, ker, n)
    stats = g.graph_stats(graph, xs, ker)
    assert abs(stats.gamma_bar - gb_ref) <= 1e-12 * max(1.0, abs(gb_ref))
    assert abs(stats.upsilon - up_ref) <= 1e-12 * max(1.0, abs(up_ref))


def test_realized_weight_means_stratified():
    # two-scale kernel with gamma-noise weights: realized means per stratum
    # stay within 3 sigma of the kernel means
    n = 600
    sc = g.make_scenario("two_scale")
    ker = g.KernelSuite(connection=sc.kernels.connection,
                        mean_weight=sc.kernels.mean_weight,
                        spread=g.WeightSpread("gamma", sigma=0.05),
                        limit_kernel=sc.kernels.limit_kernel,
                        omega_star=sc.kernels.omega_star)
    xs = g.sample_characteristics(sc, n, np.random.default_rng(10))
    graph = g.sample_graph(xs, ker, n, 11)
    rows = np.repeat(np.arange(n), graph.degrees)
    d = np.abs(xs[rows, 0] - xs[graph.nbr, 0])
    d = np.minimum(d, 1.0 - d)
    local = d <= 0.1
    gmeans = np.asarray(ker.gamma(n, xs[rows], xs[graph.nbr]))
    sigma = ker.spread.sigma
    for mask in (local, ~local):
        k = mask.sum()
        assert k > 50
        mean_expected = gmeans[mask].mean()
        sd = np.sqrt(np.mean(sigma * gmeans[mask]) / k)
        assert abs(graph.w_in[mask].mean() - mean_expected) <= 3 * sd


def test_row_force_bound():
    xs = np.zeros((4, 1))
    ker = make_suite(g.ConstPair(1.0), g.ConstPair(0.0))
    graph = g.sample_graph(xs, ker, 4, 0)
    # overwrite weights deterministically for a hand-computed bound
    graph.w_in[:] = 2.0
    lam_star = 1.5
    assert g.row_force_bound(graph, lam_star, 0, np.zeros(4, dtype=bool)) == 0.0
    inf1 = np.zeros(4, dtype=bool)
    inf1[1] = True
    assert g.row_force_bound(graph, lam_star, 0, inf1) == pytest.approx(3.0)
    inf2 = inf1.copy()
    inf2[2] = True
    assert g.row_force_bound(graph, lam_star, 0, inf2) == pytest.approx(6.0)
    assert g.row_force_bound(graph, lam_star, 0, np.array([1, 2])) == pytest.approx(6.0)


def test_dump_load_roundtrip(tmp_path):
    sc = g.make_scenario("er_gamma")
    xs = g.sample_characteristics(sc, 300, np.random.default_rng(12))
    graph = g.sample_graph(xs, sc.kernels, 300, 13)
    path = tmp_path / "graph.bin"
    graph.dump(path)
    back = g.WeightedContactGraph.load(path)
    assert back.n == graph.n
    assert np.array_equal(back.indptr, graph.indptr)
    assert np.array_equal(back.nbr, graph.nbr)
    assert np.array_equal(back.w_in, graph.w_in)
    assert np.array_equal(back.w_out, graph.w_out)
    with pytest.raises(g.ConfigError):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"NOTAGRPH" + b"\x00" * 24)
        g.WeightedContactGraph.load(bad)
