import itertools
import math

import numpy as np
import pytest

from graphflow.graph import (
    BaseMeasure,
    DuplicatePointsError,
    build_geometric_graph,
    check_assumptions,
    from_json_dict,
    graph_from_edges,
    graph_distance_matrix,
    to_json_dict,
)


def test_two_points_within_radius_gaussian_weight():
    g = build_geometric_graph(np.array([[0.0], [0.5]]), 0.7, ("gaussian", 6.0))
    assert g.n_edges == 1
    assert g.eta(0, 1) == pytest.approx(math.exp(-6.0 * 0.25))
    assert g.eta(1, 0) == g.eta(0, 1)


def test_two_points_beyond_radius():
    g = build_geometric_graph(np.array([[0.0], [1.0]]), 0.7, ("gaussian", 6.0))
    assert g.n_edges == 0


def test_three_collinear_points_chain():
    pts = np.array([[0.0], [0.3], [0.6]])
    g = build_geometric_graph(pts, 0.35, ("constant", 1.0))
    assert g.n_edges == 2
    assert g.eta(0, 2) == 0.0


def test_duplicate_points_rejected():
    with pytest.raises(DuplicatePointsError):
        build_geometric_graph(np.array([[0.2, 0.1], [0.2, 0.1], [0.9, 0.9]]), 0.5)


def test_paper_local_kernel_open_ball():
    # chi_{B_eps} is the open ball: a pair at distance exactly eps gets no edge.
    pts = np.array([[0.0], [0.2], [0.35]])
    g = build_geometric_graph(pts, 0.2, "paper_local")
    assert g.n_edges == 1  # only the (1, 2) pair at distance 0.15
    # d=1: 2(2+1)/eps^2 / (2 eps) = 3 / eps^3
    assert g.eta(1, 2) == pytest.approx(3.0 / 0.2**3)


def test_distance_chain():
    g = graph_from_edges([[0.0], [1.0], [2.0]], [(0, 1, 1.0), (1, 2, 1.0)])
    dist = graph_distance_matrix(g)
    assert dist[0, 2] == pytest.approx(2.0)
    assert dist[0, 0] == 0.0


def test_distance_disconnected_inf():
    g = graph_from_edges([[0.0], [1.0], [5.0]], [(0, 1, 1.0)])
    dist = graph_distance_matrix(g)
    assert np.isinf(dist[0, 2])


def test_distance_triangle_heavy_edge():
    # Costs {1, 1, 3}: oracle = exhaustive enumeration of simple paths.
    g = graph_from_edges(
        [[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]],
        [(0, 1, 1.0 / 3.0), (0, 2, 1.0), (1, 2, 1.0)],
    )
    costs = {(0, 1): 3.0, (0, 2): 1.0, (1, 2): 1.0}

    def oracle(a, b):
        best = math.inf
        for perm in itertools.permutations([v for v in range(3) if v not in (a, b)]):
            for mids in [(), perm[:1], perm]:
                nodes = (a, *mids, b)
                cost = 0.0
                ok = True
                for u, v in zip(nodes[:-1], nodes[1:]):
                    key = (min(u, v), max(u, v))
                    if key not in costs:
                        ok = False
                        break
                    cost += costs[key]
                if ok:
                    best = min(best, cost)
        return best

    dist = graph_distance_matrix(g)
    assert oracle(0, 1) == 2.0
    for a in range(3):
        for b in range(3):
            if a != b:
                assert dist[a, b] == pytest.approx(oracle(a, b))


def test_distance_triangle_inequality_exhaustive(rng):
    from conftest import random_geometric_graph

    g = random_geometric_graph(rng, n=40, radius=0.5)
    dist = graph_distance_matrix(g)
    finite = np.isfinite(dist)
    for a in range(g.n):
        for b in range(g.n):
            if not finite[a, b]:
                continue
            through = dist[a, :] + dist[:, b]
            assert dist[a, b] <= np.nanmin(np.where(np.isfinite(through), through, np.nan)) + 1e-12


def test_assumptions_two_point():
    # Direct evaluation of the finite sum: c_eta = alpha * max(p, q) at |x-y| = 1.
    alpha, p, q = 0.7, 0.3, 0.6
    g = graph_from_edges([[0.0], [1.0]], [(0, 1, alpha)])
    mu = BaseMeasure([p, q])
    report = check_assumptions(g, mu)

    def oracle():
        best = 0.0
        for x in range(2):
            total = 0.0
            for y in range(2):
                if x == y:
                    continue
                r = abs(g.positions[x, 0] - g.positions[y, 0])
                total += max(r**2, r**4) * g.eta(x, y) * mu.weights[y]
            best = max(best, total)
        return best

    assert report.c_eta == pytest.approx(oracle())
    assert report.c_eta == pytest.approx(alpha * max(p, q))
    assert report.c_eta_prime == pytest.approx(alpha)


def test_assumptions_no_edges():
    g = graph_from_edges([[0.0], [5.0]], [])
    report = check_assumptions(g, BaseMeasure.uniform(2))
    assert report.c_eta == 0.0
    assert report.c_eta_prime == 0.0


def test_assumptions_local_kernel_matches_analytic_integral():
    # 1D grid with localized weights and Lebesgue-like mu: the moment sum is a
    # Riemann sum of int_{|r|<eps} r^2 * 3/eps^3 dr = 2 at interior vertices.
    n = 2000
    h = 1.0 / n
    x = h * (np.arange(n) + 0.5)
    eps = 0.1
    g = build_geometric_graph(x[:, None], eps, "paper_local")
    mu = BaseMeasure(np.full(n, h))
    report = check_assumptions(g, mu)
    assert report.c_eta == pytest.approx(2.0, rel=2e-2)


def test_assumptions_local_integral_monotone():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, size=(50, 2))
    g = build_geometric_graph(pts, 0.6, ("gaussian", 2.0))
    report = check_assumptions(g, BaseMeasure.uniform(50))
    eps_sorted = sorted(report.local_integral)
    vals = [report.local_integral[e] for e in eps_sorted]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


def test_assumptions_monotone_in_edges():
    pos = [[0.0], [1.0], [2.0]]
    g1 = graph_from_edges(pos, [(0, 1, 1.0)])
    g2 = graph_from_edges(pos, [(0, 1, 1.0), (1, 2, 1.0)])
    mu = BaseMeasure.uniform(3)
    assert check_assumptions(g2, mu).c_eta >= check_assumptions(g1, mu).c_eta


def test_eta_symmetric_query_any_constructor(rng):
    from conftest import random_geometric_graph

    g = random_geometric_graph(rng, n=15)
    for i in range(g.n):
        for j in range(g.n):
            if i != j:
                assert g.eta(i, j) == g.eta(j, i)


def test_json_round_trip():
    g = graph_from_edges([[0.0, 1.0], [1.0, 0.0]], [(0, 1, 2.5)])
    mu = BaseMeasure([0.4, 0.6])
    doc = to_json_dict(g, mu)
    assert doc["edges"] == [[0, 1, 2.5]]
    g2, mu2 = from_json_dict(doc)
    np.testing.assert_allclose(g2.positions, g.positions)
    np.testing.assert_allclose(mu2.weights, mu.weights)
