import numpy as np
import pytest

from graphflow.energy import EdgeField
from graphflow.graph import BaseMeasure, Graph, build_geometric_graph


def random_geometric_graph(rng, n=10, d=2, radius=0.9):
    """Connected-ish random graph for property trials."""
    for _ in range(50):
        pts = rng.uniform(0.0, 1.0, size=(n, d))
        g = build_geometric_graph(pts, radius, ("gaussian", 1.0))
        if g.n_edges >= n - 1:
            return g
    raise RuntimeError("could not sample a usable random graph")


def random_simplex(rng, n, floor=0.0):
    w = rng.uniform(floor, 1.0, size=n)
    return w / w.sum()


def random_edge_field(rng, g: Graph, scale=1.0) -> EdgeField:
    return EdgeField(rng.uniform(-scale, scale, size=g.n_edges))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def two_point():
    """Two-point graph at positions 0, 1 with unit edge weight and mu=(p,q)."""
    g = build_geometric_graph(np.array([[0.0], [1.0]]), 1.5, ("constant", 1.0))
    mu = BaseMeasure([0.1, 0.5])
    return g, mu
