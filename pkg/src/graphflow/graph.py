"""Finite weighted graphs with base measures.

A graph here is a set of vertex positions in R^d together with a sparse,
symmetric, strictly positive edge-weight function eta.  Each unordered pair
is stored once (src < dst) and mirrored logically, since every quantity
built on top of the graph (fluxes, velocities, actions) is either symmetric
or antisymmetric in the edge orientation.

The base measure mu assigns a non-negative weight to every vertex.  For a
point cloud of n samples the canonical choice is 1/n per vertex, which makes
all dynamical formulas uniform in mu.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_array
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import cKDTree


class DuplicatePointsError(ValueError):
    """Two vertex positions coincide exactly; edge weights are undefined there."""


@dataclass
class Graph:
    """Undirected weighted graph over embedded points.

    positions: (n, d) array of vertex coordinates.
    edge_src, edge_dst: (E,) int arrays with edge_src[e] < edge_dst[e].
    edge_eta: (E,) strictly positive weights, one per unordered pair.
    """

    positions: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_eta: np.ndarray
    _eta_lookup: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim == 1:
            self.positions = self.positions[:, None]
        self.edge_src = np.asarray(self.edge_src, dtype=np.intp)
        self.edge_dst = np.asarray(self.edge_dst, dtype=np.intp)
        self.edge_eta = np.asarray(self.edge_eta, dtype=float)
        if np.any(self.edge_src >= self.edge_dst):
            raise ValueError("edges must be stored with src < dst")
        if np.any(self.edge_eta <= 0):
            raise ValueError("stored edge weights must be strictly positive")
        pairs = set(zip(self.edge_src.tolist(), self.edge_dst.tolist()))
        if len(pairs) != len(self.edge_src):
            raise ValueError("duplicate edge pairs in input")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def n_edges(self) -> int:
        return len(self.edge_eta)

    def eta(self, i: int, j: int) -> float:
        """Weight of the (i, j) pair; orientation-independent, 0 if absent."""
        if self._eta_lookup is None:
            lookup = {}
            for s, t, w in zip(self.edge_src, self.edge_dst, self.edge_eta):
                lookup[(int(s), int(t))] = float(w)
            self._eta_lookup = lookup
        a, b = (i, j) if i < j else (j, i)
        return self._eta_lookup.get((a, b), 0.0)

    def edge_lengths(self) -> np.ndarray:
        diff = self.positions[self.edge_src] - self.positions[self.edge_dst]
        return np.linalg.norm(diff, axis=1)

    def adjacency(self, values: np.ndarray | None = None) -> csr_array:
        """Symmetric sparse matrix carrying `values` (default eta) per pair."""
        vals = self.edge_eta if values is None else np.asarray(values, dtype=float)
        rows = np.concatenate([self.edge_src, self.edge_dst])
        cols = np.concatenate([self.edge_dst, self.edge_src])
        data = np.concatenate([vals, vals])
        return csr_array((data, (rows, cols)), shape=(self.n, self.n))

    def connected_component_labels(self) -> np.ndarray:
        if self.n_edges == 0:
            return np.arange(self.n)
        _, labels = connected_components(self.adjacency(), directed=False)
        return labels


@dataclass
class BaseMeasure:
    """Non-negative vertex weights mu(x) with positive total mass."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise ValueError("base measure weights must be non-negative")
        if self.weights.sum() <= 0:
            raise ValueError("base measure must have positive total mass")

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def uniform(cls, n: int) -> "BaseMeasure":
        return cls(np.full(n, 1.0 / n))


@dataclass
class AssumptionReport:
    """Numeric check of the moment bound and local blow-up control.

    c_eta: sup over vertices of sum_y (|x-y|^2 v |x-y|^4) eta(x,y) mu(y).
    local_integral: eps -> sup over vertices of the |x-y|^2 eta mu sum
        restricted to 0 < |x-y| < eps; non-decreasing in eps.
    c_eta_prime: sup over edge pairs of (|x-y|^2 v |x-y|^4) eta(x,y).
    """

    c_eta: float
    local_integral: dict
    c_eta_prime: float

    def to_json_dict(self) -> dict:
        return {
            "c_eta": self.c_eta,
            "local_integral": {str(k): v for k, v in self.local_integral.items()},
            "c_eta_prime": self.c_eta_prime,
        }


def ball_volume(d: int, radius: float) -> float:
    """Lebesgue volume of the d-dimensional euclidean ball."""
    from math import gamma, pi

    return pi ** (d / 2.0) / gamma(d / 2.0 + 1.0) * radius**d


def _kernel_weight_fn(kernel, epsilon: float, d: int):
    """Map a weight-kernel spec to a vectorized function of edge distance.

    Accepted specs: ("gaussian", a), "paper_local", ("constant", c) or
    "constant", and equivalent {"kind": ..., param...} dicts.
    """
    if isinstance(kernel, dict):
        kind = kernel["kind"]
        params = {k: v for k, v in kernel.items() if k != "kind"}
    elif isinstance(kernel, (tuple, list)):
        kind, *rest = kernel
        params = {"a": rest[0]} if rest else {}
    else:
        kind, params = kernel, {}

    if kind == "gaussian":
        a = float(params.get("a", 1.0))
        return lambda r: np.exp(-a * r**2)
    if kind == "paper_local":
        # 2(2+d)/eps^2 * chi_{B_eps} / |B_eps|, open ball.
        c = 2.0 * (2.0 + d) / epsilon**2 / ball_volume(d, epsilon)
        return lambda r: np.where(r < epsilon, c, 0.0)
    if kind == "constant":
        c = float(params.get("c", 1.0))
        return lambda r: np.full_like(r, c, dtype=float)
    raise ValueError(f"unknown weight kernel: {kind!r}")


def build_geometric_graph(positions, epsilon: float, kernel=("constant", 1.0)) -> Graph:
    """Connect all pairs with 0 < |x-y| <= epsilon and positive kernel weight.

    Raises DuplicatePointsError when two candidate neighbors coincide exactly,
    since the weight function is only defined off the diagonal.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n, d = positions.shape

    tree = cKDTree(positions)
    pairs = tree.query_pairs(r=epsilon, output_type="ndarray")
    weight_fn = _kernel_weight_fn(kernel, epsilon, d)

    if len(pairs) == 0:
        return Graph(positions, np.empty(0, int), np.empty(0, int), np.empty(0))

    src = np.minimum(pairs[:, 0], pairs[:, 1])
    dst = np.maximum(pairs[:, 0], pairs[:, 1])
    dist = np.linalg.norm(positions[src] - positions[dst], axis=1)
    if np.any(dist == 0.0):
        k = int(np.argmin(dist))
        raise DuplicatePointsError(
            f"vertices {src[k]} and {dst[k]} coincide exactly; "
            "eta(x, y) is undefined for x == y"
        )
    eta = weight_fn(dist)
    keep = eta > 0
    return Graph(positions, src[keep], dst[keep], eta[keep])


def graph_from_edges(positions, edges) -> Graph:
    """Build a graph from an explicit [(i, j, eta), ...] list."""
    edges = list(edges)
    if not edges:
        return Graph(np.asarray(positions, float), np.empty(0, int), np.empty(0, int), np.empty(0))
    src = np.array([min(i, j) for i, j, _ in edges], dtype=int)
    dst = np.array([max(i, j) for i, j, _ in edges], dtype=int)
    eta = np.array([w for _, _, w in edges], dtype=float)
    return Graph(np.asarray(positions, float), src, dst, eta)


def graph_distance_matrix(g: Graph, edge_cost: str = "inv_eta") -> np.ndarray:
    """All-pairs shortest-path distances; np.inf marks disconnected pairs.

    edge_cost: "inv_eta" (default, cost 1/eta per edge), "unit", or
    "euclidean" (embedded edge length).
    """
    if edge_cost == "inv_eta":
        costs = 1.0 / g.edge_eta
    elif edge_cost == "unit":
        costs = np.ones(g.n_edges)
    elif edge_cost == "euclidean":
        costs = g.edge_lengths()
    else:
        raise ValueError(f"unknown edge cost rule: {edge_cost!r}")
    if g.n_edges == 0:
        out = np.full((g.n, g.n), np.inf)
        np.fill_diagonal(out, 0.0)
        return out
    dist = shortest_path(g.adjacency(costs), method="D", directed=False)
    np.fill_diagonal(dist, 0.0)
    return dist


DEFAULT_EPS_GRID = (0.05, 0.1, 0.2, 0.5)


def check_assumptions(g: Graph, mu: BaseMeasure, eps_grid=None) -> AssumptionReport:
    """Evaluate the moment-bound and local-integrability constants on g.

    The sup over all of R^d in the assumptions is restricted to the vertex
    set; the local integral uses the quadratic moment |x-y|^2 only, as in the
    blow-up control assumption (for eps <= 1 the quadratic and quartic
    moments coincide on the ball anyway).
    """
    if len(mu.weights) != g.n:
        raise ValueError("mu must carry one weight per vertex")
    if eps_grid is None:
        eps_grid = DEFAULT_EPS_GRID

    r = g.edge_lengths()
    moment = np.maximum(r**2, r**4) * g.edge_eta
    c_eta_prime = float(moment.max()) if g.n_edges else 0.0

    per_vertex = np.zeros(g.n)
    np.add.at(per_vertex, g.edge_src, moment * mu.weights[g.edge_dst])
    np.add.at(per_vertex, g.edge_dst, moment * mu.weights[g.edge_src])
    c_eta = float(per_vertex.max()) if g.n else 0.0

    local = {}
    quad = r**2 * g.edge_eta
    for eps in eps_grid:
        inside = r < eps
        acc = np.zeros(g.n)
        np.add.at(acc, g.edge_src[inside], quad[inside] * mu.weights[g.edge_dst[inside]])
        np.add.at(acc, g.edge_dst[inside], quad[inside] * mu.weights[g.edge_src[inside]])
        local[float(eps)] = float(acc.max()) if g.n else 0.0

    return AssumptionReport(c_eta=c_eta, local_integral=local, c_eta_prime=c_eta_prime)


def to_json_dict(g: Graph, mu: BaseMeasure | None = None) -> dict:
    """Serialize graph (+ optional base measure) to the documented schema.

    {"positions": [[...]], "edges": [[i, j, eta]], "mu": [...]}; indices are
    0-based and edges are listed once with i < j.  Infinite distances are
    never stored here; the quasi-metric +inf sentinel only appears in
    distance outputs, encoded as the JSON string "inf".
    """
    doc = {
        "positions": g.positions.tolist(),
        "edges": [
            [int(i), int(j), float(w)]
            for i, j, w in zip(g.edge_src, g.edge_dst, g.edge_eta)
        ],
    }
    if mu is not None:
        doc["mu"] = mu.weights.tolist()
    return doc


def from_json_dict(doc: dict) -> tuple[Graph, BaseMeasure | None]:
    g = graph_from_edges(doc["positions"], doc["edges"])
    mu = BaseMeasure(np.asarray(doc["mu"], float)) if "mu" in doc else None
    return g, mu


def save_graph(path, g: Graph, mu: BaseMeasure | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(to_json_dict(g, mu), fh)


def load_graph(path) -> tuple[Graph, BaseMeasure | None]:
    with open(path) as fh:
        return from_json_dict(json.load(fh))
