"""Interaction + potential energies, actions and Finsler products on graphs.

The energy of a mass configuration rho is

    E(rho) = 1/2 sum_{x,y} K(x,y) rho_x rho_y + sum_x P(x) rho_x,

where the double sum runs over ALL ordered vertex pairs including x = y, so
a kernel with K(x,x) != 0 contributes its diagonal.  Velocities live on
directed edges and are antisymmetric; fluxes are antisymmetric measures on
directed edges whose kinetic cost is measured by the action built from the
one-homogeneous convex function

    alpha(j, r) = (j_+)^2 / r,  alpha(j<=0, 0) = 0,  alpha(j>0, 0) = +inf.

The +inf sentinel is a float that propagates through sums, so an inadmissible
flux makes the whole action infinite rather than raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import BaseMeasure, Graph, graph_distance_matrix

DENSE_KERNEL_LIMIT = 2048


class EdgeField:
    """Antisymmetric scalar field on directed edges.

    One value per stored unordered pair, interpreted on the src -> dst
    orientation; the opposite orientation is implied by antisymmetry, so
    value(j -> i) == -value(i -> j) holds by construction.
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=float)

    @classmethod
    def zeros(cls, g: Graph) -> "EdgeField":
        return cls(np.zeros(g.n_edges))

    def value(self, g: Graph, i: int, j: int) -> float:
        """Signed value on the directed edge i -> j (0 if not an edge)."""
        for e, (s, t) in enumerate(zip(g.edge_src, g.edge_dst)):
            if (s, t) == (i, j):
                return float(self.values[e])
            if (s, t) == (j, i):
                return -float(self.values[e])
        return 0.0

    def __neg__(self):
        return EdgeField(-self.values)

    def __add__(self, other):
        return EdgeField(self.values + other.values)

    def __sub__(self, other):
        return EdgeField(self.values - other.values)

    def __mul__(self, c: float):
        return EdgeField(self.values * c)

    __rmul__ = __mul__


@dataclass
class EnergySpec:
    """Interaction kernel + external potential with evaluation strategy.

    kernel: callable K(x, y) on position vectors, or a precomputed dense
        symmetric matrix.  Dense matrices are materialized for n <= 2048;
        above that, analytic kernels are evaluated row-blockwise.
    potential: per-vertex P (defaults to 0).
    lipschitz_L: optional Lipschitz constant of K (used by diagnostics).
    """

    kernel: object = None
    potential: np.ndarray | None = None
    lipschitz_L: float | None = None
    name: str = "custom"
    _matrix_cache: dict = field(default=None, repr=False, compare=False)

    def kernel_matrix(self, g: Graph) -> np.ndarray | None:
        """Dense K[i][j] for the given graph, cached per graph identity."""
        if self.kernel is None:
            return None
        if isinstance(self.kernel, np.ndarray):
            K = self.kernel
            if K.shape != (g.n, g.n):
                raise ValueError("kernel matrix shape does not match graph")
            if not np.allclose(K, K.T):
                raise ValueError("kernel matrix must be symmetric")
            return K
        if g.n > DENSE_KERNEL_LIMIT:
            return None
        if self._matrix_cache is None:
            self._matrix_cache = {}
        key = id(g)
        if key not in self._matrix_cache:
            self._matrix_cache[key] = _evaluate_kernel(self.kernel, g.positions)
        return self._matrix_cache[key]

    def potential_vector(self, n: int) -> np.ndarray:
        if self.potential is None:
            return np.zeros(n)
        P = np.asarray(self.potential, dtype=float)
        if P.shape != (n,):
            raise ValueError("potential must carry one value per vertex")
        return P

    def convolve(self, g: Graph, rho: np.ndarray) -> np.ndarray:
        """K*rho per vertex."""
        K = self.kernel_matrix(g)
        if K is not None:
            return K @ rho
        if self.kernel is None:
            return np.zeros(g.n)
        out = np.empty(g.n)
        block = 256
        for start in range(0, g.n, block):
            stop = min(start + block, g.n)
            Kb = _evaluate_kernel_block(self.kernel, g.positions[start:stop], g.positions)
            out[start:stop] = Kb @ rho
        return out


def _evaluate_kernel(kernel, positions: np.ndarray) -> np.ndarray:
    K = _evaluate_kernel_block(kernel, positions, positions)
    asym = np.abs(K - K.T).max() if K.size else 0.0
    if asym > 1e-12 * (1.0 + np.abs(K).max()):
        raise ValueError("analytic kernel is not symmetric")
    return 0.5 * (K + K.T)


def _evaluate_kernel_block(kernel, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    try:
        # Vectorized path: kernel accepts (m,1,d) vs (1,n,d) broadcasting.
        K = kernel(xs[:, None, :], ys[None, :, :])
        K = np.asarray(K, dtype=float)
        if K.shape == (len(xs), len(ys)):
            return K
    except Exception:
        pass
    K = np.empty((len(xs), len(ys)))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            K[i, j] = kernel(x, y)
    return K


def _pairwise_sq_dist(x, y):
    return np.sum((x - y) ** 2, axis=-1)


def spec_from_name(name: str, g: Graph | None = None, potential=None, **params) -> EnergySpec:
    """Built-in kernels selectable by name.

    attractive_exp(a):    K = 1 - exp(-a |x-y|^2)
    repulsive_exp(a):     K = exp(-a |x-y|^2)
    graph_distance_exp(a): K = 1 - exp(-d_G(x,y)^2 / a), graph distance with
                          edge costs 1/eta (requires g)
    abs:                  K = |x - y|
    exp_abs(a):           K = 1 - exp(-a |x-y|)
    morse(Ca, la, Cr, lr): K = -Ca exp(-|x-y|/la) + Cr exp(-|x-y|/lr)
    constant(c), zero, matrix (pass matrix=...)
    """
    a = float(params.get("a", 1.0))
    if name == "attractive_exp":
        kern = lambda x, y: 1.0 - np.exp(-a * _pairwise_sq_dist(x, y))
    elif name == "repulsive_exp":
        kern = lambda x, y: np.exp(-a * _pairwise_sq_dist(x, y))
    elif name == "graph_distance_exp":
        if g is None:
            raise ValueError("graph_distance_exp requires the graph")
        dG = graph_distance_matrix(g, "inv_eta")
        if np.isinf(dG).any():
            # Disconnected pairs never interact under this kernel.
            kern_mat = 1.0 - np.exp(-np.where(np.isinf(dG), np.inf, dG**2) / a)
        else:
            kern_mat = 1.0 - np.exp(-(dG**2) / a)
        return EnergySpec(kernel=kern_mat, potential=potential, name=f"graph_distance_exp({a})")
    elif name == "abs":
        kern = lambda x, y: np.sqrt(_pairwise_sq_dist(x, y))
    elif name == "exp_abs":
        kern = lambda x, y: 1.0 - np.exp(-a * np.sqrt(_pairwise_sq_dist(x, y)))
    elif name == "morse":
        Ca = float(params.get("Ca", 1.0))
        la = float(params.get("la", 1.0))
        Cr = float(params.get("Cr", 1.5))
        lr = float(params.get("lr", 0.5))
        kern = lambda x, y: (
            -Ca * np.exp(-np.sqrt(_pairwise_sq_dist(x, y)) / la)
            + Cr * np.exp(-np.sqrt(_pairwise_sq_dist(x, y)) / lr)
        )
    elif name == "constant":
        c = float(params.get("c", 1.0))
        kern = lambda x, y: np.full(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]), c)
    elif name == "zero":
        kern = None
    elif name == "matrix":
        return EnergySpec(kernel=np.asarray(params["matrix"], float), potential=potential, name="matrix")
    else:
        raise ValueError(f"unknown kernel name: {name!r}")
    return EnergySpec(kernel=kern, potential=potential, name=name)


def energy(spec: EnergySpec, g: Graph, rho: np.ndarray) -> float:
    """Total energy; the interaction double sum includes the diagonal x = y."""
    rho = np.asarray(rho, dtype=float)
    value = 0.5 * float(rho @ spec.convolve(g, rho))
    P = spec.potential_vector(g.n)
    return value + float(P @ rho)


def first_variation(spec: EnergySpec, g: Graph, rho: np.ndarray) -> np.ndarray:
    """delta E / delta rho = K*rho + P per vertex."""
    return spec.convolve(g, np.asarray(rho, float)) + spec.potential_vector(g.n)


def nonlocal_gradient(g: Graph, phi: np.ndarray) -> EdgeField:
    """Edge difference phi(dst) - phi(src) on stored orientations."""
    phi = np.asarray(phi, dtype=float)
    return EdgeField(phi[g.edge_dst] - phi[g.edge_src])


def velocity_field(spec: EnergySpec, g: Graph, rho: np.ndarray) -> EdgeField:
    """Driving velocity v = -grad(K*rho + P) on edges; antisymmetric."""
    phi = first_variation(spec, g, rho)
    return EdgeField(-(phi[g.edge_dst] - phi[g.edge_src]))


def alpha(j, r):
    """Perspective function (j_+)^2 / r with the +inf barrier at r = 0."""
    j = np.asarray(j, dtype=float)
    r = np.asarray(r, dtype=float)
    jp = np.maximum(j, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, jp**2 / np.where(r > 0, r, 1.0), np.where(jp > 0, np.inf, 0.0))
    return out if out.ndim else float(out)


def action(g: Graph, mu: BaseMeasure, rho: np.ndarray, flux: EdgeField) -> float:
    """Kinetic cost of an antisymmetric flux at configuration rho.

    Equals the ordered-edge sum of alpha(j(x,y), rho_x mu_y) eta(x,y); for an
    edge carrying j > 0 from x to y this is eta j^2 / (rho_x mu_y), and +inf
    if flux leaves a vertex with rho_x mu_y = 0.
    """
    rho = np.asarray(rho, dtype=float)
    j = flux.values
    a_fwd = alpha(j, rho[g.edge_src] * mu.weights[g.edge_dst])
    a_bwd = alpha(-j, rho[g.edge_dst] * mu.weights[g.edge_src])
    return float(np.sum((a_fwd + a_bwd) * g.edge_eta))


def action_matrix(g: Graph, mu: BaseMeasure, rho: np.ndarray, J: np.ndarray) -> float:
    """Action of a raw (not necessarily antisymmetric) flux matrix.

    J[x][y] is the flux measure on the directed edge (x, y); only graph edges
    contribute.  This is the general two-sided form; for antisymmetric J it
    coincides with action() on the corresponding EdgeField.
    """
    rho = np.asarray(rho, dtype=float)
    total = 0.0
    mw = mu.weights
    for s, t, w in zip(g.edge_src, g.edge_dst, g.edge_eta):
        for x, y in ((s, t), (t, s)):
            jxy = J[x, y]
            total += 0.5 * w * (alpha(jxy, rho[x] * mw[y]) + alpha(-jxy, mw[x] * rho[y]))
    return float(total)


def action_of_velocity(g: Graph, mu: BaseMeasure, rho: np.ndarray, v: EdgeField) -> float:
    """Ordered-pair sum of (v(x,y)_+)^2 eta(x,y) rho_x mu_y."""
    rho = np.asarray(rho, dtype=float)
    vp = np.maximum(v.values, 0.0)
    vn = np.maximum(-v.values, 0.0)
    fwd = vp**2 * rho[g.edge_src] * mu.weights[g.edge_dst]
    bwd = vn**2 * rho[g.edge_dst] * mu.weights[g.edge_src]
    return float(np.sum((fwd + bwd) * g.edge_eta))


def local_slope(spec: EnergySpec, g: Graph, mu: BaseMeasure, rho: np.ndarray) -> float:
    """D(rho): squared Finsler norm of the steepest-descent velocity.

    Expands to sum over ordered pairs of ((grad(K*rho+P))(x,y)_-)^2 eta
    rho_x mu_y, i.e. the action of the driving velocity field.
    """
    return action_of_velocity(g, mu, rho, velocity_field(spec, g, rho))


def velocity_inner_product(
    g: Graph, mu: BaseMeasure, rho: np.ndarray, base: EdgeField, u: EdgeField, v: EdgeField
) -> float:
    """Finsler product g^_{rho, base}(u, v) on antisymmetric velocities.

    The quadratic form satisfies g^_{rho,w}(w, w) = action_of_velocity(w).
    """
    rho = np.asarray(rho, dtype=float)
    w = base.values
    weight = np.where(
        w > 0,
        rho[g.edge_src] * mu.weights[g.edge_dst],
        np.where(w < 0, mu.weights[g.edge_src] * rho[g.edge_dst], 0.0),
    )
    return float(np.sum(u.values * v.values * g.edge_eta * weight))


def finsler_inner_product(
    g: Graph, mu: BaseMeasure, rho: np.ndarray, base_flux: EdgeField, j1: EdgeField, j2: EdgeField
) -> float:
    """Inner product g_{rho, j}(j1, j2) induced by the action at base_flux.

    Fluxes are measure values per directed edge; the upwind character picks
    the rho_x mu_y (resp. mu_x rho_y) normalization where the base flux is
    positive (resp. negative).  Returns +inf when that normalization is zero
    on an edge where the base flux is active.
    """
    rho = np.asarray(rho, dtype=float)
    total = 0.0
    mw = mu.weights
    for e in range(g.n_edges):
        b = base_flux.values[e]
        if b == 0.0:
            continue
        s, t = g.edge_src[e], g.edge_dst[e]
        denom = rho[s] * mw[t] if b > 0 else rho[t] * mw[s]
        num = j1.values[e] * j2.values[e] * g.edge_eta[e]
        if denom == 0.0:
            if num != 0.0:
                return math.inf
            continue
        total += num / denom
    return float(total)


def flux_to_velocity(g: Graph, mu: BaseMeasure, rho: np.ndarray, flux: EdgeField) -> EdgeField:
    """Velocity decomposition w of a flux: j = w_+ rho_x mu_y - w_- mu_x rho_y.

    Where the flux vanishes the velocity is zero; positive flux out of a
    rho = 0 vertex has no admissible velocity and maps to +inf.
    """
    rho = np.asarray(rho, dtype=float)
    j = flux.values
    denom = np.where(
        j > 0,
        rho[g.edge_src] * mu.weights[g.edge_dst],
        mu.weights[g.edge_src] * rho[g.edge_dst],
    )
    w = np.zeros_like(j)
    active = j != 0.0
    ok = active & (denom > 0)
    w[ok] = j[ok] / denom[ok]
    w[active & ~ok] = np.sign(j[active & ~ok]) * np.inf
    return EdgeField(w)
