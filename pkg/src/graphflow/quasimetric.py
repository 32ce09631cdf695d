"""The nonlocal upwind transportation quasi-metric and related solvers.

The squared distance between two configurations is the least path action

    T(rho0, rho1)^2 = inf { int_0^1 A(rho_t, j_t) dt : continuity equation },

a jointly convex problem once discretized in time with piecewise-constant
fluxes and the explicit continuity constraint rho_{k+1} = rho_k - dt div j_k.
The per-interval action is evaluated at the interval midpoint state
(rho_k + rho_{k+1})/2, which keeps joint convexity (the perspective function
alpha composed with an affine map) and removes the O(dt) endpoint bias that
would otherwise dominate the discretization error.

Everything is solved by a monotone accelerated projected-gradient method in
the flux variables: the states are affine functions of the fluxes, the
endpoint constraint is an affine projection with a precomputed pseudoinverse
and positivity acts through the +inf barrier of alpha plus backtracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import EdgeField, action, alpha, flux_to_velocity
from .graph import BaseMeasure, Graph

BB_MAX_VERTICES = 50


class InfeasibleDivergenceError(ValueError):
    """No admissible flux realizes the requested divergence."""

    def __init__(self, vertex: int, message: str):
        super().__init__(message)
        self.vertex = vertex


@dataclass
class PathProblem:
    g: Graph
    mu: BaseMeasure
    rho_start: np.ndarray
    rho_end: np.ndarray
    m_steps: int = 32
    tolerance: float = 1e-8
    max_iters: int = 40000

    def __post_init__(self):
        self.rho_start = np.asarray(self.rho_start, dtype=float)
        self.rho_end = np.asarray(self.rho_end, dtype=float)
        if self.m_steps < 2:
            raise ValueError("m_steps must be at least 2")
        for name, r in (("rho_start", self.rho_start), ("rho_end", self.rho_end)):
            if r.min() < 0 or abs(r.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} must lie on the probability simplex")


@dataclass
class PathSolution:
    states: list
    fluxes: list
    total_action: float
    per_slice_action: list
    converged: bool
    iterations: int
    message: str = ""
    objective_history: list = field(default_factory=list)

    @property
    def distance(self) -> float:
        return math.sqrt(self.total_action) if np.isfinite(self.total_action) else math.inf


def two_point_distance(alpha_w: float, p: float, q: float, rho, nu) -> float:
    """Closed-form quasi-distance on the two-point graph {0, 1}.

    Vertices carry base masses mu(0) = p, mu(1) = q and the single edge has
    weight alpha_w.  The value is (2/sqrt(alpha p)) (sqrt(rho_1) - sqrt(nu_1))
    when rho_0 < nu_0, and (2/sqrt(alpha q)) (sqrt(rho_0) - sqrt(nu_0)) when
    nu_0 < rho_0; it is asymmetric whenever p != q.
    """
    if alpha_w <= 0 or p <= 0 or q <= 0:
        raise ValueError("alpha, p, q must be positive")
    r0, r1 = float(rho[0]), float(rho[1])
    n0, n1 = float(nu[0]), float(nu[1])
    for name, (a, b) in (("rho", (r0, r1)), ("nu", (n0, n1))):
        if a < 0 or b < 0 or abs(a + b - 1.0) > 1e-9:
            raise ValueError(f"{name} must lie on the 1-simplex")
    if r0 < n0:
        return 2.0 / math.sqrt(alpha_w * p) * (math.sqrt(r1) - math.sqrt(n1))
    if n0 < r0:
        return 2.0 / math.sqrt(alpha_w * q) * (math.sqrt(r0) - math.sqrt(n0))
    return 0.0


# ---------------------------------------------------------------------------
# Shared first-order machinery
# ---------------------------------------------------------------------------


def _monotone_fista(x0, f_and_grad, project, max_iters, rel_tol, patience=50):
    """Accelerated projected gradient with backtracking and monotone safeguard.

    f_and_grad(x) returns (value, gradient); value may be +inf outside the
    feasible region, in which case the gradient is ignored.  The returned
    objective history is non-increasing.
    """
    x = project(np.array(x0, dtype=float))
    fx, gx = f_and_grad(x)
    if not np.isfinite(fx):
        raise RuntimeError("infeasible starting point for descent")

    x_prev = x.copy()
    t_prev = 1.0
    gnorm = float(np.sqrt(np.vdot(gx, gx)))
    step = 1.0 / (gnorm + 1.0)
    history = [fx]
    stall = 0
    iterations = 0

    def backtrack(base, fbase, gbase, step):
        for _ in range(80):
            cand = project(base - step * gbase)
            fc, gc = f_and_grad(cand)
            diff = cand - base
            model = fbase + float(np.vdot(gbase, diff)) + float(np.vdot(diff, diff)) / (2.0 * step)
            if np.isfinite(fc) and fc <= model + 1e-15 * (1 + abs(model)):
                return cand, fc, gc, step
            step *= 0.5
        return base, fbase, gbase, step

    for it in range(max_iters):
        iterations = it + 1
        t = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_prev**2))
        beta = (t_prev - 1.0) / t
        y = x + beta * (x - x_prev)
        fy, gy = f_and_grad(y)
        if not np.isfinite(fy):
            y, fy, gy = x, fx, gx
            t = 1.0
        cand, fc, gc, step = backtrack(y, fy, gy, step)
        x_prev = x
        if fc <= fx:
            x, fx, gx = cand, fc, gc
        else:
            cand, fc, gc, step = backtrack(x, fx, gx, step)
            x, fx, gx = cand, fc, gc
            t = 1.0
        t_prev = t
        step *= 1.3
        prev = history[-1]
        history.append(fx)
        rel = (prev - fx) / max(abs(fx), 1e-30)
        stall = stall + 1 if rel < rel_tol else 0
        if stall >= patience:
            return x, fx, history, iterations, True
    return x, fx, history, iterations, False


def _divergence_matrix(g: Graph) -> np.ndarray:
    D = np.zeros((g.n, g.n_edges))
    for e in range(g.n_edges):
        D[g.edge_src[e], e] += g.edge_eta[e]
        D[g.edge_dst[e], e] -= g.edge_eta[e]
    return D


# ---------------------------------------------------------------------------
# Minimal-action flux for a prescribed divergence
# ---------------------------------------------------------------------------


def _admissible_flow_init(g: Graph, mu: BaseMeasure, rho: np.ndarray, target: np.ndarray):
    """Feasible sign-admissible flux via max-flow, or raise with certificate.

    Works in the eta-weighted arc variables phi_e = eta_e j_e so that vertex
    balances are plain flow conservation.  An arc x -> y is admissible when
    mass can actually leave x (rho_x > 0) and arrive on the base measure
    (mu_y > 0).
    """
    import networkx as nx

    n = g.n
    supply = np.maximum(target, 0.0)
    demand = np.maximum(-target, 0.0)
    total = supply.sum()
    if total == 0:
        return np.zeros(g.n_edges)

    big = 2.0 * total
    DG = nx.DiGraph()
    DG.add_nodes_from(range(n))
    for e in range(g.n_edges):
        s, t = int(g.edge_src[e]), int(g.edge_dst[e])
        if rho[s] > 0 and mu.weights[t] > 0:
            DG.add_edge(s, t, capacity=big, edge=e, sign=+1.0)
        if rho[t] > 0 and mu.weights[s] > 0:
            DG.add_edge(t, s, capacity=big, edge=e, sign=-1.0)
    src_node, dst_node = "source", "sink"
    for x in range(n):
        if supply[x] > 0:
            DG.add_edge(src_node, x, capacity=float(supply[x]))
        if demand[x] > 0:
            DG.add_edge(x, dst_node, capacity=float(demand[x]))

    flow_value, flow_dict = nx.maximum_flow(DG, src_node, dst_node)
    if flow_value < total - 1e-9 * max(1.0, total):
        delivered = {x: flow_dict.get(x, {}).get(dst_node, 0.0) for x in range(n)}
        unmet = [(demand[x] - delivered[x], x) for x in range(n) if demand[x] > 0]
        worst = max(unmet, key=lambda p: p[0]) if unmet else (total - flow_value, int(np.argmax(supply)))
        raise InfeasibleDivergenceError(
            worst[1],
            f"divergence target is unreachable: vertex {worst[1]} has no admissible inflow "
            f"(max-flow deficit {total - flow_value:.3e})",
        )

    phi = np.zeros(g.n_edges)
    for u, targets in flow_dict.items():
        if u in (src_node, dst_node):
            continue
        for v, f in targets.items():
            if v in (src_node, dst_node) or f == 0.0:
                continue
            data = DG.get_edge_data(u, v)
            phi[data["edge"]] += data["sign"] * f
    return phi / g.edge_eta


def optimal_flux_for_divergence(
    g: Graph,
    mu: BaseMeasure,
    rho: np.ndarray,
    target_div: np.ndarray,
    tolerance: float = 1e-10,
    max_iters: int = 20000,
    init: EdgeField | None = None,
) -> EdgeField:
    """Antisymmetric flux of minimal action with div j = target_div.

    The divergence target must sum to zero and be reachable with the upwind
    sign constraints (flux can only leave vertices carrying mass).
    """
    rho = np.asarray(rho, dtype=float)
    target = np.asarray(target_div, dtype=float)
    if abs(target.sum()) > 1e-9 * max(1.0, np.abs(target).max()):
        raise ValueError("divergence target must sum to zero")
    if g.n_edges == 0:
        if np.abs(target).max() > 0:
            raise InfeasibleDivergenceError(int(np.argmax(np.abs(target))), "graph has no edges")
        return EdgeField(np.zeros(0))

    D = _divergence_matrix(g)
    G = D @ D.T
    G_pinv = np.linalg.pinv(G)

    def project(j):
        lam = G_pinv @ (target - D @ j)
        return j + D.T @ lam

    mw = mu.weights
    den_fwd = rho[g.edge_src] * mw[g.edge_dst]
    den_bwd = rho[g.edge_dst] * mw[g.edge_src]
    eta = g.edge_eta

    def f_and_grad(j):
        jp = np.maximum(j, 0.0)
        jn = np.maximum(-j, 0.0)
        bad = ((jp > 1e-300) & (den_fwd <= 0)) | ((jn > 1e-300) & (den_bwd <= 0))
        if np.any(bad):
            return math.inf, None
        with np.errstate(divide="ignore", invalid="ignore"):
            afwd = np.where(den_fwd > 0, jp**2 / np.where(den_fwd > 0, den_fwd, 1.0), 0.0)
            abwd = np.where(den_bwd > 0, jn**2 / np.where(den_bwd > 0, den_bwd, 1.0), 0.0)
            grad = eta * (
                np.where(den_fwd > 0, 2.0 * jp / np.where(den_fwd > 0, den_fwd, 1.0), 0.0)
                - np.where(den_bwd > 0, 2.0 * jn / np.where(den_bwd > 0, den_bwd, 1.0), 0.0)
            )
        return float(np.sum(eta * (afwd + abwd))), grad

    if init is not None:
        j0 = project(np.array(init.values, dtype=float))
        if not np.isfinite(f_and_grad(j0)[0]):
            j0 = _admissible_flow_init(g, mu, rho, target)
    else:
        j0 = _admissible_flow_init(g, mu, rho, target)

    j, _, _, _, _ = _monotone_fista(j0, f_and_grad, project, max_iters, tolerance)
    return EdgeField(j)


def gradient_fit_residual(g: Graph, mu: BaseMeasure, rho: np.ndarray, flux: EdgeField) -> float:
    """Relative residual of fitting the flux's velocity by a nonlocal gradient.

    Tangent fluxes have velocities in the closure of {grad phi}; the fit is
    weighted least squares in the Finsler norm induced by the flux direction.
    """
    rho = np.asarray(rho, dtype=float)
    w = flux_to_velocity(g, mu, rho, flux).values
    weight = np.where(
        flux.values > 0,
        rho[g.edge_src] * mu.weights[g.edge_dst],
        np.where(flux.values < 0, mu.weights[g.edge_src] * rho[g.edge_dst], 0.0),
    ) * g.edge_eta
    active = weight > 0
    if not np.any(active):
        return 0.0
    sq = np.sqrt(weight[active])
    rows = np.zeros((int(active.sum()), g.n))
    idx = np.where(active)[0]
    for r, e in enumerate(idx):
        rows[r, g.edge_dst[e]] += sq[r]
        rows[r, g.edge_src[e]] -= sq[r]
    rhs = sq * w[idx]
    phi, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    res = rows @ phi - rhs
    denom = float(np.sqrt(np.sum(rhs**2)))
    return float(np.sqrt(np.sum(res**2))) / denom if denom > 0 else 0.0


# ---------------------------------------------------------------------------
# Benamou-Brenier solve
# ---------------------------------------------------------------------------


def solve_bb(problem: PathProblem) -> PathSolution:
    """Minimize the time-discretized path action between two configurations.

    Returns total_action = T^2 (so distance = sqrt(total_action)); a +inf
    sentinel with a diagnostic message is returned when the endpoints exchange
    mass between disconnected components.  Non-convergence within max_iters is
    reported through converged=False, never silently.
    """
    g, mu = problem.g, problem.mu
    if g.n > BB_MAX_VERTICES:
        raise ValueError(
            f"Benamou-Brenier solve refused for n = {g.n} > {BB_MAX_VERTICES} (desk scale only)"
        )
    rho0, rho1 = problem.rho_start, problem.rho_end
    M = problem.m_steps
    dt = 1.0 / M

    labels = g.connected_component_labels()
    for c in np.unique(labels):
        on = labels == c
        if abs(rho0[on].sum() - rho1[on].sum()) > 1e-9:
            return PathSolution(
                states=[rho0.copy(), rho1.copy()], fluxes=[],
                total_action=math.inf, per_slice_action=[],
                converged=True, iterations=0,
                message=f"endpoints move mass across disconnected components (component {c})",
            )

    if np.abs(rho0 - rho1).max() <= 1e-15:
        zero = [EdgeField(np.zeros(g.n_edges)) for _ in range(M)]
        states = [rho0.copy() for _ in range(M + 1)]
        return PathSolution(states, zero, 0.0, [0.0] * M, True, 0, "endpoints identical")

    D = _divergence_matrix(g)
    G_pinv = np.linalg.pinv(D @ D.T)
    b = (rho0 - rho1) / dt
    E = g.n_edges
    src, dst, eta = g.edge_src, g.edge_dst, g.edge_eta
    mw = mu.weights
    n = g.n

    def all_states(J):
        # rho has shape (M+1, n); cumulative explicit Euler continuity.
        div = (D @ J.T).T  # (M, n)
        rho = np.empty((M + 1, n))
        rho[0] = rho0
        np.cumsum(-dt * div, axis=0, out=rho[1:])
        rho[1:] += rho0
        return rho

    def project(J):
        S = J.sum(axis=0)
        lam = G_pinv @ (b - D @ S) / M
        return J + (D.T @ lam)[None, :]

    def f_and_grad(J):
        rho = all_states(J)
        if rho.min() < -1e-11:
            return math.inf, None
        rho = np.maximum(rho, 0.0)
        rbar = 0.5 * (rho[:-1] + rho[1:])  # (M, n)
        dfwd = rbar[:, src] * mw[dst][None, :]
        dbwd = rbar[:, dst] * mw[src][None, :]
        Jp = np.maximum(J, 0.0)
        Jn = np.maximum(-J, 0.0)
        if np.any((Jp > 1e-300) & (dfwd <= 0)) or np.any((Jn > 1e-300) & (dbwd <= 0)):
            return math.inf, None
        safe_f = np.where(dfwd > 0, dfwd, 1.0)
        safe_b = np.where(dbwd > 0, dbwd, 1.0)
        afwd = np.where(dfwd > 0, Jp**2 / safe_f, 0.0)
        abwd = np.where(dbwd > 0, Jn**2 / safe_b, 0.0)
        value = dt * float(np.sum(eta[None, :] * (afwd + abwd)))

        dA_dJ = eta[None, :] * (
            np.where(dfwd > 0, 2.0 * Jp / safe_f, 0.0)
            - np.where(dbwd > 0, 2.0 * Jn / safe_b, 0.0)
        )
        # dA_k / drbar accumulated per vertex.
        contrib_src = -eta[None, :] * np.where(dfwd > 0, Jp**2 / safe_f**2, 0.0) * mw[dst][None, :]
        contrib_dst = -eta[None, :] * np.where(dbwd > 0, Jn**2 / safe_b**2, 0.0) * mw[src][None, :]
        S_rho = np.zeros((M, n))
        rows = np.repeat(np.arange(M) * n, E)
        np.add.at(S_rho.reshape(-1), rows + np.tile(src, M), contrib_src.ravel())
        np.add.at(S_rho.reshape(-1), rows + np.tile(dst, M), contrib_dst.ravel())
        # W[l] = 0.5 S[l] + sum_{k > l} S[k]: reverse cumulative sum.
        tail = np.cumsum(S_rho[::-1], axis=0)[::-1]
        W = tail - 0.5 * S_rho
        grad = dt * dA_dJ - dt**2 * (W[:, src] - W[:, dst]) * eta[None, :]
        return value, grad

    # Feasible start: linear state interpolation with the constant-divergence
    # minimal flux replicated across slices.
    target = rho0 - rho1
    rho_mid = 0.5 * (rho0 + rho1)
    try:
        j_init = optimal_flux_for_divergence(
            g, mu, rho_mid, target, tolerance=1e-6, max_iters=2000
        ).values
    except InfeasibleDivergenceError:
        return PathSolution(
            states=[rho0.copy(), rho1.copy()], fluxes=[],
            total_action=math.inf, per_slice_action=[],
            converged=True, iterations=0,
            message="no admissible flux connects the endpoints",
        )
    J0 = np.tile(j_init, (M, 1))

    J, value, history, iterations, converged = _monotone_fista(
        J0, f_and_grad, project, problem.max_iters, problem.tolerance
    )

    rho = np.maximum(all_states(J), 0.0)
    rbar = 0.5 * (rho[:-1] + rho[1:])
    per_slice = [
        action(g, mu, rbar[k], EdgeField(J[k])) for k in range(M)
    ]
    return PathSolution(
        states=[rho[k].copy() for k in range(M + 1)],
        fluxes=[EdgeField(J[k].copy()) for k in range(M)],
        total_action=value,
        per_slice_action=per_slice,
        converged=converged,
        iterations=iterations,
        message="" if converged else "objective decrease tolerance not reached",
        objective_history=history,
    )


def metric_derivative_estimate(
    g: Graph, mu: BaseMeasure, traj, k: int
) -> float:
    """sqrt of the minimal action realizing the observed one-step divergence.

    Upper-bounded by the action of the recorded step flux, which is used as
    a warm start.
    """
    if k + 1 >= len(traj.times):
        raise IndexError("step index out of range")
    dt = traj.times[k + 1] - traj.times[k]
    rho_k = np.asarray(traj.states[k], float)
    target = (rho_k - np.asarray(traj.states[k + 1], float)) / dt
    if np.abs(target).max() == 0.0:
        return 0.0
    j = optimal_flux_for_divergence(g, mu, rho_k, target, init=traj.fluxes[k])
    return math.sqrt(action(g, mu, rho_k, j))


# ---------------------------------------------------------------------------
# 1-Wasserstein distances for comparisons
# ---------------------------------------------------------------------------

LP_EXACT_LIMIT = 300


def wasserstein1(positions, rho, nu, method: str = "exact_1d", seed: int = 0,
                 n_projections: int = 64) -> float:
    """W1 between two discrete measures on the same embedded vertex set.

    exact_1d: quantile (CDF) matching, embedded dimension 1 only.
    lp_exact: transport linear program, refused above 300 support points.
    sliced:   average of 1D distances over seeded random projections.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    rho = np.asarray(rho, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if method == "exact_1d":
        if positions.shape[1] != 1:
            raise ValueError("exact_1d requires 1D positions")
        return _w1_1d(positions[:, 0], rho, nu)
    if method == "lp_exact":
        if len(rho) > LP_EXACT_LIMIT:
            raise ValueError(
                f"lp_exact refused for n = {len(rho)} > {LP_EXACT_LIMIT} support points"
            )
        return _w1_lp(positions, rho, nu)
    if method == "sliced":
        rng = np.random.default_rng(seed)
        d = positions.shape[1]
        total = 0.0
        for _ in range(n_projections):
            u = rng.normal(size=d)
            u /= np.linalg.norm(u)
            total += _w1_1d(positions @ u, rho, nu)
        return total / n_projections
    raise ValueError(f"unknown W1 method {method!r}")


def _w1_1d(x: np.ndarray, rho: np.ndarray, nu: np.ndarray) -> float:
    order = np.argsort(x, kind="stable")
    xs = x[order]
    diff = np.cumsum(rho[order] - nu[order])
    return float(np.sum(np.abs(diff[:-1]) * np.diff(xs)))


def _w1_lp(positions: np.ndarray, rho: np.ndarray, nu: np.ndarray) -> float:
    from scipy.optimize import linprog
    from scipy.sparse import lil_matrix

    n = len(rho)
    cost = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2).ravel()
    A = lil_matrix((2 * n, n * n))
    for i in range(n):
        A[i, i * n:(i + 1) * n] = 1.0
        A[n + i, i::n] = 1.0
    bounds = (0, None)
    res = linprog(
        cost, A_eq=A.tocsr(), b_eq=np.concatenate([rho, nu]),
        bounds=bounds, method="highs",
    )
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)
