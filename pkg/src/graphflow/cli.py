"""Command-line entry point.

One job per invocation: build the objects described by a JSON config (plus
--set key=value overrides), run the requested computation and write the
artifacts plus a manifest into the output directory.  Exit codes: 0 success,
2 config/validation error (messages name the offending field), 3 solver
non-convergence.

Outputs are byte-reproducible for a fixed config and seed: floats are
written with repr (shortest round-trip), CSV uses '.' decimals, LF endings
and a header row, and manifests contain no timestamps.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .convergence import (
    FVConfig,
    SamplingExperiment,
    convergence_study,
    local_limit_study,
    sample_measure,
)
from .dynamics import FluxRelation, State, StepRejectedError, Trajectory, solve
from .energy import EdgeField, EnergySpec, spec_from_name
from .graph import (
    BaseMeasure,
    DEFAULT_EPS_GRID,
    build_geometric_graph,
    check_assumptions,
    from_json_dict,
    save_graph,
    to_json_dict,
)
from .quasimetric import PathProblem, solve_bb, two_point_distance
from .variational import chain_rule_residual, de_giorgi, upper_gradient_check


class ConfigError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def load_config(path: str, overrides) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set: expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set: {key}: {p} is not an object")
        node[parts[-1]] = value
    return cfg


def build_graph(cfg: dict, seed: int):
    gcfg = cfg.get("graph")
    if gcfg is None:
        raise ConfigError("graph: section missing")
    if "positions" in gcfg and "edges" in gcfg:
        g, mu = from_json_dict(gcfg)
    else:
        if "sample" in gcfg:
            s = gcfg["sample"]
            positions = sample_measure(s.get("name", "uniform"), int(s.get("n", 0)),
                                       int(s.get("seed", seed)))
        elif "positions" in gcfg:
            positions = np.asarray(gcfg["positions"], float)
        else:
            raise ConfigError("graph: needs positions or sample")
        eps = gcfg.get("epsilon")
        if eps is None or float(eps) <= 0:
            raise ConfigError(f"graph.epsilon: must be positive (got {eps!r})")
        g = build_geometric_graph(positions, float(eps), gcfg.get("weight_kernel", ("constant", 1.0)))
        mu = None
    mu_cfg = cfg.get("mu")
    if isinstance(mu_cfg, str):
        if mu_cfg != "uniform":
            raise ConfigError(f"mu: unknown preset {mu_cfg!r}")
        mu = BaseMeasure.uniform(g.n)
    elif isinstance(mu_cfg, list):
        mu = BaseMeasure(np.asarray(mu_cfg, float))
    elif mu is None:
        mu = BaseMeasure.uniform(g.n)
    if len(mu.weights) != g.n:
        raise ConfigError("mu: wrong length for graph")
    return g, mu


def build_energy(cfg: dict, g) -> EnergySpec:
    ecfg = cfg.get("energy", {})
    kcfg = ecfg.get("kernel", {"name": "zero"})
    name = kcfg.get("name")
    if name is None:
        raise ConfigError("energy.kernel.name: missing")
    params = {k: v for k, v in kcfg.items() if k != "name"}
    potential = ecfg.get("potential")
    if potential is not None:
        potential = np.asarray(potential, float)
    try:
        return spec_from_name(name, g, potential=potential, **params)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"energy.kernel: {exc}")


def build_rho0(cfg: dict, n: int) -> State:
    dcfg = cfg.get("dynamics", {})
    r = dcfg.get("rho0", "uniform")
    if r == "uniform":
        return State.uniform(n)
    if isinstance(r, dict) and "delta" in r:
        return State.delta(n, r["delta"])
    if isinstance(r, list):
        try:
            return State(np.asarray(r, float))
        except ValueError as exc:
            raise ConfigError(f"dynamics.rho0: {exc}")
    raise ConfigError(f"dynamics.rho0: unrecognized spec {r!r}")


def write_manifest(outdir: str, command: str, cfg: dict, seed: int, outputs: list):
    doc = {
        "command": command,
        "config": cfg,
        "seed": seed,
        "version": __version__,
        "outputs": sorted(outputs),
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return path


def _run_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    g, mu = build_graph(cfg, args.seed)
    spec = build_energy(cfg, g)
    dcfg = cfg.get("dynamics", {})
    rho0 = build_rho0(cfg, g.n)
    t_end = float(dcfg.get("t_end", 1.0))
    dt = float(dcfg.get("dt", 0.1))
    if dt <= 0:
        raise ConfigError(f"dynamics.dt: must be positive (got {dt})")
    if t_end < 0:
        raise ConfigError(f"dynamics.t_end: must be non-negative (got {t_end})")
    rel_cfg = dcfg.get("relation", {"kind": "upwind"})
    try:
        rel = FluxRelation(rel_cfg.get("kind", "upwind"), float(rel_cfg.get("beta", 1.0)))
    except ValueError as exc:
        raise ConfigError(f"dynamics.relation: {exc}")
    scheme = dcfg.get("scheme", "adaptive_euler")
    record_every = int(dcfg.get("record_every", 10))

    traj = solve(spec, g, mu, rho0, rel, t_end=t_end, dt=dt,
                 scheme=scheme, record_every=record_every)

    os.makedirs(args.out, exist_ok=True)
    outputs = []
    csv_path = os.path.join(args.out, "trajectory.csv")
    traj.to_csv(csv_path)
    outputs.append("trajectory.csv")
    save_graph(os.path.join(args.out, "graph.json"), g, mu)
    outputs.append("graph.json")
    snap_paths = traj.write_snapshots(args.out)
    outputs.extend(os.path.basename(p) for p in snap_paths)
    write_manifest(args.out, "simulate", cfg, args.seed, outputs + ["manifest.json"])
    print(f"simulate: {len(traj)} records -> {args.out}")
    return 0


def _run_distance(args) -> int:
    cfg = load_config(args.config, args.set)
    g, mu = build_graph(cfg, args.seed)
    states = cfg.get("states")
    if not states or not isinstance(states, list):
        raise ConfigError("states: provide a list of mass vectors")
    states = [np.asarray(s, float) for s in states]
    qcfg = cfg.get("quasimetric", {})
    m_steps = int(qcfg.get("m_steps", 32))
    tol = float(qcfg.get("tolerance", 1e-8))
    max_iters = int(qcfg.get("max_iters", 40000))

    os.makedirs(args.out, exist_ok=True)
    rows = []
    all_converged = True
    for i, a in enumerate(states):
        for j, b in enumerate(states):
            if i == j:
                continue
            sol = solve_bb(PathProblem(g, mu, a, b, m_steps=m_steps,
                                       tolerance=tol, max_iters=max_iters))
            all_converged &= sol.converged
            rows.append((i, j, sol.distance, sol.converged, sol.iterations))
    path = os.path.join(args.out, "distances.csv")
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "j", "T_ij", "converged", "iters"])
        for i, j, d, conv, iters in rows:
            writer.writerow([i, j, _fmt(d), str(bool(conv)).lower(), iters])
    write_manifest(args.out, "distance", cfg, args.seed, ["distances.csv", "manifest.json"])
    print(f"distance: {len(rows)} ordered pairs -> {path}")
    return 0 if all_converged else 3


def _load_trajectory(run_dir: str) -> Trajectory:
    snaps = sorted(f for f in os.listdir(run_dir) if f.startswith("snapshot_"))
    if not snaps:
        raise ConfigError(f"run_dir: no snapshots found in {run_dir}")
    traj = Trajectory()
    for name in snaps:
        with open(os.path.join(run_dir, name)) as fh:
            doc = json.load(fh)
        traj.times.append(float(doc["t"]))
        traj.states.append(np.asarray(doc["rho"], float))
        traj.fluxes.append(EdgeField(np.asarray(doc["flux"], float)))
        for col in (traj.energy, traj.slope, traj.action, traj.mass_error, traj.min_mass):
            col.append(float("nan"))
    return traj


def _run_degiorgi(args) -> int:
    cfg = load_config(args.config, args.set)
    run_dir = cfg.get("run_dir")
    if not run_dir or not os.path.isdir(run_dir):
        raise ConfigError(f"run_dir: not a directory: {run_dir!r}")
    from .graph import load_graph

    g, mu = load_graph(os.path.join(run_dir, "graph.json"))
    if mu is None:
        mu = BaseMeasure.uniform(g.n)
    spec = build_energy(cfg, g)
    traj = _load_trajectory(run_dir)

    report = de_giorgi(spec, g, mu, traj)
    residual = chain_rule_residual(spec, g, mu, traj)
    ok, margin = upper_gradient_check(spec, g, mu, traj)
    tol = float(cfg.get("tolerance", 0.02 * (abs(report.energy_gap) + 1.0)))
    passed = abs(report.g_value) <= tol and ok

    os.makedirs(args.out, exist_ok=True)
    doc = report.to_json_dict()
    doc["chain_rule_residual"] = residual
    doc["upper_gradient_margin"] = margin
    doc["tolerance"] = tol
    doc["pass"] = bool(passed)
    with open(os.path.join(args.out, "degiorgi.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
    write_manifest(args.out, "degiorgi", cfg, args.seed, ["degiorgi.json", "manifest.json"])
    verdict = "PASS" if passed else "FAIL"
    print(f"{verdict} g_value={report.g_value:.6g} chain_rule_residual={residual:.6g} "
          f"upper_gradient_margin={margin:.6g}")
    return 0


def _run_converge(args) -> int:
    cfg = load_config(args.config, args.set)
    ecfg = cfg.get("experiment", {})
    try:
        exp = SamplingExperiment(
            target_density=ecfg.get("target_density", "uniform"),
            n_grid=tuple(ecfg.get("n_grid", (30, 60, 120, 240))),
            seed=int(ecfg.get("seed", args.seed)),
            epsilon=float(ecfg.get("epsilon", 0.3)),
            weight_kernel=ecfg.get("weight_kernel", ("constant", 1.0)),
            kernel_name=ecfg.get("kernel_name", "abs"),
            kernel_params=ecfg.get("kernel_params", {}),
            t_end=float(ecfg.get("t_end", 1.0)),
            dt=float(ecfg.get("dt", 0.05)),
            comparison_times=tuple(ecfg.get("comparison_times", (1.0,))),
        )
    except ValueError as exc:
        raise ConfigError(f"experiment: {exc}")
    report = convergence_study(exp)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "convergence.csv")
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "t", "w1_error"])
        for row in report["rows"]:
            writer.writerow([row["n"], _fmt(row["t"]), _fmt(row["w1_error"])])
    with open(os.path.join(args.out, "convergence_manifest.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    write_manifest(args.out, "converge", cfg, args.seed,
                   ["convergence.csv", "convergence_manifest.json", "manifest.json"])
    print(f"converge: {len(report['rows'])} rows -> {path}")
    return 0


def _run_locallimit(args) -> int:
    cfg = load_config(args.config, args.set)
    domain = tuple(cfg.get("domain", (-2.0, 2.0)))
    cells = int(cfg.get("cells", 128))
    eps_list = cfg.get("eps_list", [0.4, 0.2, 0.1])
    kernel = cfg.get("kernel", {"name": "attractive_exp", "a": 1.0})
    t_end = float(cfg.get("t_end", 1.0))
    dt = float(cfg.get("dt", 0.01))
    rho0_cfg = cfg.get("rho0", "gaussian")
    h = (domain[1] - domain[0]) / cells
    x = domain[0] + h * (np.arange(cells) + 0.5)
    if rho0_cfg == "gaussian":
        rho0 = np.exp(-(x**2) / 0.18)
        rho0 /= rho0.sum()
    elif isinstance(rho0_cfg, list):
        rho0 = np.asarray(rho0_cfg, float)
    else:
        raise ConfigError(f"rho0: unrecognized spec {rho0_cfg!r}")
    try:
        report = local_limit_study(
            domain, cells, eps_list, kernel.get("name", "attractive_exp"), rho0, t_end,
            dt=dt, kernel_params={k: v for k, v in kernel.items() if k != "name"},
        )
    except ValueError as exc:
        raise ConfigError(f"eps_list: {exc}")
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "locallimit.csv")
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eps", "l1_discrepancy"])
        for row in report["rows"]:
            writer.writerow([_fmt(row["eps"]), _fmt(row["l1_discrepancy"])])
    write_manifest(args.out, "locallimit", cfg, args.seed, ["locallimit.csv", "manifest.json"])
    print(f"locallimit: {len(report['rows'])} rows -> {path}")
    return 0


def _parse_pair(text: str, name: str) -> np.ndarray:
    try:
        vals = np.asarray([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated reals, got {text!r}")
    if vals.shape != (2,):
        raise ConfigError(f"{name}: expected exactly two components")
    return vals


def _run_twopoint(args) -> int:
    alpha, p, q = args.alpha, args.p, args.q
    for name, v in (("alpha", alpha), ("p", p), ("q", q)):
        if v <= 0:
            raise ConfigError(f"{name}: must be positive (got {v})")
    rho = _parse_pair(args.rho, "rho")
    nu = _parse_pair(args.nu, "nu")
    try:
        fwd = two_point_distance(alpha, p, q, rho, nu)
        bwd = two_point_distance(alpha, p, q, nu, rho)
    except ValueError as exc:
        raise ConfigError(str(exc))
    print(f"T(rho,nu) = {_fmt(fwd)}")
    print(f"T(nu,rho) = {_fmt(bwd)}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        outputs = []
        if args.grid > 0:
            grid = np.linspace(0.0, 1.0, args.grid)
            path = os.path.join(args.out, "twopoint_grid.csv")
            with open(path, "w", newline="\n") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["rho0", "nu0", "T"])
                for r0 in grid:
                    for n0 in grid:
                        d = two_point_distance(alpha, p, q, [r0, 1 - r0], [n0, 1 - n0])
                        writer.writerow([_fmt(r0), _fmt(n0), _fmt(d)])
            outputs.append("twopoint_grid.csv")
        cfg_echo = {"alpha": alpha, "p": p, "q": q, "rho": rho.tolist(), "nu": nu.tolist(),
                    "grid": args.grid}
        write_manifest(args.out, "twopoint", cfg_echo, args.seed, outputs + ["manifest.json"])
    return 0


def _run_assumptions(args) -> int:
    cfg = load_config(args.config, args.set)
    g, mu = build_graph(cfg, args.seed)
    eps_grid = cfg.get("eps_grid", list(DEFAULT_EPS_GRID))
    report = check_assumptions(g, mu, eps_grid)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "assumptions.json"), "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
    write_manifest(args.out, "assumptions", cfg, args.seed,
                   ["assumptions.json", "manifest.json"])
    print(f"assumptions: c_eta={report.c_eta:.6g} c_eta_prime={report.c_eta_prime:.6g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="graphflow",
        description="Interaction-energy gradient flows on graphs: simulation, "
                    "quasi-metric solves, diagnostics and convergence experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted keys, repeatable)")

    common(sub.add_parser("simulate", help="integrate the dynamics"))
    common(sub.add_parser("distance", help="pairwise quasi-metric matrix"))
    common(sub.add_parser("degiorgi", help="variational diagnostics of a recorded run"))
    common(sub.add_parser("converge", help="sampling convergence study"))
    common(sub.add_parser("locallimit", help="localization vs finite-volume reference"))
    common(sub.add_parser("assumptions", help="weight/measure assumption constants"))

    tp = sub.add_parser("twopoint", help="closed-form two-point quasi-metric")
    tp.add_argument("--alpha", type=float, required=True)
    tp.add_argument("--p", type=float, required=True)
    tp.add_argument("--q", type=float, required=True)
    tp.add_argument("--rho", required=True, help="rho0,rho1")
    tp.add_argument("--nu", required=True, help="nu0,nu1")
    tp.add_argument("--grid", type=int, default=0,
                    help="also write an N x N (rho0, nu0) distance grid CSV")
    tp.add_argument("--out", default=None)
    tp.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    handlers = {
        "simulate": _run_simulate,
        "distance": _run_distance,
        "degiorgi": _run_degiorgi,
        "converge": _run_converge,
        "locallimit": _run_locallimit,
        "twopoint": _run_twopoint,
        "assumptions": _run_assumptions,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StepRejectedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
