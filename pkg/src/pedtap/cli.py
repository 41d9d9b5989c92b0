"""``pedtap`` command-line driver.

Exit codes: 0 success, 1 partial success, 2 invalid input, 3 unreachable
demand, 4 fit divergence.  Data goes to files under ``--out``; diagnostics go
to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path as FsPath

import numpy as np

from . import io
from .assignment import SolverConfig, solve, summary
from .calibration import (
    FitReport,
    critical_density,
    capacity,
    fit_pvdf,
    fit_sigma,
    fit_speed_law,
    quasi_density,
)
from .errors import FitDiverged, InvalidInput, PedtapError, Unreachable
from .netgen import GenConfig, close_links, generate
from .network import DemandTable
from .pvdf import AsymmetricParams, Family, PvdfConfig, SigmaParams, SymmetricParams

log = logging.getLogger("pedtap")

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID, EXIT_UNREACHABLE, EXIT_DIVERGED = 0, 1, 2, 3, 4


def _versions() -> dict:
    import scipy
    import shapely
    import yaml

    try:
        from importlib.metadata import version

        own = version("artifact")
    except Exception:  # not installed, running from a checkout
        own = "unknown"
    return {
        "pedtap": own,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "shapely": shapely.__version__,
        "pyyaml": yaml.__version__,
    }


def _overrides(args) -> dict:
    out: dict = {}
    if getattr(args, "family", None):
        out.setdefault("pvdf", {})["family"] = args.family
    if getattr(args, "max_iters", None) is not None:
        out.setdefault("solver", {})["max_iterations"] = args.max_iters
    if getattr(args, "gap_tol", None) is not None:
        out.setdefault("solver", {})["gap_tolerance"] = args.gap_tol
    if getattr(args, "seed", None) is not None:
        out.setdefault("solver", {})["seed"] = args.seed
    if getattr(args, "flow_scale", None) is not None:
        out.setdefault("network", {})["flow_scale"] = args.flow_scale
    return out


def _write_manifest(out: FsPath, command: str, inputs: dict, config: dict, started: float):
    manifest = {
        "command": command,
        "inputs": {name: {"path": str(p), "sha256": io.sha256_file(p)} for name, p in sorted(inputs.items())},
        "config": config,
        "seed": config.get("solver", {}).get("seed"),
        "versions": _versions(),
        "duration_s": round(time.perf_counter() - started, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _solver_config(config: dict) -> SolverConfig:
    s = config["solver"]
    return SolverConfig(
        max_iterations=int(s["max_iterations"]),
        gap_tolerance=float(s["gap_tolerance"]),
        samples_per_iteration=int(s["samples_per_iteration"]),
        seed=int(s["seed"]),
    )


def _write_assignment(out: FsPath, network, result):
    io.write_link_results(result, out / "link_results.csv")
    io.write_paths(result, network, out / "paths.csv")
    io.write_gap_history(result, out / "gap_history.csv")
    io.write_kv(summary(result), out / "summary.txt")
    if not result.converged:
        log.warning("not converged after %d iterations (gap %.3e)", result.iterations, result.final_gap)


def _run_assignment(out: FsPath, network, demand: DemandTable, config: dict):
    pvdf = PvdfConfig.from_dict(config["pvdf"])
    result = solve(network, demand, pvdf, _solver_config(config))
    _write_assignment(out, network, result)
    inputs = out / "inputs"
    inputs.mkdir(exist_ok=True)
    io.write_network(network, inputs)
    io.write_demand(demand, inputs / "demand.csv")
    io.dump_yaml(config, inputs / "config.yaml")
    return result


# -- commands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    started = time.perf_counter()
    config = io.load_config(args.config, _overrides(args))
    lines = io.read_centerlines(args.geometry)
    network, report = generate(lines, GenConfig(**config["netgen"]))
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_network(network, out)
    io.write_links_geojson(network, out / "links.geojson", report.geometry)
    (out / "gen_report.txt").write_text(report.to_text())
    _write_manifest(out, "generate", {"geometry": args.geometry}, config, started)
    for fid, reason in report.dropped:
        print(f"dropped feature {fid}: {reason}", file=sys.stderr)
    if report.dropped and args.strict:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_assign(args) -> int:
    started = time.perf_counter()
    config = io.load_config(args.config, _overrides(args))
    network = io.read_network(args.nodes, args.links, float(config["network"]["flow_scale"]))
    demand = io.read_demand(args.demand, float(config["demand"]["period_s"]))
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _run_assignment(out, network, demand, config)
    inputs = {"nodes": args.nodes, "links": args.links, "demand": args.demand}
    if args.config:
        inputs["config"] = args.config
    _write_manifest(out, "assign", inputs, config, started)
    return EXIT_OK


def _apply_demand(demand: DemandTable, spec: dict) -> DemandTable:
    table = {(o, d): q for o, d, q in demand.entries}
    factor = float(spec.get("demand_multiplier", 1.0))
    table = {k: q * factor for k, q in table.items()}
    for row in spec.get("od_multipliers") or []:
        key = (int(row["origin"]), int(row["destination"]))
        if key not in table:
            raise InvalidInput(f"od_multipliers: unknown OD pair {key[0]}->{key[1]}")
        table[key] *= float(row["factor"])
    for row in spec.get("demand_override") or []:
        table[(int(row["origin"]), int(row["destination"]))] = float(row["demand_ped"])
    return DemandTable.from_pairs({k: q for k, q in table.items() if q > 0}, demand.period)


SCENARIO_KEYS = {"close_links", "demand_multiplier", "od_multipliers", "demand_override"}


def cmd_scenario(args) -> int:
    started = time.perf_counter()
    base = FsPath(args.base)
    inputs = base / "inputs"
    if not (inputs / "config.yaml").exists():
        raise InvalidInput(f"{base} is not an assign run directory (no inputs/config.yaml)")
    config = io.load_config(inputs / "config.yaml", _overrides(args))
    spec = io.load_yaml(args.scenario) or {}
    unknown = set(spec) - SCENARIO_KEYS
    if unknown:
        raise InvalidInput(f"unknown scenario keys {sorted(unknown)}")
    network = io.read_network(inputs / "nodes.csv", inputs / "links.csv", float(config["network"]["flow_scale"]))
    demand = io.read_demand(inputs / "demand.csv", float(config["demand"]["period_s"]))
    closed = [int(i) for i in spec.get("close_links") or []]
    if closed:
        network = close_links(network, closed)
    demand = _apply_demand(demand, spec)
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = _run_assignment(out, network, demand, config)
    base_volumes = io.read_link_results(base / "link_results.csv")
    new_volumes = dict(zip(result.link_ids.tolist(), result.link_volumes.tolist()))
    ids = sorted(set(base_volumes) | set(new_volumes))
    rows = []
    for lid in ids:
        b, s = base_volumes.get(lid, 0.0), new_volumes.get(lid, 0.0)
        rows.append((lid, b, s, s - b))
    io.write_rows(out / "link_delta.csv", ["link_id", "volume_base", "volume_scenario", "delta"], rows)
    _write_manifest(
        out,
        "scenario",
        {
            "base_results": base / "link_results.csv",
            "scenario": args.scenario,
            **{f"base_{p.stem}": p for p in sorted(inputs.glob("*.csv"))},
        },
        config,
        started,
    )
    return EXIT_OK


def _report_rows(name: str, rep: FitReport) -> dict:
    row = {"fit": name, **rep.params}
    row.update(rmse_sum=rep.rmse_sum, rmse_mean=rep.rmse_mean, r_squared=rep.r_squared,
               iterations=rep.iterations, converged=rep.converged)
    return row


def cmd_calibrate(args) -> int:
    started = time.perf_counter()
    config = io.load_config(args.config, _overrides(args))
    cal = config["calibration"]
    obs = io.read_observations(args.observations)
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kv: dict = {}
    rows: list[dict] = []
    status = EXIT_OK
    try:
        law = fit_speed_law(obs)
        kc, cap = critical_density(law), capacity(law)
        kv.update(u_f=law.u_f, theta=law.theta, speed_gamma=law.gamma, critical_density=kc, capacity=cap)
        if not obs.has_flows:
            split = float(cal["split"])
            q = quasi_density(obs.density, cap, kc)
            obs = obs.with_flows(split * q, (1 - split) * q)
        tau = float(cal["tau"])
        fits = {}
        for fam in (Family.DET_SYMMETRIC, Family.DET_ASYMMETRIC):
            fits[fam] = fit_pvdf(obs, fam, tau, cap)
            rows.append(_report_rows(fam.value, fits[fam]))
        sig = fit_sigma(obs, tau, cap, int(cal["n_bins"]), int(cal["min_per_bin"]))
        rows.append(_report_rows("sigma", sig))
    except FitDiverged as exc:
        print(str(exc), file=sys.stderr)
        status = EXIT_DIVERGED
    for row in rows:
        for k, v in row.items():
            if k != "fit":
                kv[f"{row['fit']}.{k}"] = v
    io.write_kv(kv, out / "fit_report.txt")
    fields = sorted({k for r in rows for k in r} - {"fit"})
    io.write_rows(out / "fit_report.csv", ["fit"] + fields, ([r["fit"]] + [r.get(k, "") for k in fields] for r in rows))
    if status == EXIT_OK:
        params = PvdfConfig(
            Family(config["pvdf"]["family"]),
            SymmetricParams(**fits[Family.DET_SYMMETRIC].params),
            AsymmetricParams(**fits[Family.DET_ASYMMETRIC].params),
            SigmaParams(**sig.params),
        )
        io.dump_yaml({"pvdf": params.to_dict()}, out / "params.yaml")
    _write_manifest(out, "calibrate", {"observations": args.observations}, config, started)
    return status


def cmd_report(args) -> int:
    run = FsPath(args.run)
    found = False
    for name in ("summary.txt", "gen_report.txt", "fit_report.txt"):
        p = run / name
        if p.exists():
            found = True
            print(f"[{name}]")
            print(p.read_text(), end="")
    links = run / "link_results.csv"
    if links.exists():
        vols = io.read_link_results(links)
        top = sorted(vols.items(), key=lambda kv: (-kv[1], kv[0]))[: args.top]
        print(f"[top {len(top)} links by volume]")
        for lid, v in top:
            print(f"{lid} = {io.fmt(v)}")
    delta = run / "link_delta.csv"
    if delta.exists():
        rows = io.read_rows(delta, ["link_id", "delta"])
        moved = sorted(rows, key=lambda r: (-abs(float(r["delta"])), int(r["link_id"])))[: args.top]
        print(f"[top {len(moved)} volume changes]")
        for r in moved:
            print(f"{r['link_id']} = {r['delta']}")
    if not found:
        raise InvalidInput(f"{run} holds no pedtap outputs")
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def _shared(p: argparse.ArgumentParser, solver: bool = False):
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_true", help="treat dropped features as failure (exit 1)")
    if solver:
        p.add_argument("--family", choices=[f.value for f in Family])
        p.add_argument("--max-iters", type=int)
        p.add_argument("--gap-tol", type=float)
        p.add_argument("--flow-scale", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pedtap", description="Pedestrian traffic assignment toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="footpath network from road centerlines")
    p.add_argument("geometry", help="GeoJSON or CSV (id,wkt_linestring,road_class)")
    _shared(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("assign", help="user-equilibrium assignment")
    p.add_argument("--nodes", required=True)
    p.add_argument("--links", required=True)
    p.add_argument("--demand", required=True)
    _shared(p, solver=True)
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("scenario", help="re-solve a previous assign run with closures or demand changes")
    p.add_argument("base", help="directory written by assign")
    p.add_argument("scenario", help="YAML scenario spec")
    _shared(p, solver=True)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("calibrate", help="fit speed law, pVDFs and sigma to observations")
    p.add_argument("observations")
    _shared(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", help="print the key results of a run directory")
    p.add_argument("run")
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except Unreachable as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_UNREACHABLE
    except FitDiverged as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DIVERGED
    except PedtapError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
