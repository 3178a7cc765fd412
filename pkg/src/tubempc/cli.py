"""Command-line surface: synthesis, RPI method comparison, simulation
batches, and feasibility scans.

Exit codes: 0 success, 1 input validation error, 2 computation failure (the
failing synthesis stage is named in the message). Progress goes to stderr,
reports to stdout; --quiet silences the progress stream.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .controller import (ControllerArtifact, build_error_system,
                         concretize_delta, synthesize)
from .errors import ProblemFormatError, RpiFailure, TubeMpcError
from .geometry import HPolytope, is_subset, remove_redundancy, support
from .lti import lqr_gain, observer_gain, solve_dare
from .problem_io import (config_from_problem, eps_list_from_problem,
                         error_system_from_problem, load_problem,
                         plant_from_problem, sim_config_from_problem)
from .rpi import (ErrorSystem, compute_rpi, container_recursion,
                  polygon_faces, smallest_rpi_offsets)
from .simulate import audit, feasible_region_scan, run_closed_loop, scan_to_csv


def _info(args, msg: str):
    if not args.quiet:
        print(msg, file=sys.stderr)


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _config_with_env_tol(problem):
    config = config_from_problem(problem)
    env = os.environ.get("TUBEMPC_SOLVER_TOL")
    if env is not None:
        config = replace(config, tol=float(env))
    return config


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*r) for r in rows]
    return "\n".join(lines)


def cmd_synthesize(args) -> int:
    problem = load_problem(args.problem)
    plant = plant_from_problem(problem)
    config = _config_with_env_tol(problem)
    _info(args, f"synthesizing controller for problem '{problem['name']}'")
    t0 = time.perf_counter()
    artifact = synthesize(plant, config)
    _info(args, f"synthesis finished in {time.perf_counter() - t0:.2f} s "
                f"(tube k={artifact.tube.k}, {artifact.tube.set.n_rows} rows)")
    artifact.save(args.out)

    rows = []
    for label, orig, tight in (("Z", plant.Z, artifact.Z_tight),
                               ("U", plant.U, artifact.U_tight)):
        for i, (b0, b1) in enumerate(zip(orig.b, tight.b)):
            cut = b0 - b1
            rows.append([f"{label}[{i}]", f"{b0:.6g}", f"{b1:.6g}",
                         f"{cut:.6g}", f"{100.0 * cut / b0:.3f}%"])
    print(f"artifact written to {args.out}")
    print(_format_table(["constraint", "offset", "tightened", "reduction", "pct"], rows))
    return 0


def _comparison_error_system(problem, args) -> ErrorSystem:
    es = error_system_from_problem(problem)
    if es is not None:
        return es
    # no standalone block: derive the coupled error system from the plant,
    # forcing the box disturbance form the container methods require
    plant = plant_from_problem(problem)
    config = _config_with_env_tol(problem)
    s = plant.sys
    solve_dare(s.A, s.B, config.Q, config.R)
    K = config.K if config.K is not None else lqr_gain(s.A, s.B, config.Q, config.R)
    L = (config.L if config.L is not None
         else observer_gain(s.A, s.C, config.Q_obs, config.R_obs))
    es = build_error_system(plant, K, L)
    dist = concretize_delta(es.disturbance, "box", config.eta)
    _info(args, "rpi_system block absent; comparing on the plant's coupled "
                "error system with box disturbance")
    return ErrorSystem(es.A, es.E, dist, es.output_bounds)


def cmd_rpi_compare(args) -> int:
    problem = load_problem(args.problem)
    if args.eps:
        try:
            eps_list = [float(t) for t in args.eps.split(",") if t]
        except ValueError:
            return _fail(f"--eps must be a comma-separated float list, got {args.eps!r}", 1)
        if any(e <= 0 for e in eps_list):
            return _fail("--eps values must be positive", 1)
    else:
        eps_list = eps_list_from_problem(problem)
    es = _comparison_error_system(problem, args)
    E_T = es.E.T
    directions = [E_T @ h for h in es.output_bounds.H]

    def deltas(candidate: HPolytope, baseline: HPolytope) -> list[float]:
        out = []
        for d in directions:
            s_base, _ = support(baseline, d)
            s_cand, _ = support(candidate, d)
            if s_base <= 1e-12:
                out.append(0.0 if s_cand <= 1e-12 else float("inf"))
            else:
                out.append(100.0 * (s_cand - s_base) / s_base)
        return out

    lines = ["eps,method,k,n_rows,wall_time_s,direction,delta_pct"]
    summary_rows = []
    for eps in eps_list:
        _info(args, f"eps={eps}: running container recursion")
        t0 = time.perf_counter()
        P_inf, kbar = container_recursion(es, eps)
        t_rec = time.perf_counter() - t0
        _info(args, f"eps={eps}: recursion fixed point after k={kbar}; "
                    f"running the stacked-normal LP at the same k")
        t0 = time.perf_counter()
        R = compute_rpi(es, kbar)
        t_lp = time.perf_counter() - t0
        nested = is_subset(R.set, P_inf)

        methods = [("stacked_lp", R.set, kbar, t_lp, [0.0] * len(directions)),
                   ("container_recursion", P_inf, kbar, t_rec, deltas(P_inf, R.set))]
        if es.n == 2:
            t0 = time.perf_counter()
            try:
                H_gon = polygon_faces(R.set.n_rows)
                b_gon, _ = smallest_rpi_offsets(H_gon, es)
                P_gon = remove_redundancy(HPolytope(H_gon, b_gon))
                methods.append(("polygon_lp", P_gon, R.set.n_rows,
                                time.perf_counter() - t0, deltas(P_gon, R.set)))
            except RpiFailure as exc:
                _info(args, f"eps={eps}: polygon comparison failed: {exc}")
        else:
            _info(args, "polygon comparison skipped: ambient dimension is "
                        f"{es.n}, the regular-polygon parameterization is 2-D only")

        for method, poly, k, wall, dl in methods:
            for j, d in enumerate(dl):
                lines.append(f"{eps},{method},{k},{poly.n_rows},"
                             f"{repr(float(wall))},{j},{repr(float(d))}")
            summary_rows.append([f"{eps:g}", method, str(k), str(poly.n_rows),
                                 f"{wall:.3f}", f"{max(dl):+.4f}%",
                                 {"stacked_lp": "-"}.get(method, str(nested))])

    with open(args.out, "w") as f:
        f.write("\n".join(lines) + "\n")
    print(f"comparison written to {args.out}")
    print(_format_table(
        ["eps", "method", "k", "rows", "time_s", "max_delta", "contains_lp_set"],
        summary_rows))
    return 0


def _load_artifact(path) -> ControllerArtifact:
    try:
        artifact = ControllerArtifact.load(path)
    except FileNotFoundError:
        raise ProblemFormatError(f"artifact file not found: {path}")
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ProblemFormatError(f"artifact file invalid: {exc}")
    artifact.validate()
    return artifact


def _sim_worker(payload):
    idx, plant, artifact, cfg = payload
    log = run_closed_loop(plant, artifact, cfg)
    return idx, log.to_csv(), audit(log, plant, artifact)


def cmd_simulate(args) -> int:
    problem = load_problem(args.problem)
    plant = plant_from_problem(problem)
    artifact = _load_artifact(args.artifact)
    base_cfg, default_runs = sim_config_from_problem(problem, seed=args.seed)
    runs = args.runs if args.runs is not None else default_runs
    os.makedirs(args.out, exist_ok=True)

    payloads = [(i, plant, artifact, replace(base_cfg, seed=base_cfg.seed + i))
                for i in range(runs)]
    _info(args, f"running {runs} closed-loop simulations "
                f"({base_cfg.steps} steps each, base seed {base_cfg.seed})")
    results = [None] * runs
    workers = min(os.cpu_count() or 1, 8)
    if runs >= 8 and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, csv_text, report in pool.map(_sim_worker, payloads, chunksize=8):
                results[idx] = (csv_text, report)
    else:
        for payload in payloads:
            idx, csv_text, report = _sim_worker(payload)
            results[idx] = (csv_text, report)

    reports = []
    for i, (csv_text, report) in enumerate(results):
        with open(os.path.join(args.out, f"run_{i:04d}.csv"), "w") as f:
            f.write(csv_text)
        reports.append(report)

    lams = [r["decay"]["lambda"] for r in reports if r["decay"]["n_points"] >= 2]
    summary = {
        "runs": runs,
        "steps": base_cfg.steps,
        "base_seed": base_cfg.seed,
        "rng": reports[0]["rng_id"] if reports else "",
        "total_violations": int(sum(r["n_violations"] for r in reports)),
        "qp_all_optimal": bool(all(r["qp_all_optimal"] for r in reports)),
        "mean_cost": float(np.mean([r["cost"] for r in reports])),
        "max_cost": float(np.max([r["cost"] for r in reports])),
        "decay": {
            "mean_lambda": float(np.mean(lams)) if lams else 0.0,
            "max_lambda": float(np.max(lams)) if lams else 0.0,
            "min_r2": float(np.min([r["decay"]["r2"] for r in reports])),
        },
        "per_run": [{"violations": r["n_violations"], "cost": r["cost"],
                     "lambda": r["decay"]["lambda"], "r2": r["decay"]["r2"]}
                    for r in reports],
    }
    summary_path = os.path.join(args.out, "summary.json")
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2)
    print(f"wrote {runs} run logs and {summary_path}")
    print(f"violations: {summary['total_violations']}, "
          f"qp_all_optimal: {summary['qp_all_optimal']}, "
          f"mean cost: {summary['mean_cost']:.6g}")
    return 0


def _parse_grid(spec: str, n: int) -> list[tuple[float, float, int]]:
    axes = []
    for part in spec.split(","):
        pieces = part.split(":")
        if len(pieces) != 3:
            raise ProblemFormatError(
                f"grid axis {part!r} must look like min:max:count")
        lo, hi, count = float(pieces[0]), float(pieces[1]), int(pieces[2])
        if count < 1 or hi < lo:
            raise ProblemFormatError(f"grid axis {part!r} is not a valid range")
        axes.append((lo, hi, count))
    if len(axes) != n:
        raise ProblemFormatError(
            f"grid has {len(axes)} axes but the state dimension is {n}")
    return axes


def cmd_feasible(args) -> int:
    load_problem(args.problem)  # validated for consistency with the artifact
    artifact = _load_artifact(args.artifact)
    axes = _parse_grid(args.grid, artifact.plant.sys.n)
    _info(args, f"scanning {np.prod([c for _, _, c in axes])} grid points")
    scan = feasible_region_scan(artifact, axes)
    scan_to_csv(scan, args.out)
    feasible = int(scan[:, -1].sum())
    print(f"scan written to {args.out} ({feasible} of {scan.shape[0]} points feasible)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubempc",
        description="Tube-based robust output-feedback MPC toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--problem", required=True, help="problem JSON file")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output on stderr")

    p = sub.add_parser("synthesize", help="synthesize a controller artifact")
    common(p)
    p.add_argument("--out", required=True, help="artifact JSON output path")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("rpi-compare",
                       help="compare RPI construction methods on one system")
    common(p)
    p.add_argument("--eps", default="",
                   help="comma-separated accuracy values (default: problem file)")
    p.add_argument("--out", required=True, help="comparison CSV output path")
    p.set_defaults(func=cmd_rpi_compare)

    p = sub.add_parser("simulate", help="batch closed-loop simulation")
    common(p)
    p.add_argument("--artifact", required=True, help="controller artifact JSON")
    p.add_argument("--runs", type=int, default=None,
                   help="number of runs (default: problem file)")
    p.add_argument("--seed", type=int, default=None,
                   help="base seed; run i uses seed+i (default: problem file)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("feasible", help="feasibility scan over initial states")
    common(p)
    p.add_argument("--artifact", required=True, help="controller artifact JSON")
    p.add_argument("--grid", required=True,
                   help="per-axis min:max:count, comma-separated")
    p.add_argument("--out", required=True, help="scan CSV output path")
    p.set_defaults(func=cmd_feasible)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProblemFormatError as exc:
        return _fail(str(exc), 1)
    except TubeMpcError as exc:
        return _fail(str(exc), 2)
