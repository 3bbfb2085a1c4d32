"""Command-line interface.

    foldsim run <scenario.json> [...] [--out DIR] [--seed N] [--sequential]
                [--max-steps N] [--parallel N]
    foldsim verify <scenario.json> [--states N]
    foldsim list

Exit codes: 0 success, 2 scenario schema error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ScenarioError, SolverError
from .scenario import build_scenario, parse_scenario, run_scenario
from .solver import fd_verify

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_SOLVER = 3


def shipped_scenarios():
    """Mapping name -> path for the scenario files shipped in the package."""
    out = {}
    root = resources.files("foldsim") / "scenarios"
    for entry in sorted(root.iterdir()):
        if entry.name.endswith(".json"):
            out[entry.name[:-5]] = entry
    return out


def _locate(spec):
    p = Path(spec)
    if p.exists():
        return p
    shipped = shipped_scenarios()
    if spec in shipped:
        return shipped[spec]
    raise FileNotFoundError(f"no scenario file or shipped scenario {spec!r}")


def _cmd_run(args):
    rc = EXIT_OK
    jobs = []
    for spec in args.scenario:
        try:
            path = _locate(spec)
            sc = parse_scenario(path)
        except ScenarioError as exc:
            print(f"schema error in {spec}: {exc}", file=sys.stderr)
            return EXIT_SCHEMA
        except FileNotFoundError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_SCHEMA
        jobs.append(sc)

    def one(sc):
        out = Path(args.out) / sc.name if args.out else None
        summary, _, _ = run_scenario(sc, out_dir=out, seed=args.seed,
                                     max_steps=args.max_steps,
                                     sequential=args.sequential)
        return summary

    if args.parallel and len(jobs) > 1:
        import multiprocessing as mp
        with mp.Pool(args.parallel) as pool:
            summaries = pool.map(_run_job, [(sc, args) for sc in jobs])
    else:
        summaries = [one(sc) for sc in jobs]

    for summary in summaries:
        ok = summary["status"] == "ok"
        print(f"[{'ok' if ok else 'FAIL'}] {summary['name']}: "
              f"{summary['n_records']} records, "
              f"t={summary['final_time']:.4g}, "
              f"wall={summary['wall_time_s']:.1f}s"
              + ("" if ok else f"  ({summary['error']})"))
        if not ok:
            rc = EXIT_SOLVER
    return rc


def _run_job(packed):
    sc, args = packed
    out = Path(args.out) / sc.name if args.out else None
    summary, _, _ = run_scenario(sc, out_dir=out, seed=args.seed,
                                 max_steps=args.max_steps)
    return summary


def _cmd_verify(args):
    try:
        sc = parse_scenario(_locate(args.scenario))
    except ScenarioError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    built = build_scenario(sc)
    model = built.model
    rng = np.random.default_rng(args.seed)
    q0 = model.rest_state()
    scale = built.mesh.bbox_scale() or 1.0
    worst_g = 0.0
    worst_t = 0.0
    rep = fd_verify(model, q0, "gradient")
    print(f"rest state: gradient abs error {rep['max_abs_error']:.3e}")
    for i in range(args.states):
        q = q0 + 0.02 * scale * rng.normal(size=q0.shape)
        rg = fd_verify(model, q, "gradient")
        worst_g = max(worst_g, rg["rel_error"])
        rt = fd_verify(model, q, "tangent")
        worst_t = max(worst_t, rt["rel_error"])
    print(f"{args.states} random states: gradient rel error {worst_g:.3e}, "
          f"tangent rel error {worst_t:.3e}")
    ok = worst_g < 1e-6 and worst_t < 1e-4
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_SOLVER


def _cmd_list(args):
    for name in shipped_scenarios():
        print(name)
    return EXIT_OK


def main(argv=None):
    ap = argparse.ArgumentParser(prog="foldsim")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one or more scenarios")
    p_run.add_argument("scenario", nargs="+",
                       help="scenario file path or shipped scenario name")
    p_run.add_argument("--out", default=None, help="output directory root")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--sequential", action="store_true",
                       help="force deterministic sequential assembly "
                            "(always on; flag kept for interface stability)")
    p_run.add_argument("--max-steps", type=int, default=None)
    p_run.add_argument("--parallel", type=int, default=0,
                       help="run independent scenarios in N processes")
    p_run.set_defaults(func=_cmd_run)

    p_ver = sub.add_parser("verify",
                           help="finite-difference check of the scenario's "
                                "model gradient and tangent")
    p_ver.add_argument("scenario")
    p_ver.add_argument("--states", type=int, default=10)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.set_defaults(func=_cmd_verify)

    p_list = sub.add_parser("list", help="list shipped scenarios")
    p_list.set_defaults(func=_cmd_list)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
