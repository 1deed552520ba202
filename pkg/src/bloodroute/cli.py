"""Command-line surface.

Subcommands: gen (synthesize an instance), solve (column-generation runs
with a summary), validate (feasibility check of a solution file), oracle
(exact optimum on tiny instances), metrics (Imp/SR/DG from run summaries),
export-lp (full model in LP format), plot (tour map or convergence SVG).

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 internal or
numerical failure.  All randomness derives from --seed; BLOODROUTE_THREADS
caps the worker count for multi-run solves.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import colgen
from .colgen import CGParams, Solution
from .gen import GenConfig, generate_instance
from .lp import LPError
from .memetic import MAParams
from .model import Instance, ModelError, ParseError, load_instance, save_instance
from .oracle import brute_force, export_milp
from .plot import convergence_svg, read_ma_trace_csv, solution_svg, write_ma_trace_csv
from .pool import PoolParams
from .schedule import validate_solution

SUMMARY_MAGIC = "bloodroute-summary 1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads(runs: int) -> int:
    env = os.environ.get("BLOODROUTE_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, runs))


def _derived_seed(base: int, run: int) -> int:
    return int(np.random.SeedSequence(base).spawn(run + 1)[run].generate_state(1)[0])


def _solve_one(args):
    (inst_text, mode_drone, run, base_seed, ma_kw, pool_kw, cg_kw, want_ma_trace) = args
    from .model import loads_instance

    inst = loads_instance(inst_text)
    cg = CGParams(seed=_derived_seed(base_seed, run), **cg_kw)
    sol, ma_trace = _solve_with_traces(inst, PoolParams(**pool_kw), MAParams(**ma_kw),
                                       cg, mode_drone, want_ma_trace)
    return run, sol.objective, colgen.dumps_solution(sol), sol.trace, ma_trace


def _solve_with_traces(inst, pool_params, ma_params, cg_params, drone, want_ma_trace):
    sol = colgen.solve(inst, pool_params, ma_params, cg_params, drone=drone)
    ma_trace = []
    if want_ma_trace:
        from .memetic import run_ma_full
        from .pool import build_pool

        ss = np.random.SeedSequence(cg_params.seed)
        child = ss.spawn(2)
        pool = build_pool(inst, pool_params, np.random.default_rng(child[0]), drone=drone)
        res = run_ma_full(inst, pool, None, ma_params, np.random.default_rng(child[1]),
                          drone=drone, trace=True)
        ma_trace = res.trace
    return sol, ma_trace


def _fmt_summary(instance_path, mode, runs, seed, objectives):
    arr = np.array(objectives, dtype=np.float64)
    mean = float(arr.mean())
    cv = float(arr.std() / mean) if mean != 0 else 0.0
    lines = [
        SUMMARY_MAGIC,
        f"instance {instance_path}",
        f"mode {mode}",
        f"runs {runs}",
        f"seed {seed}",
        "objectives " + " ".join(str(int(o)) for o in objectives),
        f"best {int(arr.max())}",
        f"worst {int(arr.min())}",
        f"mean {mean:.6f}",
        f"cv {cv:.6f}",
    ]
    return "\n".join(lines) + "\n"


def _parse_summary(path):
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != SUMMARY_MAGIC:
            raise ParseError(f"expected header '{SUMMARY_MAGIC}'", 1)
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "objectives":
                out["objectives"] = [int(v) for v in tok[1:]]
            elif tok[0] in ("best", "worst", "runs", "seed"):
                out[tok[0]] = int(tok[1])
            elif tok[0] in ("mean", "cv"):
                out[tok[0]] = float(tok[1])
            else:
                out[tok[0]] = tok[1] if len(tok) > 1 else ""
    return out


def _mode_flag(inst: Instance, mode: str) -> bool:
    if mode == "drone":
        return True
    if mode == "truck":
        return False
    return inst.drone_enabled


# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = GenConfig(
        n_sites=args.sites, fleet_size=args.fleet, seed=args.seed, alpha=args.alpha,
        drone_capacity=args.capacity, drone_endurance=args.endurance,
        horizon_start=args.horizon[0], horizon_end=args.horizon[1], ptl=args.ptl,
        drone_enabled=not args.no_drone,
    )
    inst = generate_instance(cfg)
    save_instance(inst, args.out)
    return 0


def _ma_kwargs(args):
    return dict(gen_limit=args.gen_limit, pop_size=args.pop_size, ref_iter=args.ref_iter,
                mu_rate=args.mu_rate, mu_volume=args.mu_volume)


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    mode_drone = _mode_flag(inst, args.mode)
    mode_name = "drone" if mode_drone else "truck"
    os.makedirs(args.out_dir, exist_ok=True)
    ma_kw = _ma_kwargs(args)
    pool_kw = dict(pool_size=args.pool_size, div_limit=args.div_limit)
    cg_kw = dict(max_iterations=args.max_iterations, columns_per_round=args.columns_per_round)

    if args.sweep:
        field, lo, hi = _parse_sweep(args.sweep)
        rows = []
        for val in range(lo, hi + 1):
            swept = dataclasses.replace(inst, fleet_size=val)
            objs = _run_many(swept, mode_drone, args.runs, args.seed, ma_kw, pool_kw,
                             cg_kw, args.out_dir, write_files=False, trace=False)
            arr = np.array(objs, dtype=np.float64)
            cv = float(arr.std() / arr.mean()) if arr.mean() != 0 else 0.0
            rows.append((val, int(arr.max()), float(arr.mean()), cv))
        path = os.path.join(args.out_dir, "sweep.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{field},best,mean,cv\n")
            for val, best, mean, cv in rows:
                fh.write(f"{val},{best},{mean:.6f},{cv:.6f}\n")
        print(f"sweep written to {path}")
        return 0

    t0 = time.time()
    objs = _run_many(inst, mode_drone, args.runs, args.seed, ma_kw, pool_kw, cg_kw,
                     args.out_dir, write_files=True, trace=args.trace)
    wall = time.time() - t0
    summary = _fmt_summary(args.instance, mode_name, args.runs, args.seed, objs)
    with open(os.path.join(args.out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary)
    print(summary, end="")
    print(f"wall_time_sec {wall:.3f}")
    return 0


def _run_many(inst, mode_drone, runs, seed, ma_kw, pool_kw, cg_kw, out_dir,
              write_files, trace):
    from .model import dumps_instance

    inst_text = dumps_instance(inst)
    jobs = [(inst_text, mode_drone, r, seed, ma_kw, pool_kw, cg_kw, trace)
            for r in range(runs)]
    workers = _threads(runs)
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_solve_one, jobs))
    else:
        results = [_solve_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    objs = []
    for run, obj, sol_text, cg_trace, ma_trace in results:
        objs.append(obj)
        if write_files:
            with open(os.path.join(out_dir, f"run_{run}.sol"), "w", encoding="utf-8") as fh:
                fh.write(sol_text)
            if trace:
                colgen.write_trace_csv(cg_trace, os.path.join(out_dir, f"run_{run}_cg.csv"))
                write_ma_trace_csv(ma_trace, os.path.join(out_dir, f"run_{run}_ma.csv"))
    return objs


def _parse_sweep(spec: str):
    try:
        field, _, rng = spec.partition("=")
        lo, _, hi = rng.partition("..")
        if field.strip() != "fleet":
            raise ValueError("only fleet sweeps are supported")
        return "fleet", int(lo), int(hi)
    except ValueError as exc:
        raise UsageError(f"bad --sweep '{spec}': {exc}")


def cmd_validate(args) -> int:
    inst = load_instance(args.instance)
    sol = colgen.load_solution(args.solution)
    violations = validate_solution(sol.tours, inst, sol.claim_records())
    counts = {(s.id, t): c for s in inst.sites for t, c in s.donations}
    recount = sum(counts.get(b, 0) for b in sol.assignment)
    if recount != sol.objective:
        violations.append(
            f"objective {sol.objective} does not match recomputed viable units {recount}")
    if violations:
        for v in violations:
            print(v)
        return 2
    print("OK")
    return 0


def cmd_oracle(args) -> int:
    inst = load_instance(args.instance)
    obj, sol = brute_force(inst, drone=_mode_flag(inst, args.mode))
    print(obj)
    if args.out:
        colgen.write_solution(sol, args.out)
    return 0


def cmd_metrics(args) -> int:
    summary = _parse_summary(args.summary)
    objs = summary["objectives"]
    best = max(objs)
    lines = ["bloodroute-metrics 1"]
    if args.ref is not None:
        z_ref = args.ref
        imp = 100.0 * (summary["mean"] - z_ref) / z_ref
        lines.append(f"imp_pct {imp:.6f}")
    best_known = args.best_known if args.best_known is not None else best
    qualified = sum(1 for o in objs if o >= (1.0 - 0.02) * best_known)
    lines.append(f"sr {qualified / len(objs):.6f}")
    if args.truck_summary:
        truck = _parse_summary(args.truck_summary)
        z_truck = max(truck["objectives"])
        dg = 100.0 * (best - z_truck) / z_truck
        lines.append(f"dg_pct {dg:.6f}")
    report = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report)
    print(report, end="")
    return 0


def cmd_export_lp(args) -> int:
    inst = load_instance(args.instance)
    export_milp(inst, args.out, drone=_mode_flag(inst, args.mode))
    return 0


def cmd_plot(args) -> int:
    if args.trace:
        rows = read_ma_trace_csv(args.trace)
        svg = convergence_svg(rows)
    else:
        if not (args.instance and args.solution):
            raise UsageError("plot needs either --trace or --instance with --solution")
        inst = load_instance(args.instance)
        sol = colgen.load_solution(args.solution)
        svg = solution_svg(inst, sol)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="bloodroute", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="synthesize a benchmark instance")
    g.add_argument("--sites", type=int, required=True)
    g.add_argument("--fleet", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--alpha", type=float, default=2.0)
    g.add_argument("--capacity", type=int, default=10)
    g.add_argument("--endurance", type=int, default=30)
    g.add_argument("--horizon", type=int, nargs=2, default=(0, 800))
    g.add_argument("--ptl", type=int, default=300)
    g.add_argument("--no-drone", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="column-generation solve with R runs")
    s.add_argument("--instance", required=True)
    s.add_argument("--mode", choices=["truck", "drone", "auto"], default="auto")
    s.add_argument("--runs", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--trace", action="store_true")
    s.add_argument("--sweep", help="batch sweep, e.g. fleet=1..10")
    s.add_argument("--gen-limit", type=int, default=1000)
    s.add_argument("--pop-size", type=int, default=140)
    s.add_argument("--ref-iter", type=int, default=16)
    s.add_argument("--mu-rate", type=float, default=0.3)
    s.add_argument("--mu-volume", type=float, default=0.3)
    s.add_argument("--pool-size", type=int, default=500_000)
    s.add_argument("--div-limit", type=int, default=1)
    s.add_argument("--max-iterations", type=int, default=200)
    s.add_argument("--columns-per-round", type=int, default=5)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="check a solution file against an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--solution", required=True)
    v.set_defaults(func=cmd_validate)

    o = sub.add_parser("oracle", help="exact optimum for tiny instances")
    o.add_argument("--instance", required=True)
    o.add_argument("--mode", choices=["truck", "drone", "auto"], default="auto")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    m = sub.add_parser("metrics", help="Imp/SR/DG from run summaries")
    m.add_argument("--summary", required=True)
    m.add_argument("--ref", type=float)
    m.add_argument("--best-known", type=float)
    m.add_argument("--truck-summary")
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)

    e = sub.add_parser("export-lp", help="write the full model in LP format")
    e.add_argument("--instance", required=True)
    e.add_argument("--mode", choices=["truck", "drone", "auto"], default="auto")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export_lp)

    pl = sub.add_parser("plot", help="tour map or convergence SVG")
    pl.add_argument("--instance")
    pl.add_argument("--solution")
    pl.add_argument("--trace")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ModelError, ParseError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (LPError, RuntimeError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
