"""Column-generation driver.

Seeds columns from a unit-weight memetic run, then alternates restricted
master solves with memetic pricing on the dual prices, harvesting a few
positive-reduced-cost columns per round.  The loop stops when pricing finds
nothing new, an iteration cap is reached, or the master objective stalls
while columns keep arriving.  A depth-first branch-and-bound over the
generated columns (master LP as the bound) restores integrality when the
final relaxation is fractional.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .engine import get_context
from .lp import Column, DualPrices, solve_rlmp
from .memetic import MAParams, run_ma_full
from .model import Instance, Sortie
from .pool import PoolParams, build_pool
from .schedule import DRONE, TRUCK, Route, Tour, assign_pickups, validate_solution


@dataclass
class CGParams:
    max_iterations: int = 200
    epsilon_rc: float = 1e-6
    columns_per_round: int = 5
    seed: int = 0
    stall_rounds: int = 10

    def __post_init__(self):
        if self.epsilon_rc <= 0:
            raise ValueError("epsilon_rc must be positive")
        if self.columns_per_round < 1:
            raise ValueError("columns_per_round must be >= 1")


@dataclass
class Solution:
    """A validated fleet plan: tours, batch assignment, and the search trace.

    ``claims`` mirrors ``assignment`` as a record list; files loaded from
    disk may carry duplicate batch claims there, which validation reports.
    """

    tours: list[Tour]
    objective: int
    assignment: dict  # (site, t) -> (tour_idx, route_idx, carrier)
    trace: list[tuple[int, float, int, float]] = field(default_factory=list)
    claims: Optional[list] = None

    def claim_records(self):
        return self.claims if self.claims is not None else list(self.assignment.items())


def fractional_check(values, tol: float = 1e-6) -> bool:
    """True iff every value is within ``tol`` of 0 or 1."""
    return all(min(abs(v), abs(1.0 - v)) <= tol for v in values)


def _coverage_value(cols: Sequence[Column], counts) -> int:
    covered = set()
    for c in cols:
        covered |= c.coverage
    return sum(counts[b] for b in covered)


def finalize_integer(columns: Sequence[Column], inst: Instance) -> list[Column]:
    """Exact optimum of the binary master problem over the generated columns
    (depth-first branch-and-bound with the LP relaxation as the bound)."""
    if not columns:
        return []
    counts = {(s.id, t): c for s in inst.sites for t, c in s.donations}
    uniq: dict[frozenset, Column] = {}
    for col in sorted(columns, key=lambda c: c.id):
        if col.coverage not in uniq:
            uniq[col.coverage] = col
    cols = [c for c in uniq.values()
            if not any(c.coverage < o.coverage for o in uniq.values())]
    fleet = inst.fleet_size

    best = {"val": -1, "set": []}

    def leaf(chosen):
        val = _coverage_value(chosen, counts)
        if val > best["val"]:
            best["val"] = val
            best["set"] = list(chosen)

    def recurse(forced: dict, excluded: frozenset):
        chosen = [c for c in cols if c.id in forced]
        leaf(chosen)
        free = [c for c in cols if c.id not in forced and c.id not in excluded]
        if not free or len(forced) >= fleet:
            return
        lambdas, deltas, _, obj = solve_rlmp(cols, inst, forced=forced, excluded=excluded)
        forced_val = _coverage_value(chosen, counts)
        if obj + forced_val <= best["val"] + 1e-9:
            return
        free_l = {c.id: lambdas[c.id] for c in free}
        if fractional_check(free_l.values()) and fractional_check(deltas.values()):
            sel = chosen + [c for c in free if free_l[c.id] > 0.5]
            leaf(sel[:fleet] if len(sel) > fleet else sel)
            return
        branch = max(free_l, key=lambda cid: min(free_l[cid], 1.0 - free_l[cid]))
        recurse({**forced, branch: 1}, excluded)
        recurse(forced, excluded | {branch})

    recurse({}, frozenset())
    return best["set"]


def _assemble(selected: Sequence[Column], inst: Instance) -> tuple[list[Tour], dict, int]:
    """Turn selected columns into a physical plan.

    Coverage sets may overlap (the master caps each batch at one unit);
    each batch goes to the earliest-completing claiming route, ties broken
    by tour then route index.
    """
    counts = {(s.id, t): c for s in inst.sites for t, c in s.donations}
    tours = [col.tour for col in selected]
    claims = {}
    for ti, tour in enumerate(tours):
        ev = assign_pickups(tour, None, inst)
        for (sid, t), (m, carrier) in ev.pickups.items():
            key = (ev.completions[m], ti, m)
            old = claims.get((sid, t))
            if old is None or key < old[0]:
                claims[(sid, t)] = (key, carrier)
    assignment = {batch: (ti, m, carrier) for batch, ((_, ti, m), carrier) in claims.items()}
    objective = sum(counts[b] for b in assignment)
    return tours, assignment, objective


def solve(inst: Instance, pool_params: PoolParams, ma_params: MAParams,
          cg_params: CGParams, drone: Optional[bool] = None) -> Solution:
    """Full column-generation solve; never returns an invalid plan."""
    drone_on = inst.drone_enabled if drone is None else drone
    if not any(s.donations for s in inst.sites):
        return Solution([], 0, {}, [])
    ctx = get_context(inst)
    ss = np.random.SeedSequence(cg_params.seed)
    child = ss.spawn(2 + cg_params.max_iterations)
    pool = build_pool(inst, pool_params, np.random.default_rng(child[0]), drone=drone_on)

    seed_res = run_ma_full(inst, pool, None, ma_params, np.random.default_rng(child[1]),
                           drone=drone_on, harvest_k=cg_params.columns_per_round,
                           harvest_eps=0.0)
    columns: list[Column] = []
    seen_cov: set[frozenset] = set()

    def add_column(mask, chrom) -> bool:
        cov = frozenset(_mask_to_batches(ctx, mask))
        if cov in seen_cov:
            return False
        seen_cov.add(cov)
        columns.append(Column(len(columns), cov, chrom.tour()))
        return True

    for fit, key, chrom, mask in seed_res.harvest:
        add_column(mask, chrom)
    if not columns:
        best = seed_res.best
        _, _, mask, _, _ = ctx.eval_claims_arrays(best.rids, best.starts, best.n,
                                                  ctx.unit_weights())
        add_column(mask, best)

    trace = []
    best_obj = -np.inf
    stall = 0
    lambdas = deltas = None
    for it in range(cg_params.max_iterations):
        lambdas, deltas, duals, obj = solve_rlmp(columns, inst)
        res = run_ma_full(inst, pool, duals, ma_params, np.random.default_rng(child[2 + it]),
                          drone=drone_on, harvest_k=cg_params.columns_per_round,
                          harvest_eps=cg_params.epsilon_rc)
        best_rc = res.harvest[0][0] if res.harvest else 0.0
        trace.append((it, float(obj), len(columns), float(best_rc)))
        added = 0
        for fit, key, chrom, mask in res.harvest:
            if add_column(mask, chrom):
                added += 1
        if added == 0:
            break
        if obj > best_obj + 1e-6:
            best_obj = obj
            stall = 0
        else:
            stall += 1
            if stall >= cg_params.stall_rounds:
                break

    lambdas, deltas, duals, obj = solve_rlmp(columns, inst)
    trace.append((len(trace), float(obj), len(columns), 0.0))
    if fractional_check(lambdas.values()) and fractional_check(deltas.values()):
        selected = [c for c in columns if lambdas[c.id] > 0.5]
    else:
        selected = finalize_integer(columns, inst)
    selected = selected[: inst.fleet_size]
    tours, assignment, objective = _assemble(selected, inst)
    keep = [ti for ti, _ in enumerate(tours)]
    sol = Solution([tours[t] for t in keep], objective, assignment, trace)
    violations = validate_solution(sol.tours, inst, sol.assignment)
    if violations:
        raise RuntimeError(f"internal error: assembled plan is infeasible: {violations[:3]}")
    return sol


def _mask_to_batches(ctx, mask) -> list:
    batches = ctx.inst.batches()
    return [(batches[k][0], batches[k][1]) for k in np.nonzero(mask)[0]]


# ---------------------------------------------------------------------------
# Solution file schema (line-oriented UTF-8 text):
#
#   bloodroute-solution 1
#   objective 30
#   tours 1
#   tour 0 routes 1
#   route 0 start 60
#   truck 2 4 3
#   sortie 2 1 4
#   claim 1 180 drone
#   claim 2 180 truck
#   end
# ---------------------------------------------------------------------------

SOL_MAGIC = "bloodroute-solution 1"


def dumps_solution(sol: Solution) -> str:
    lines = [SOL_MAGIC, f"objective {sol.objective}", f"tours {len(sol.tours)}"]
    by_route: dict[tuple[int, int], list] = {}
    for (sid, t), (ti, m, carrier) in sorted(sol.assignment.items()):
        by_route.setdefault((ti, m), []).append((sid, t, carrier))
    for ti, tour in enumerate(sol.tours):
        lines.append(f"tour {ti} routes {len(tour.routes)}")
        for m, (route, start) in enumerate(zip(tour.routes, tour.route_starts)):
            lines.append(f"route {m} start {start}")
            lines.append("truck " + " ".join(str(s) for s in route.path))
            for s in route.sorties:
                lines.append(f"sortie {s.launch} {s.serve} {s.rendezvous}")
            for sid, t, carrier in sorted(by_route.get((ti, m), [])):
                lines.append(f"claim {sid} {t} {carrier}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def write_solution(sol: Solution, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_solution(sol))


def loads_solution(text: str) -> Solution:
    from .model import ParseError

    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0] != SOL_MAGIC:
        raise ParseError(f"expected header '{SOL_MAGIC}'", 1)
    objective = 0
    tours: list[Tour] = []
    assignment = {}
    claims: list = []
    cur_routes: list[Route] = []
    cur_starts: list[int] = []
    cur_tour_idx = -1
    path: Optional[tuple] = None
    sorties: list[Sortie] = []

    def flush_route():
        nonlocal path, sorties
        if path is not None:
            cur_routes.append(Route(path, tuple(sorties)))
            path, sorties = None, []

    def flush_tour():
        nonlocal cur_routes, cur_starts
        flush_route()
        if cur_tour_idx >= 0:
            tours.append(Tour(tuple(cur_routes), tuple(cur_starts)))
        cur_routes, cur_starts = [], []

    for no, raw in enumerate(lines[1:], start=2):
        if not raw or raw == "end":
            continue
        tok = raw.split()
        try:
            if tok[0] == "objective":
                objective = int(tok[1])
            elif tok[0] == "tours":
                pass
            elif tok[0] == "tour":
                flush_tour()
                cur_tour_idx = int(tok[1])
            elif tok[0] == "route":
                flush_route()
                cur_starts.append(int(tok[3]))
            elif tok[0] == "truck":
                path = tuple(int(v) for v in tok[1:])
            elif tok[0] == "sortie":
                sorties.append(Sortie(int(tok[1]), int(tok[2]), int(tok[3])))
            elif tok[0] == "claim":
                batch = (int(tok[1]), int(tok[2]))
                loc = (cur_tour_idx, len(cur_starts) - 1, tok[3])
                assignment[batch] = loc
                claims.append((batch, loc))
            else:
                raise ParseError(f"unknown record '{tok[0]}'", no)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed '{tok[0]}' record: {exc}", no)
    flush_tour()
    return Solution(tours, objective, assignment, [], claims=claims)


def load_solution(path) -> Solution:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_solution(fh.read())


def write_trace_csv(trace, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,rlmp_objective,n_columns,best_reduced_cost\n")
        for it, obj, ncols, rc in trace:
            fh.write(f"{it},{obj:.9g},{ncols},{rc:.9g}\n")
