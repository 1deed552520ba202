"""Exact reference solver for tiny instances, plus an LP-file exporter of
the full mixed-integer model for optional external cross-checks.

The brute-force search enumerates the complete structurally-valid route
universe, then runs a depth-first search over fleet plans: each step places
one route on one tandem at a candidate start time, claims batches with the
same deterministic semantics as the heuristic evaluator, and recurses.
Candidate starts are restricted to the value-function breakpoints (the
claimable set of a route is piecewise constant in its start time), plans
are assembled in chronological completion order, and a catchability bound
prunes hopeless states.  Memoization keys on (tandem ready-times, claimed
set).  The result is the exact optimum of the restricted encoding:
earliest-start timing within routes, waiting only before route starts, and
greedy newest-first drone claiming.  The exported model permits general
waiting and free pickup choices, so an external MILP solve may exceed the
brute-force value on contrived instances; for cross-checks it provides the
upper-bound side.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

from . import engine
from .engine import get_context
from .colgen import Solution
from .model import Instance, Sortie, feasible_sorties, max_routes, tour_horizon_limit
from .schedule import DRONE, TRUCK, Route, Tour, validate_solution

ORACLE_MAX_SITES = 6
ORACLE_MAX_FLEET = 2


def enumerate_routes(inst: Instance, drone: bool) -> list[Route]:
    """Every structurally valid route: all truck paths over site subsets,
    with every compatible set of sorties attached; routes that cannot
    complete by the horizon limit from a zero start are dropped."""
    n = inst.n_sites
    ft = tour_horizon_limit(inst)
    sorties = sorted(feasible_sorties(inst)) if drone else []
    out = []
    for size in range(1, n + 1):
        for path in itertools.permutations(range(1, n + 1), size):
            pos = {sid: k for k, sid in enumerate(path)}
            onpath = set(path)
            cands = []
            for s in sorties:
                if s.launch in pos and s.rendezvous in pos and s.serve not in onpath:
                    if pos[s.launch] < pos[s.rendezvous]:
                        cands.append(s)

            def compatible(chosen, s):
                if any(c.serve == s.serve or c.launch == s.launch
                       or c.rendezvous == s.rendezvous for c in chosen):
                    return False
                lo, hi = pos[s.launch], pos[s.rendezvous]
                for c in chosen:
                    clo, chi = pos[c.launch], pos[c.rendezvous]
                    if clo < lo < chi or clo < hi < chi or lo < clo < hi or lo < chi < hi:
                        return False
                return True

            def attach(start_idx, chosen):
                out.append(Route(path, tuple(chosen)))
                for k in range(start_idx, len(cands)):
                    s = cands[k]
                    if compatible(chosen, s):
                        attach(k + 1, chosen + [s])

            attach(0, [])
    dur_ok = []
    from .schedule import route_duration

    for r in out:
        if route_duration(r, inst) <= ft:
            dur_ok.append(r)
    return dur_ok


def brute_force(inst: Instance, drone: Optional[bool] = None) -> tuple[int, Solution]:
    """Exact optimum (restricted encoding) and a witness plan.

    Refuses instances beyond ORACLE_MAX_SITES sites or ORACLE_MAX_FLEET
    tandems.
    """
    if inst.n_sites > ORACLE_MAX_SITES:
        raise ValueError(f"oracle limit: at most {ORACLE_MAX_SITES} sites")
    if inst.fleet_size > ORACLE_MAX_FLEET:
        raise ValueError(f"oracle limit: at most {ORACLE_MAX_FLEET} tandems")
    drone_on = inst.drone_enabled if drone is None else drone
    if not any(s.donations for s in inst.sites):
        return 0, Solution([], 0, {}, [])

    ctx = get_context(inst)
    universe = enumerate_routes(inst, drone_on)
    uni_rids = np.array([ctx.register(r) for r in universe], dtype=np.int64)
    nu = len(universe)
    ft = ctx.FT
    K = ctx.K

    # per-route start candidates above a given floor: value breakpoints
    edge_lists = []
    for u, route in enumerate(universe):
        rid = uni_rids[u]
        d = int(ctx.route_dur[rid])
        smax = ft - d
        edges = set()
        for e in range(int(ctx.ent_ptr[rid]), int(ctx.ent_ptr[rid + 1])):
            site = int(ctx.ent_site[e])
            off = int(ctx.ent_off[e])
            for b in range(int(ctx.site_ptr[site]), int(ctx.site_ptr[site + 1])):
                t = int(ctx.bt[b])
                for val in (t - off, t + K - d + 1):
                    if 1 <= val <= smax:
                        edges.add(val)
        edge_lists.append(sorted(edges))
    edge_ptr = np.zeros(nu + 1, dtype=np.int64)
    for u in range(nu):
        edge_ptr[u + 1] = edge_ptr[u] + len(edge_lists[u])
    edge_val = np.zeros(max(int(edge_ptr[-1]), 1), dtype=np.int64)
    for u in range(nu):
        edge_val[edge_ptr[u]: edge_ptr[u + 1]] = edge_lists[u]

    # catchability horizon per batch: latest start of any route that can
    # still deliver it (drone payload ignored, so this is an upper bound)
    nb = ctx.n_batches
    catch = np.full(nb, -1, dtype=np.int64)
    for u, route in enumerate(universe):
        rid = uni_rids[u]
        d = int(ctx.route_dur[rid])
        for e in range(int(ctx.ent_ptr[rid]), int(ctx.ent_ptr[rid + 1])):
            site = int(ctx.ent_site[e])
            off = int(ctx.ent_off[e])
            for b in range(int(ctx.site_ptr[site]), int(ctx.site_ptr[site + 1])):
                t = int(ctx.bt[b])
                hi = min(t + K - d, ft - d)
                lo = max(0, t - off)
                if hi >= lo and hi > catch[b]:
                    catch[b] = hi
    counts = ctx.bc

    cap = nu * (int(np.diff(edge_ptr).max(initial=0)) + 1)
    out_u = np.zeros(max(cap, 1), dtype=np.int64)
    out_s = np.zeros(max(cap, 1), dtype=np.int64)
    out_g = np.zeros(max(cap, 1), dtype=np.int64)

    fleet = inst.fleet_size
    memo: dict = {}

    def bound(min_m, claimed):
        return int(counts[(claimed == 0) & (catch >= min_m)].sum())

    def search(ms: tuple, claimed: np.ndarray) -> int:
        key = (ms, claimed.tobytes())
        hit = memo.get(key)
        if hit is not None:
            return hit[0]
        if bound(ms[0], claimed) == 0:
            memo[key] = (0, None)
            return 0
        lastcomp = ms[-1]
        moves = []
        seen_m = set()
        for m in ms:
            if m in seen_m:
                continue
            seen_m.add(m)
            cnt = engine.k_oracle_scan(
                m, lastcomp, claimed, uni_rids, edge_ptr, edge_val,
                ctx.ent_ptr, ctx.ent_site, ctx.ent_off, ctx.ent_kind, ctx.route_dur,
                ctx.site_ptr, ctx.bt, ctx.bc, ft, K, ctx.Q, out_u, out_s, out_g)
            for i in range(cnt):
                moves.append((int(out_g[i]), int(out_u[i]), int(out_s[i]), m))
        moves.sort(key=lambda mv: (-mv[0], mv[1], mv[2], mv[3]))
        best_v = 0
        best_move = None
        for gain, u, s, m_used in moves:
            rid = uni_rids[u]
            comp = s + int(ctx.route_dur[rid])
            slot = ms.index(m_used)
            ms2 = tuple(sorted(ms[:slot] + ms[slot + 1:] + (comp,)))
            if gain + bound(ms2[0], claimed) <= best_v:
                continue
            claimed2 = claimed.copy()
            engine.k_route_gain(rid, s, claimed2, True,
                                ctx.ent_ptr, ctx.ent_site, ctx.ent_off, ctx.ent_kind,
                                ctx.route_dur, ctx.site_ptr, ctx.bt, ctx.bc, K, ctx.Q)
            v = gain + search(ms2, claimed2)
            if v > best_v:
                best_v = v
                best_move = (u, s, m_used)
        memo[key] = (best_v, best_move)
        return best_v

    claimed0 = np.zeros(nb, dtype=np.uint8)
    ms0 = tuple([0] * fleet)
    objective = search(ms0, claimed0)

    # replay the memoized moves to build the witness plan
    batches = inst.batches()
    tandems = [{"m": 0, "routes": [], "starts": []} for _ in range(fleet)]
    assignment = {}
    claimed = np.zeros(nb, dtype=np.uint8)
    ms = ms0
    while True:
        move = memo[(ms, claimed.tobytes())][1]
        if move is None:
            break
        u, s, m_used = move
        rid = uni_rids[u]
        route = universe[u]
        tid = next(i for i, td in enumerate(tandems) if td["m"] == m_used)
        before = claimed.copy()
        engine.k_route_gain(rid, s, claimed, True,
                            ctx.ent_ptr, ctx.ent_site, ctx.ent_off, ctx.ent_kind,
                            ctx.route_dur, ctx.site_ptr, ctx.bt, ctx.bc, K, ctx.Q)
        drone_sites = {sx.serve for sx in route.sorties}
        ridx = len(tandems[tid]["routes"])
        for b in np.nonzero(claimed != before)[0]:
            sid, t, _ = batches[b]
            carrier = DRONE if sid in drone_sites else TRUCK
            assignment[(sid, t)] = (tid, ridx, carrier)
        tandems[tid]["routes"].append(route)
        tandems[tid]["starts"].append(s)
        tandems[tid]["m"] = s + int(ctx.route_dur[rid])
        ms = tuple(sorted(td["m"] for td in tandems))

    tours = []
    remap = {}
    for tid, td in enumerate(tandems):
        if td["routes"]:
            remap[tid] = len(tours)
            tours.append(Tour(tuple(td["routes"]), tuple(td["starts"])))
    assignment = {b: (remap[ti], m, c) for b, (ti, m, c) in assignment.items()}
    sol = Solution(tours, objective, assignment, [])
    violations = validate_solution(sol.tours, inst, sol.assignment)
    if violations:
        raise RuntimeError(f"internal error: oracle witness infeasible: {violations[:3]}")
    return objective, sol


# ---------------------------------------------------------------------------
# LP-format export of the complete mixed-integer model.
# ---------------------------------------------------------------------------


def export_milp(inst: Instance, path, drone: Optional[bool] = None):
    """Write the full model in LP file format (Maximize / Subject To /
    Bounds / Binaries / End) with deterministic variable naming.

    Big-M is horizon_end + 2*ptl except in the arc-activation constraint,
    where the exact arc-count bound N+1 is used.  Truck-only mode omits the
    drone variables and constraints.
    """
    drone_on = inst.drone_enabled if drone is None else drone
    n = inst.n_sites
    V = list(range(1, n + 1))
    V0 = [0] + V
    L = max_routes(inst)
    M = list(range(1, L + 1))
    F = list(range(1, inst.fleet_size + 1))
    H = inst.horizon_end + 2 * inst.ptl
    D = sorted(feasible_sorties(inst)) if drone_on else []
    T = {s.id: [t for t, _ in s.donations] for s in inst.sites}
    d_it = {(s.id, t): c for s in inst.sites for t, c in s.donations}

    def x(i, t, m, k):
        return f"x_{i}_{t}_{m}_{k}"

    def fv(i, t, m, k):
        return f"f_{i}_{t}_{m}_{k}"

    def y(i, j, m, k):
        return f"y_{i}_{j}_{m}_{k}"

    def h(i, nn, j, m, k):
        return f"h_{i}_{nn}_{j}_{m}_{k}"

    def r(i, m, k):
        return f"r_{i}_{m}_{k}"

    def z(m, k):
        return f"z_{m}_{k}"

    def v(i, m, k):
        return f"v_{i}_{m}_{k}"

    def e(m, k):
        return f"e_{m}_{k}"

    def terms(pairs):
        parts = []
        for coef, name in pairs:
            if coef == 0:
                continue
            sign = "-" if coef < 0 else "+"
            mag = abs(coef)
            mag_s = str(int(mag)) if float(mag).is_integer() else repr(float(mag))
            parts.append(f"{sign} {mag_s} {name}")
        if not parts:
            return "0 " + (pairs[0][1] if pairs else "z_1_1")
        out = " ".join(parts)
        return out[2:] if out.startswith("+ ") else out

    lines = ["Maximize"]
    obj = []
    for i in V:
        for t in T[i]:
            for m in M:
                for k in F:
                    obj.append((d_it[(i, t)], x(i, t, m, k)))
                    if drone_on:
                        obj.append((d_it[(i, t)], fv(i, t, m, k)))
    lines.append(" obj: " + terms(obj))
    lines.append("Subject To")
    con = lines.append

    def serving(i):
        return [s for s in D if s.serve == i]

    def launching(i):
        return [s for s in D if s.launch == i]

    def rdv_at(i):
        return [s for s in D if s.rendezvous == i]

    for i in V:
        for t in T[i]:
            lhs = [(1, x(i, t, m, k)) for m in M for k in F]
            if drone_on:
                lhs += [(1, fv(i, t, m, k)) for m in M for k in F]
            con(f" c2_{i}_{t}: " + terms(lhs) + " <= 1")
    for i in V:
        for t in T[i]:
            for m in M:
                for k in F:
                    lhs = [(1, x(i, t, m, k))] + [(-1, y(j, i, m, k)) for j in V0 if j != i]
                    con(f" c3_{i}_{t}_{m}_{k}: " + terms(lhs) + " <= 0")
    if drone_on:
        for i in V:
            for t in T[i]:
                for m in M:
                    for k in F:
                        lhs = [(1, fv(i, t, m, k))]
                        lhs += [(-1, h(s.launch, i, s.rendezvous, m, k)) for s in serving(i)]
                        con(f" c4_{i}_{t}_{m}_{k}: " + terms(lhs) + " <= 0")
    for i in V:
        for m in M:
            for k in F:
                lhs = [(1, y(j, i, m, k)) for j in V0 if j != i]
                if drone_on:
                    lhs += [(1, h(s.launch, i, s.rendezvous, m, k)) for s in serving(i)]
                con(f" c5_{i}_{m}_{k}: " + terms(lhs) + " <= 1")
    for i in V:
        for m in M:
            for k in F:
                lhs = [(1, y(i, j, m, k)) for j in V0 if j != i]
                lhs += [(-1, y(j, i, m, k)) for j in V0 if j != i]
                con(f" c6_{i}_{m}_{k}: " + terms(lhs) + " = 0")
    if drone_on:
        for i in V:
            for m in M:
                for k in F:
                    lhs = [(1, r(i, m, k))] + [(-1, y(j, i, m, k)) for j in V0 if j != i]
                    con(f" c7_{i}_{m}_{k}: " + terms(lhs) + " <= 0")
        for i in V:
            for m in M:
                for k in F:
                    lhs = [(1, h(s.launch, s.serve, s.rendezvous, m, k)) for s in launching(i)]
                    lhs += [(-1, r(i, m, k))]
                    con(f" c8_{i}_{m}_{k}: " + terms(lhs) + " <= 0")
        for i in V:
            for j in V:
                if i == j:
                    continue
                for m in M:
                    for k in F:
                        lhs = [(1, r(j, m, k)), (-1, r(i, m, k)), (1, y(i, j, m, k))]
                        lhs += [(-1, h(s.launch, s.serve, j, m, k)) for s in rdv_at(j)]
                        lhs += [(1, h(i, s.serve, s.rendezvous, m, k)) for s in launching(i)]
                        con(f" c9_{i}_{j}_{m}_{k}: " + terms(lhs) + " <= 1")
        for i in V:
            for m in M:
                for k in F:
                    lhs = [(1, h(s.launch, s.serve, i, m, k)) for s in rdv_at(i)]
                    lhs += [(-1, y(j, i, m, k)) for j in V0 if j != i]
                    con(f" c10_{i}_{m}_{k}: " + terms(lhs) + " <= 0")
    for m in M:
        for k in F:
            lhs = [(1, y(0, j, m, k)) for j in V] + [(-1, z(m, k))]
            con(f" c11_{m}_{k}: " + terms(lhs) + " = 0")
            lhs = [(1, y(j, 0, m, k)) for j in V] + [(-1, z(m, k))]
            con(f" c12_{m}_{k}: " + terms(lhs) + " = 0")
    for m in M[1:]:
        for k in F:
            con(f" c13_{m}_{k}: " + terms([(1, z(m, k)), (-1, z(m - 1, k))]) + " <= 0")
    for m in M:
        for k in F:
            lhs = [(1, y(i, j, m, k)) for i in V0 for j in V0 if i != j]
            lhs += [(-(n + 1), z(m, k))]
            con(f" c14_{m}_{k}: " + terms(lhs) + " <= 0")
    for i in V:
        for j in V:
            if i == j:
                continue
            for m in M:
                for k in F:
                    lhs = [(1, v(i, m, k)), (-1, v(j, m, k)), (H, y(i, j, m, k))]
                    con(f" c15_{i}_{j}_{m}_{k}: " + terms(lhs)
                        + f" <= {H - inst.truck_time[i][j]}")
    if drone_on:
        for i in V:
            for j in V:
                if i == j:
                    continue
                for m in M:
                    for k in F:
                        lhs = [(1, v(i, m, k)), (-1, v(j, m, k))]
                        lhs += [(H, h(i, j, s.rendezvous, m, k))
                                for s in D if s.launch == i and s.serve == j]
                        con(f" c16_{i}_{j}_{m}_{k}: " + terms(lhs)
                            + f" <= {H - inst.drone_time[i][j]}")
        for i in V:
            for j in V:
                if i == j:
                    continue
                for m in M:
                    for k in F:
                        lhs = [(1, v(i, m, k)), (-1, v(j, m, k))]
                        lhs += [(H, h(s.launch, i, j, m, k))
                                for s in D if s.serve == i and s.rendezvous == j]
                        con(f" c17_{i}_{j}_{m}_{k}: " + terms(lhs)
                            + f" <= {H - inst.drone_time[i][j]}")
    for i in V:
        for m in M:
            for k in F:
                lhs = [(inst.truck_time[0][i], y(0, i, m, k)), (-1, v(i, m, k))]
                if m > 1:
                    lhs = [(1, e(m - 1, k))] + lhs
                con(f" c18_{i}_{m}_{k}: " + terms(lhs) + " <= 0")
    for i in V:
        for m in M:
            for k in F:
                lhs = [(1, v(i, m, k)), (inst.truck_time[i][0], y(i, 0, m, k)),
                       (-1, e(m, k))]
                con(f" c19_{i}_{m}_{k}: " + terms(lhs) + " <= 0")
    for i in V:
        for t in T[i]:
            for m in M:
                for k in F:
                    lhs = [(1, e(m, k)), (H, x(i, t, m, k))]
                    if drone_on:
                        lhs.append((H, fv(i, t, m, k)))
                    con(f" c20_{i}_{t}_{m}_{k}: " + terms(lhs)
                        + f" <= {t + inst.ptl + H}")
    for i in V:
        for t in T[i]:
            for m in M:
                for k in F:
                    lhs = [(1, v(i, m, k)), (-t, x(i, t, m, k))]
                    if drone_on:
                        lhs.append((-t, fv(i, t, m, k)))
                    con(f" c21_{i}_{t}_{m}_{k}: " + terms(lhs) + " >= 0")
    if drone_on:
        for i in V:
            for m in M:
                for k in F:
                    lhs = [(d_it[(i, t)], fv(i, t, m, k)) for t in T[i]]
                    if lhs:
                        con(f" c22_{i}_{m}_{k}: " + terms(lhs)
                            + f" <= {inst.drone_capacity}")

    lines.append("Bounds")
    for i in V:
        for m in M:
            for k in F:
                lines.append(f" 0 <= {v(i, m, k)}")
    for m in M:
        for k in F:
            lines.append(f" 0 <= {e(m, k)}")
    lines.append("Binaries")
    binaries = []
    for i in V:
        for t in T[i]:
            for m in M:
                for k in F:
                    binaries.append(x(i, t, m, k))
                    if drone_on:
                        binaries.append(fv(i, t, m, k))
    for i in V0:
        for j in V0:
            if i != j:
                for m in M:
                    for k in F:
                        binaries.append(y(i, j, m, k))
    if drone_on:
        for s in D:
            for m in M:
                for k in F:
                    binaries.append(h(s.launch, s.serve, s.rendezvous, m, k))
        for i in V:
            for m in M:
                for k in F:
                    binaries.append(r(i, m, k))
    for m in M:
        for k in F:
            binaries.append(z(m, k))
    for chunk in range(0, len(binaries), 8):
        lines.append(" " + " ".join(binaries[chunk: chunk + 8]))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
