"""Flat-array evaluation engine for the memetic search (numba-jitted).

Hot-path twin of :mod:`bloodroute.schedule`: routes are encoded once into
CSR-style arrays (visited sites with departure offsets, durations), after
which evaluating a tour at arbitrary route start times costs a few hundred
nanoseconds.  The jitted kernels cover tour evaluation, random tour
construction, timing refinement, repair after crossover, and the education
local search with its sixteen move operators.

Everything here is internal; the public algorithm surface lives in
:mod:`bloodroute.memetic`.  Differential tests assert equivalence with the
reference semantics in :mod:`bloodroute.schedule`.
"""

from __future__ import annotations

import weakref

import numpy as np
from numba import njit

from .model import PC, Instance, Sortie
from .schedule import Route, evaluate_route

# kernels run on int64 minutes, float64 weights, uint8 flags
I8 = np.int64
F8 = np.float64
U1 = np.uint8
U8 = np.uint64

TRUCK_ENT = 0
DRONE_ENT = 1

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _sm64(state):
    state[0] = state[0] + _SM_GAMMA
    z = state[0]
    z = (z ^ (z >> _U30)) * _SM_M1
    z = (z ^ (z >> _U27)) * _SM_M2
    return z ^ (z >> _U31)


@njit(cache=True, inline="always")
def _randu(state):
    return np.float64(_sm64(state) >> _U11) * _INV53


@njit(cache=True, inline="always")
def _randint(state, n):
    return np.int64(_sm64(state) % np.uint64(n))


@njit(cache=True, inline="always")
def _lower_bound(a, lo, hi, v):
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, inline="always")
def _upper_bound(a, lo, hi, v):
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def k_eval(rids, starts, nr, ent_ptr, ent_site, ent_off, ent_kind, dur,
           site_ptr, bt, bc, bw, claimed, K, Q):
    """Weighted value and unit count of a tour; earlier routes claim first."""
    for b in range(claimed.shape[0]):
        claimed[b] = 0
    value = 0.0
    units = np.int64(0)
    for k in range(nr):
        r = rids[k]
        s = starts[k]
        lo = s + dur[r] - K
        for e in range(ent_ptr[r], ent_ptr[r + 1]):
            site = ent_site[e]
            hi = s + ent_off[e]
            b0 = site_ptr[site]
            b1 = site_ptr[site + 1]
            first = _lower_bound(bt, b0, b1, lo)
            last = _upper_bound(bt, first, b1, hi)
            if ent_kind[e] == TRUCK_ENT:
                for b in range(first, last):
                    if claimed[b] == 0:
                        claimed[b] = 1
                        value += bw[b]
                        units += bc[b]
            else:
                load = np.int64(0)
                for b in range(last - 1, first - 1, -1):
                    if claimed[b] == 0 and load + bc[b] <= Q:
                        load += bc[b]
                        claimed[b] = 1
                        value += bw[b]
                        units += bc[b]
    return value, units


@njit(cache=True)
def k_eval_claims(rids, starts, nr, ent_ptr, ent_site, ent_off, ent_kind, dur,
                  site_ptr, bt, bc, bw, claimed, claim_route, claim_kind, K, Q):
    """Like k_eval but records per-batch claiming route index and carrier."""
    for b in range(claimed.shape[0]):
        claimed[b] = 0
        claim_route[b] = -1
        claim_kind[b] = 0
    value = 0.0
    units = np.int64(0)
    for k in range(nr):
        r = rids[k]
        s = starts[k]
        lo = s + dur[r] - K
        for e in range(ent_ptr[r], ent_ptr[r + 1]):
            site = ent_site[e]
            hi = s + ent_off[e]
            b0 = site_ptr[site]
            b1 = site_ptr[site + 1]
            first = _lower_bound(bt, b0, b1, lo)
            last = _upper_bound(bt, first, b1, hi)
            if ent_kind[e] == TRUCK_ENT:
                for b in range(first, last):
                    if claimed[b] == 0:
                        claimed[b] = 1
                        claim_route[b] = k
                        claim_kind[b] = TRUCK_ENT
                        value += bw[b]
                        units += bc[b]
            else:
                load = np.int64(0)
                for b in range(last - 1, first - 1, -1):
                    if claimed[b] == 0 and load + bc[b] <= Q:
                        load += bc[b]
                        claimed[b] = 1
                        claim_route[b] = k
                        claim_kind[b] = DRONE_ENT
                        value += bw[b]
                        units += bc[b]
    return value, units


@njit(cache=True)
def k_trp(rids, starts, nr, ref_iter, FT, dur, state,
          ent_ptr, ent_site, ent_off, ent_kind,
          site_ptr, bt, bc, bw, claimed, K, Q, gaps, trial):
    """Timing refinement: distribute the tour's idle time over the gaps
    before each route (plus a trailing remainder) with flat Dirichlet
    samples, keeping the best of {original, samples}.  Start times stay
    integral (flooring a start never reduces the value).
    """
    best = k_eval(rids, starts, nr, ent_ptr, ent_site, ent_off, ent_kind, dur,
                  site_ptr, bt, bc, bw, claimed, K, Q)[0]
    if nr == 0:
        return best
    comp = starts[nr - 1] + dur[rids[nr - 1]]
    it = FT - comp
    if it <= 0:
        return best
    for _ in range(ref_iter):
        total = 0.0
        for g in range(nr + 1):
            e = -np.log(1.0 - _randu(state))
            gaps[g] = e
            total += e
        if total <= 0.0:
            continue
        acc = 0.0
        for g in range(nr):
            acc += gaps[g] / total * it
            trial[g] = starts[g] + np.int64(np.floor(acc))
        val = k_eval(rids, trial, nr, ent_ptr, ent_site, ent_off, ent_kind, dur,
                     site_ptr, bt, bc, bw, claimed, K, Q)[0]
        if val > best:
            best = val
            for g in range(nr):
                starts[g] = trial[g]
    return best


@njit(cache=True)
def k_construct(count, pool_n, L, FT, ref_iter, state, pool_rids,
                out_rids, out_starts, out_len, out_val,
                ent_ptr, ent_site, ent_off, ent_kind, dur,
                site_ptr, bt, bc, bw, claimed, K, Q, gaps, trial):
    """Build ``count`` random tours: routes drawn uniformly from the pool and
    packed back-to-back from time zero until the next draw would overshoot
    the horizon limit; each tour is then timing-refined.
    """
    for c in range(count):
        n = np.int64(0)
        comp = np.int64(0)
        while n < L:
            r = pool_rids[_randint(state, pool_n)]
            if FT < 0 or comp + dur[r] > FT:
                break
            out_rids[c, n] = r
            out_starts[c, n] = comp
            comp += dur[r]
            n += 1
        out_len[c] = n
        out_val[c] = k_trp(out_rids[c], out_starts[c], n, ref_iter, FT, dur, state,
                           ent_ptr, ent_site, ent_off, ent_kind,
                           site_ptr, bt, bc, bw, claimed, K, Q, gaps, trial)


@njit(cache=True)
def k_rarp(in_rids, n_in, L, FT, ref_iter, state,
           out_rids, out_starts,
           ent_ptr, ent_site, ent_off, ent_kind, dur,
           site_ptr, bt, bc, bw, claimed, K, Q, gaps, trial):
    """Repair after crossover: repack back-to-back from zero, drop any route
    that would complete past the horizon limit, cap the route count, then
    timing-refine.  Returns (length, value).
    """
    n = np.int64(0)
    comp = np.int64(0)
    for k in range(n_in):
        r = in_rids[k]
        if n >= L:
            break
        if comp + dur[r] > FT:
            continue
        out_rids[n] = r
        out_starts[n] = comp
        comp += dur[r]
        n += 1
    val = k_trp(out_rids, out_starts, n, ref_iter, FT, dur, state,
                ent_ptr, ent_site, ent_off, ent_kind,
                site_ptr, bt, bc, bw, claimed, K, Q, gaps, trial)
    return n, val


# ---------------------------------------------------------------------------
# Route structural checks and encoding (kernel twin of schedule.route_violations
# and evaluate_route; candidates produced by education run through these).
# ---------------------------------------------------------------------------


@njit(cache=True)
def k_route_valid(p, np_, sl, ss, sr, ns, td, B, drone_on):
    if np_ < 1:
        return False
    # all sites distinct across truck stops and drone-served sites
    for i in range(np_):
        for j in range(i + 1, np_):
            if p[i] == p[j]:
                return False
        for j in range(ns):
            if p[i] == ss[j]:
                return False
    for i in range(ns):
        for j in range(i + 1, ns):
            if ss[i] == ss[j]:
                return False
    if ns > 0 and not drone_on:
        return False
    for si in range(ns):
        l = sl[si]
        s = ss[si]
        r = sr[si]
        if l == s or s == r or l == r:
            return False
        lpos = np.int64(-1)
        rpos = np.int64(-1)
        for i in range(np_):
            if p[i] == l:
                lpos = i
            if p[i] == r:
                rpos = i
        if lpos < 0 or rpos < 0 or lpos >= rpos:
            return False
        if td[l, s] > B or td[s, r] > B:
            return False
    # one launch and one rendezvous per site; no overlapping spans
    for si in range(ns):
        for sj in range(si + 1, ns):
            if sl[si] == sl[sj] or sr[si] == sr[sj]:
                return False
    for si in range(ns):
        lpos_i = np.int64(0)
        rpos_i = np.int64(0)
        for i in range(np_):
            if p[i] == sl[si]:
                lpos_i = i
            if p[i] == sr[si]:
                rpos_i = i
        for sj in range(ns):
            if si == sj:
                continue
            for i in range(np_):
                if p[i] == sl[sj] or p[i] == sr[sj]:
                    if lpos_i < i < rpos_i:
                        return False
    return True


@njit(cache=True)
def k_encode_route(p, np_, sl, ss, sr, ns, tv, td, e_site, e_off, e_kind):
    """Departure offsets at start 0 plus route duration; entries are truck
    stops in path order followed by drone-served sites.  Assumes the route
    already passed k_route_valid.  Returns (n_entries, duration).
    """
    prev = np.int64(PC)
    t = np.int64(0)
    for idx in range(np_):
        site = p[idx]
        arrive = t + tv[prev, site]
        d = arrive
        for si in range(ns):
            if sr[si] == site:
                ldep = np.int64(0)
                for q in range(idx):
                    if p[q] == sl[si]:
                        ldep = e_off[q]
                serve_dep = ldep + td[sl[si], ss[si]]
                e_site[np_ + si] = ss[si]
                e_off[np_ + si] = serve_dep
                e_kind[np_ + si] = DRONE_ENT
                back = serve_dep + td[ss[si], site]
                if back > d:
                    d = back
        e_site[idx] = site
        e_off[idx] = d
        e_kind[idx] = TRUCK_ENT
        t = d
        prev = site
    return np_ + ns, t + tv[prev, PC]


# ---------------------------------------------------------------------------
# The sixteen education moves.  Each samples its operands uniformly at
# random, writes a candidate into (cp, csl, css, csr) and returns
# (ok, new_np, new_ns); structural validity is checked by the caller, so a
# move only fails here when it cannot find operands at all.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _is_endpoint(site, sl, sr, ns):
    for si in range(ns):
        if sl[si] == site or sr[si] == site:
            return True
    return False


@njit(cache=True)
def _copy_route(p, np_, sl, ss, sr, ns, cp, csl, css, csr):
    for i in range(np_):
        cp[i] = p[i]
    for i in range(ns):
        csl[i] = sl[i]
        css[i] = ss[i]
        csr[i] = sr[i]


@njit(cache=True)
def _pick_truck_only(p, np_, sl, sr, ns, state):
    cnt = np.int64(0)
    for i in range(np_):
        if not _is_endpoint(p[i], sl, sr, ns):
            cnt += 1
    if cnt == 0:
        return np.int64(-1)
    k = _randint(state, cnt)
    for i in range(np_):
        if not _is_endpoint(p[i], sl, sr, ns):
            if k == 0:
                return i
            k -= 1
    return np.int64(-1)


@njit(cache=True)
def k_apply_move(op, p, np_, sl, ss, sr, ns, cp, csl, css, csr,
                 n_sites, state, visited):
    """Apply move ``op`` (0-based M1..M16) to the route, writing the
    candidate into the c* buffers.  Returns (ok, new_np, new_ns).
    """
    _copy_route(p, np_, sl, ss, sr, ns, cp, csl, css, csr)
    new_np = np_
    new_ns = ns

    if op <= 7:  # truck-path moves
        if op == 0:  # M1 relocate one truck-only stop after another stop
            if np_ < 2:
                return False, new_np, new_ns
            ipos = _pick_truck_only(p, np_, sl, sr, ns, state)
            if ipos < 0:
                return False, new_np, new_ns
            jpos = _randint(state, np_ - 1)
            if jpos >= ipos:
                jpos += 1
            site = p[ipos]
            w = np.int64(0)
            for i in range(np_):
                if i == ipos:
                    continue
                cp[w] = p[i]
                w += 1
                if i == jpos:
                    cp[w] = site
                    w += 1
            return True, new_np, new_ns
        if op == 1 or op == 2:  # M2/M3 relocate a consecutive truck-only pair
            cnt = np.int64(0)
            for i in range(np_ - 1):
                if (not _is_endpoint(p[i], sl, sr, ns)) and (not _is_endpoint(p[i + 1], sl, sr, ns)):
                    cnt += 1
            if cnt == 0 or np_ < 3:
                return False, new_np, new_ns
            k = _randint(state, cnt)
            qpos = np.int64(-1)
            for i in range(np_ - 1):
                if (not _is_endpoint(p[i], sl, sr, ns)) and (not _is_endpoint(p[i + 1], sl, sr, ns)):
                    if k == 0:
                        qpos = i
                        break
                    k -= 1
            jpos = _randint(state, np_ - 2)
            adj = np.int64(0)
            for i in range(np_):
                if i == qpos or i == qpos + 1:
                    continue
                if adj == jpos:
                    jpos = i
                    break
                adj += 1
            a = p[qpos]
            b = p[qpos + 1]
            if op == 2:
                a, b = b, a
            w = np.int64(0)
            for i in range(np_):
                if i == qpos or i == qpos + 1:
                    continue
                cp[w] = p[i]
                w += 1
                if i == jpos:
                    cp[w] = a
                    w += 1
                    cp[w] = b
                    w += 1
            return True, new_np, new_ns
        if op == 3:  # M4 swap two stops
            if np_ < 2:
                return False, new_np, new_ns
            i = _randint(state, np_)
            j = _randint(state, np_ - 1)
            if j >= i:
                j += 1
            cp[i], cp[j] = cp[j], cp[i]
            return True, new_np, new_ns
        if op == 4:  # M5 swap a consecutive pair with a single stop
            if np_ < 3:
                return False, new_np, new_ns
            cnt = np.int64(0)
            for i in range(np_ - 1):
                if not _is_endpoint(p[i + 1], sl, sr, ns):
                    cnt += 1
            if cnt == 0:
                return False, new_np, new_ns
            k = _randint(state, cnt)
            qpos = np.int64(-1)
            for i in range(np_ - 1):
                if not _is_endpoint(p[i + 1], sl, sr, ns):
                    if k == 0:
                        qpos = i
                        break
                    k -= 1
            jpos = _randint(state, np_ - 2)
            adj = np.int64(0)
            for i in range(np_):
                if i == qpos or i == qpos + 1:
                    continue
                if adj == jpos:
                    jpos = i
                    break
                adj += 1
            a = p[qpos]
            b = p[qpos + 1]
            j = p[jpos]
            w = np.int64(0)
            for i in range(np_):
                if i == qpos:
                    cp[w] = j
                    w += 1
                elif i == qpos + 1:
                    continue
                elif i == jpos:
                    cp[w] = a
                    w += 1
                    cp[w] = b
                    w += 1
                else:
                    cp[w] = p[i]
                    w += 1
            return True, new_np, new_ns
        if op == 5:  # M6 swap two disjoint consecutive pairs
            if np_ < 4:
                return False, new_np, new_ns
            q = _randint(state, np_ - 3)
            r = q + 2 + _randint(state, np_ - q - 3) if np_ - q - 3 > 0 else q + 2
            cp[q], cp[r] = cp[r], cp[q]
            cp[q + 1], cp[r + 1] = cp[r + 1], cp[q + 1]
            return True, new_np, new_ns
        if op == 6:  # M7 reconnect as (i1,j1)+(i2,j2): reverse the middle segment
            if np_ < 3:
                return False, new_np, new_ns
            q = _randint(state, np_ - 2)
            r = q + 1 + _randint(state, np_ - q - 2)
            lo = q + 1
            hi = r
            while lo < hi:
                cp[lo], cp[hi] = cp[hi], cp[lo]
                lo += 1
                hi -= 1
            return True, new_np, new_ns
        if op == 7:  # M8 reconnect as (i1,j2)+(j1,i2): swap the two successors
            if np_ < 3:
                return False, new_np, new_ns
            q = _randint(state, np_ - 2)
            r = q + 1 + _randint(state, np_ - q - 2)
            cp[q + 1], cp[r + 1] = cp[r + 1], cp[q + 1]
            return True, new_np, new_ns
        return False, new_np, new_ns

    # drone moves
    if ns == 0 and op != 12:  # only M13 can create the first sortie
        return False, new_np, new_ns
    if op == 8:  # M9 swap a drone-served site with an unrelated truck stop
        si = _randint(state, ns)
        lpos = np.int64(-1)
        rpos = np.int64(-1)
        for i in range(np_):
            if p[i] == sl[si]:
                lpos = i
            if p[i] == sr[si]:
                rpos = i
        cnt = np.int64(0)
        for i in range(np_):
            if i < lpos or i > rpos:
                cnt += 1
        if cnt == 0:
            return False, new_np, new_ns
        k = _randint(state, cnt)
        jpos = np.int64(-1)
        for i in range(np_):
            if i < lpos or i > rpos:
                if k == 0:
                    jpos = i
                    break
                k -= 1
        css[si] = p[jpos]
        cp[jpos] = ss[si]
        return True, new_np, new_ns
    if op == 9:  # M10 swap launch with served site
        si = _randint(state, ns)
        for i in range(np_):
            if p[i] == sl[si]:
                cp[i] = ss[si]
        csl[si] = ss[si]
        css[si] = sl[si]
        return True, new_np, new_ns
    if op == 10:  # M11 swap served site with rendezvous
        si = _randint(state, ns)
        for i in range(np_):
            if p[i] == sr[si]:
                cp[i] = ss[si]
        csr[si] = ss[si]
        css[si] = sr[si]
        return True, new_np, new_ns
    if op == 11:  # M12 swap launch with rendezvous
        si = _randint(state, ns)
        for i in range(np_):
            if p[i] == sl[si]:
                cp[i] = sr[si]
            elif p[i] == sr[si]:
                cp[i] = sl[si]
        csl[si] = sr[si]
        csr[si] = sl[si]
        return True, new_np, new_ns
    if op == 12:  # M13 insert a new sortie over a fresh or truck-only site
        cnt = np.int64(0)
        for site in range(1, n_sites + 1):
            if visited[site] == 0:
                cnt += 1
        for i in range(np_):
            if not _is_endpoint(p[i], sl, sr, ns):
                cnt += 1
        if cnt == 0 or np_ < 2:
            return False, new_np, new_ns
        k = _randint(state, cnt)
        serve = np.int64(-1)
        from_path = False
        for site in range(1, n_sites + 1):
            if visited[site] == 0:
                if k == 0:
                    serve = site
                    break
                k -= 1
        if serve < 0:
            for i in range(np_):
                if not _is_endpoint(p[i], sl, sr, ns):
                    if k == 0:
                        serve = p[i]
                        from_path = True
                        break
                    k -= 1
        if serve < 0:
            return False, new_np, new_ns
        if from_path:
            w = np.int64(0)
            for i in range(np_):
                if p[i] != serve:
                    cp[w] = p[i]
                    w += 1
            new_np = w
        if new_np < 2:
            return False, new_np, new_ns
        q = _randint(state, new_np - 1)
        m = q + 1 + _randint(state, new_np - q - 1)
        csl[ns] = cp[q]
        css[ns] = serve
        csr[ns] = cp[m]
        new_ns = ns + 1
        return True, new_np, new_ns
    if op == 13:  # M14 dissolve a sortie, serving its site by truck instead
        si = _randint(state, ns)
        serve = ss[si]
        if np_ < 2:
            return False, new_np, new_ns
        g = 1 + _randint(state, np_ - 1)  # interior gap
        w = np.int64(0)
        for i in range(np_):
            if i == g:
                cp[w] = serve
                w += 1
            cp[w] = p[i]
            w += 1
        new_np = np_ + 1
        w = np.int64(0)
        for sj in range(ns):
            if sj == si:
                continue
            csl[w] = sl[sj]
            css[w] = ss[sj]
            csr[w] = sr[sj]
            w += 1
        new_ns = ns - 1
        return True, new_np, new_ns
    if op == 14:  # M15 swap the served sites of two sorties
        if ns < 2:
            return False, new_np, new_ns
        si = _randint(state, ns)
        sj = _randint(state, ns - 1)
        if sj >= si:
            sj += 1
        css[si] = ss[sj]
        css[sj] = ss[si]
        return True, new_np, new_ns
    if op == 15:  # M16 reassign a served site to new launch/rendezvous stops
        si = _randint(state, ns)
        if np_ < 2:
            return False, new_np, new_ns
        q = _randint(state, np_ - 1)
        m = q + 1 + _randint(state, np_ - q - 1)
        csl[si] = p[q]
        csr[si] = p[m]
        return True, new_np, new_ns
    return False, new_np, new_ns


@njit(cache=True)
def k_educate(rids, starts, nr, j, w, a, s, active, move_ctr, omega,
              n_routes, ent_cursor, path_cursor, sor_cursor,
              route_cap, ent_cap, path_cap, sor_cap,
              ent_ptr, ent_site, ent_off, ent_kind, dur,
              path_ptr, path_site, sor_ptr, sor_l, sor_s, sor_r,
              site_ptr, bt, bc, bw, claimed, K, Q, B, drone_on, n_sites,
              tv, td, state,
              pbuf, slbuf, ssbuf, srbuf, cp, csl, css, csr, visited, eps):
    """Local search over route ``j`` of the tour.

    Picks an active operator with probability proportional to its weight,
    applies one randomized move, keeps it only when the whole-tour weighted
    value strictly improves (route start times fixed), and deactivates the
    operator otherwise.  Improving moves reactivate every operator.  Every
    ``omega`` attempts the weights are bumped by the operators' success
    rates.  Returns (value, truncated); ``truncated`` means the route
    registry ran out of headroom and the caller must grow it and call again.
    """
    r = rids[j]
    np_ = np.int64(0)
    for i in range(path_ptr[r], path_ptr[r + 1]):
        pbuf[np_] = path_site[i]
        np_ += 1
    ns = np.int64(0)
    for i in range(sor_ptr[r], sor_ptr[r + 1]):
        slbuf[ns] = sor_l[i]
        ssbuf[ns] = sor_s[i]
        srbuf[ns] = sor_r[i]
        ns += 1

    cur_val = k_eval(rids, starts, nr, ent_ptr, ent_site, ent_off, ent_kind, dur,
                     site_ptr, bt, bc, bw, claimed, K, Q)[0]

    while True:
        tot = 0.0
        for op in range(16):
            if active[op] == 1:
                tot += w[op]
        if tot <= 0.0:
            break
        u = _randu(state) * tot
        op = np.int64(-1)
        acc = 0.0
        for cand in range(16):
            if active[cand] == 1:
                acc += w[cand]
                if u < acc:
                    op = cand
                    break
        if op < 0:
            for cand in range(15, -1, -1):
                if active[cand] == 1:
                    op = cand
                    break
        if op < 0:
            break

        for site in range(n_sites + 1):
            visited[site] = 0
        for i in range(np_):
            visited[pbuf[i]] = 1
        for i in range(ns):
            visited[ssbuf[i]] = 1

        ok, new_np, new_ns = k_apply_move(op, pbuf, np_, slbuf, ssbuf, srbuf, ns,
                                          cp, csl, css, csr, n_sites, state, visited)
        a[op] += 1
        move_ctr[0] += 1
        improved = False
        if ok and k_route_valid(cp, new_np, csl, css, csr, new_ns, td, B, drone_on):
            if (n_routes[0] + 1 > route_cap or ent_cursor[0] + new_np + new_ns > ent_cap
                    or path_cursor[0] + new_np > path_cap or sor_cursor[0] + new_ns > sor_cap):
                move_ctr[0] -= 1
                a[op] -= 1
                return cur_val, True
            rid = n_routes[0]
            e0 = ent_cursor[0]
            ne, d = k_encode_route(cp, new_np, csl, css, csr, new_ns, tv, td,
                                   ent_site[e0:], ent_off[e0:], ent_kind[e0:])
            ent_ptr[rid] = e0
            ent_ptr[rid + 1] = e0 + ne
            dur[rid] = d
            # the educated route must still fit its timing slot: starts are
            # fixed, so it may not run into the next route's start
            fits = j == nr - 1 or starts[j] + d <= starts[j + 1]
            old = rids[j]
            rids[j] = rid
            val = k_eval(rids, starts, nr, ent_ptr, ent_site, ent_off, ent_kind, dur,
                         site_ptr, bt, bc, bw, claimed, K, Q)[0]
            if fits and val > cur_val + eps:
                improved = True
                cur_val = val
                p0 = path_cursor[0]
                for i in range(new_np):
                    path_site[p0 + i] = cp[i]
                path_ptr[rid] = p0
                path_ptr[rid + 1] = p0 + new_np
                s0 = sor_cursor[0]
                for i in range(new_ns):
                    sor_l[s0 + i] = csl[i]
                    sor_s[s0 + i] = css[i]
                    sor_r[s0 + i] = csr[i]
                sor_ptr[rid] = s0
                sor_ptr[rid + 1] = s0 + new_ns
                n_routes[0] = rid + 1
                ent_cursor[0] = e0 + ne
                path_cursor[0] = p0 + new_np
                sor_cursor[0] = s0 + new_ns
                np_ = new_np
                ns = new_ns
                for i in range(np_):
                    pbuf[i] = cp[i]
                for i in range(ns):
                    slbuf[i] = csl[i]
                    ssbuf[i] = css[i]
                    srbuf[i] = csr[i]
            else:
                rids[j] = old
        if improved:
            s[op] += 1
            for cand in range(16):
                active[cand] = 1
            if not drone_on:
                for cand in range(8, 16):
                    active[cand] = 0
        else:
            active[op] = 0
        if move_ctr[0] % omega == 0:
            for cand in range(16):
                if a[cand] > 0:
                    w[cand] += s[cand] / a[cand]
                a[cand] = 0
                s[cand] = 0
    return cur_val, False


# ---------------------------------------------------------------------------
# Kernels for the exact brute-force reference: enumerate the value and the
# claims of placing one route at one start against a partial claim state.
# ---------------------------------------------------------------------------


@njit(cache=True)
def k_route_gain(r, s, claimed, commit,
                 ent_ptr, ent_site, ent_off, ent_kind, dur,
                 site_ptr, bt, bc, K, Q):
    """Units gained by running route ``r`` at start ``s`` given the claimed
    mask; mutates the mask when ``commit`` is true."""
    gain = np.int64(0)
    lo = s + dur[r] - K
    for e in range(ent_ptr[r], ent_ptr[r + 1]):
        site = ent_site[e]
        hi = s + ent_off[e]
        b0 = site_ptr[site]
        b1 = site_ptr[site + 1]
        first = _lower_bound(bt, b0, b1, lo)
        last = _upper_bound(bt, first, b1, hi)
        if ent_kind[e] == TRUCK_ENT:
            for b in range(first, last):
                if claimed[b] == 0:
                    gain += bc[b]
                    if commit:
                        claimed[b] = 1
        else:
            load = np.int64(0)
            for b in range(last - 1, first - 1, -1):
                if claimed[b] == 0 and load + bc[b] <= Q:
                    load += bc[b]
                    gain += bc[b]
                    if commit:
                        claimed[b] = 1
    return gain


@njit(cache=True)
def k_oracle_scan(m, lastcomp, claimed, uni_rids, edge_ptr, edge_val,
                  ent_ptr, ent_site, ent_off, ent_kind, dur,
                  site_ptr, bt, bc, FT, K, Q,
                  out_u, out_start, out_gain):
    """All (route, start) moves from tandem time ``m`` with positive gain.

    Candidate starts are ``m`` itself plus the route's value breakpoints
    above ``m`` (piecewise constancy makes this complete); moves must
    complete no earlier than ``lastcomp`` so that a fleet plan is assembled
    in chronological claim order.
    """
    cnt = np.int64(0)
    for u in range(uni_rids.shape[0]):
        r = uni_rids[u]
        d = dur[r]
        smax = FT - d
        if smax < m:
            continue
        e0 = edge_ptr[u]
        e1 = edge_ptr[u + 1]
        lb = _lower_bound(edge_val, e0, e1, m + 1)
        ci = lb - 1
        while ci < e1:
            s = m if ci == lb - 1 else edge_val[ci]
            ci += 1
            if s > smax:
                break
            if s + d < lastcomp:
                continue
            gain = k_route_gain(r, s, claimed, False,
                                ent_ptr, ent_site, ent_off, ent_kind, dur,
                                site_ptr, bt, bc, K, Q)
            if gain > 0:
                out_u[cnt] = u
                out_start[cnt] = s
                out_gain[cnt] = gain
                cnt += 1
    return cnt


# ---------------------------------------------------------------------------
# Python-side context: instance encoding plus the growable route registry.
# ---------------------------------------------------------------------------


class ScheduleContext:
    """Flat encoding of an instance plus a registry of encoded routes.

    The registry is append-only; route ids are stable.  One context is
    shared by every memetic run on the same instance (weights are passed per
    call), so routes discovered by education in one pricing round remain
    available to later rounds.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        n = inst.n_sites
        batches = inst.batches()
        self.n_batches = len(batches)
        self.batch_index = {(sid, t): k for k, (sid, t, _) in enumerate(batches)}
        self.bt = np.array([t for _, t, _ in batches], dtype=I8)
        self.bc = np.array([c for _, _, c in batches], dtype=I8)
        self.site_ptr = np.zeros(n + 2, dtype=I8)
        for sid, _, _ in batches:
            self.site_ptr[sid + 1] += 1
        np.cumsum(self.site_ptr, out=self.site_ptr)
        self.tv = np.array(inst.truck_time, dtype=I8)
        self.td = np.array(inst.drone_time, dtype=I8)
        self.K = inst.ptl
        self.Q = inst.drone_capacity
        self.B = inst.drone_endurance
        self.n_sites = n
        from .model import max_routes, tour_horizon_limit

        self.L = max_routes(inst)
        self.FT = tour_horizon_limit(inst) if self.n_batches else -1

        self._route_cap = 1024
        self._ent_cap = 1024 * (n + 2)
        self.route_dur = np.zeros(self._route_cap, dtype=I8)
        self.ent_ptr = np.zeros(self._route_cap + 1, dtype=I8)
        self.ent_site = np.zeros(self._ent_cap, dtype=I8)
        self.ent_off = np.zeros(self._ent_cap, dtype=I8)
        self.ent_kind = np.zeros(self._ent_cap, dtype=U1)
        self.path_ptr = np.zeros(self._route_cap + 1, dtype=I8)
        self.path_site = np.zeros(self._ent_cap, dtype=I8)
        self.sor_ptr = np.zeros(self._route_cap + 1, dtype=I8)
        self.sor_l = np.zeros(self._ent_cap, dtype=I8)
        self.sor_s = np.zeros(self._ent_cap, dtype=I8)
        self.sor_r = np.zeros(self._ent_cap, dtype=I8)
        self.n_routes = np.zeros(1, dtype=I8)
        self.ent_cursor = np.zeros(1, dtype=I8)
        self.path_cursor = np.zeros(1, dtype=I8)
        self.sor_cursor = np.zeros(1, dtype=I8)
        self._key2rid: dict = {}

        self.claimed = np.zeros(max(self.n_batches, 1), dtype=U1)
        self.claim_route = np.zeros(max(self.n_batches, 1), dtype=I8)
        self.claim_kind = np.zeros(max(self.n_batches, 1), dtype=U1)

    def unit_weights(self):
        return self.bc.astype(F8)

    def weights_from(self, pi: dict) -> np.ndarray:
        w = np.zeros(max(self.n_batches, 1), dtype=F8)
        for key, val in pi.items():
            w[self.batch_index[key]] = val
        return w

    def _grow(self):
        self._route_cap *= 2
        self._ent_cap *= 2
        self.route_dur = np.resize(self.route_dur, self._route_cap)
        new_ptr = np.zeros(self._route_cap + 1, dtype=I8)
        new_ptr[: self.ent_ptr.shape[0]] = self.ent_ptr
        self.ent_ptr = new_ptr
        new_ptr = np.zeros(self._route_cap + 1, dtype=I8)
        new_ptr[: self.path_ptr.shape[0]] = self.path_ptr
        self.path_ptr = new_ptr
        new_ptr = np.zeros(self._route_cap + 1, dtype=I8)
        new_ptr[: self.sor_ptr.shape[0]] = self.sor_ptr
        self.sor_ptr = new_ptr
        for name in ("ent_site", "ent_off", "ent_kind", "path_site", "sor_l", "sor_s", "sor_r"):
            setattr(self, name, np.resize(getattr(self, name), self._ent_cap))

    def ensure_headroom(self, routes=4, ents=None):
        n = self.n_sites
        ents = ents if ents is not None else routes * (n + 2)
        while (self.n_routes[0] + routes > self._route_cap
               or self.ent_cursor[0] + ents > self._ent_cap
               or self.path_cursor[0] + ents > self._ent_cap
               or self.sor_cursor[0] + ents > self._ent_cap):
            self._grow()

    def register(self, route: Route) -> int:
        """Encode a route (idempotent per structural key) and return its id."""
        key = route.key()
        rid = self._key2rid.get(key)
        if rid is not None:
            return rid
        self.ensure_headroom()
        rid = int(self.n_routes[0])
        dep, comp = evaluate_route(route, 0, self.inst)
        e0 = int(self.ent_cursor[0])
        k = e0
        drone_served = {s.serve for s in route.sorties}
        for sid in route.path:
            self.ent_site[k] = sid
            self.ent_off[k] = dep[sid]
            self.ent_kind[k] = TRUCK_ENT
            k += 1
        for s in route.sorties:
            self.ent_site[k] = s.serve
            self.ent_off[k] = dep[s.serve]
            self.ent_kind[k] = DRONE_ENT
            k += 1
        self.ent_ptr[rid] = e0
        self.ent_ptr[rid + 1] = k
        self.ent_cursor[0] = k
        self.route_dur[rid] = comp
        p0 = int(self.path_cursor[0])
        for i, sid in enumerate(route.path):
            self.path_site[p0 + i] = sid
        self.path_ptr[rid] = p0
        self.path_ptr[rid + 1] = p0 + len(route.path)
        self.path_cursor[0] = p0 + len(route.path)
        s0 = int(self.sor_cursor[0])
        for i, s in enumerate(route.sorties):
            self.sor_l[s0 + i] = s.launch
            self.sor_s[s0 + i] = s.serve
            self.sor_r[s0 + i] = s.rendezvous
        self.sor_ptr[rid] = s0
        self.sor_ptr[rid + 1] = s0 + len(route.sorties)
        self.sor_cursor[0] = s0 + len(route.sorties)
        self.n_routes[0] = rid + 1
        self._key2rid[key] = rid
        return rid

    def route_of(self, rid: int) -> Route:
        p0, p1 = int(self.path_ptr[rid]), int(self.path_ptr[rid + 1])
        s0, s1 = int(self.sor_ptr[rid]), int(self.sor_ptr[rid + 1])
        path = tuple(int(v) for v in self.path_site[p0:p1])
        sorties = tuple(
            Sortie(int(self.sor_l[i]), int(self.sor_s[i]), int(self.sor_r[i]))
            for i in range(s0, s1)
        )
        return Route(path, sorties)

    # convenience wrappers -------------------------------------------------

    def eval_arrays(self, rids, starts, nr, bw):
        return k_eval(rids, starts, nr, self.ent_ptr, self.ent_site, self.ent_off,
                      self.ent_kind, self.route_dur, self.site_ptr, self.bt, self.bc,
                      bw, self.claimed, self.K, self.Q)

    def eval_claims_arrays(self, rids, starts, nr, bw):
        value, units = k_eval_claims(
            rids, starts, nr, self.ent_ptr, self.ent_site, self.ent_off,
            self.ent_kind, self.route_dur, self.site_ptr, self.bt, self.bc,
            bw, self.claimed, self.claim_route, self.claim_kind, self.K, self.Q)
        return value, units, self.claimed.copy(), self.claim_route.copy(), self.claim_kind.copy()


_ctx_cache: "weakref.WeakKeyDictionary[Instance, ScheduleContext]" = weakref.WeakKeyDictionary()


def get_context(inst: Instance) -> ScheduleContext:
    ctx = _ctx_cache.get(inst)
    if ctx is None:
        ctx = ScheduleContext(inst)
        _ctx_cache[inst] = ctx
    return ctx


def rng_state_from(rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.integers(0, 2**63, dtype=np.uint64)], dtype=U8)
