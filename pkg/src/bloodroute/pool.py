"""Route pool construction by progressive expansion.

Seeds the pool with every single-visit truck-only route, then alternates
breadth-first passes of road-travel extensions (append one unvisited site
before the return leg) and aerial-travel extensions (attach one feasible
sortie between existing stops, with at most ``div_limit`` stops between
launch and rendezvous).  Routes that could not complete by the horizon
limit even when started at time zero are not pooled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Instance, Sortie, feasible_sorties, tour_horizon_limit
from .schedule import Route, route_duration, route_is_valid


@dataclass
class PoolParams:
    pool_size: int = 500_000
    div_limit: int = 1

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.div_limit < 0:
            raise ValueError("div_limit must be >= 0")


def road_extend(route: Route, site: int) -> Route:
    """Append ``site`` as the last truck stop before the return to the
    center; the site must not already appear in the route in any role."""
    if site in route.all_sites:
        raise ValueError(f"site {site} already present in the route")
    return Route(route.path + (site,), route.sorties)


def aerial_extend(route: Route, sortie: Sortie, params: PoolParams, inst: Instance) -> Route:
    """Attach a sortie to the route.

    The launch and rendezvous must be existing truck stops (launch first,
    at most ``div_limit`` stops between), the served site unvisited, both
    legs within battery endurance, and no overlap with existing sorties.
    """
    if sortie not in feasible_sorties(inst):
        raise ValueError(f"sortie {tuple(sortie)} is not in the feasible sortie set")
    if sortie.launch not in route.path:
        raise ValueError(f"launch {sortie.launch} is not a truck stop")
    if sortie.rendezvous not in route.path:
        raise ValueError(f"rendezvous {sortie.rendezvous} is not a truck stop")
    lpos = route.path.index(sortie.launch)
    rpos = route.path.index(sortie.rendezvous)
    if lpos >= rpos:
        raise ValueError("launch must precede the rendezvous on the truck path")
    if rpos - lpos - 1 > params.div_limit:
        raise ValueError(f"more than {params.div_limit} stops between launch and rendezvous")
    if sortie.serve in route.all_sites:
        raise ValueError(f"served site {sortie.serve} already visited by the route")
    for other in route.sorties:
        if other.launch == sortie.launch:
            raise ValueError(f"(8) site {sortie.launch} already launches a sortie")
        if other.rendezvous == sortie.rendezvous:
            raise ValueError(f"(10) site {sortie.rendezvous} already recovers a sortie")
        olo, ohi = route.sortie_span(other)
        for p in (lpos, rpos):
            if olo < p < ohi:
                raise ValueError(f"(9) overlaps sortie {tuple(other)}")
        for p in (olo, ohi):
            if lpos < p < rpos:
                raise ValueError(f"(9) overlaps sortie {tuple(other)}")
    return Route(route.path, route.sorties + (sortie,))


def _aerial_candidates(route: Route, sorties_by_launch, params: PoolParams):
    """Valid sortie attachments for one route, assuming a feasible-set index
    keyed by launch site."""
    visited = set(route.all_sites)
    pos = {sid: k for k, sid in enumerate(route.path)}
    spans = [route.sortie_span(s) for s in route.sorties]
    used_l = {s.launch for s in route.sorties}
    used_r = {s.rendezvous for s in route.sorties}
    out = []
    for lpos, launch in enumerate(route.path):
        if launch in used_l:
            continue
        for rpos in range(lpos + 1, min(lpos + 2 + params.div_limit, len(route.path))):
            rdv = route.path[rpos]
            if rdv in used_r:
                continue
            bad = False
            for olo, ohi in spans:
                if olo < lpos < ohi or olo < rpos < ohi or lpos < olo < rpos or lpos < ohi < rpos:
                    bad = True
                    break
            if bad:
                continue
            for s in sorties_by_launch.get(launch, ()):
                if s.rendezvous == rdv and s.serve not in visited:
                    out.append(s)
    return out


def build_pool(inst: Instance, params: PoolParams, rng: np.random.Generator,
               drone: Optional[bool] = None) -> list[Route]:
    """Deterministic (given the rng) pool of structurally valid routes."""
    n = inst.n_sites
    if params.pool_size < n:
        raise ValueError(f"pool_size {params.pool_size} below the {n} seed routes")
    drone_on = inst.drone_enabled if drone is None else drone
    try:
        ft = tour_horizon_limit(inst)
    except Exception:
        ft = None

    sorties_by_launch: dict[int, list[Sortie]] = {}
    if drone_on:
        for s in sorted(feasible_sorties(inst)):
            sorties_by_launch.setdefault(s.launch, []).append(s)

    pool: list[Route] = [Route((i,), ()) for i in range(1, n + 1)]
    seen = {r.key() for r in pool}
    frontier = list(pool)

    while len(pool) < params.pool_size and frontier:
        candidates: list[Route] = []
        for route in frontier:
            visited = set(route.all_sites)
            for site in range(1, n + 1):
                if site not in visited:
                    candidates.append(Route(route.path + (site,), route.sorties))
            if drone_on:
                for s in _aerial_candidates(route, sorties_by_launch, params):
                    candidates.append(Route(route.path, route.sorties + (s,)))
        order = rng.permutation(len(candidates))
        new_gen = []
        for idx in order:
            cand = candidates[idx]
            key = cand.key()
            if key in seen:
                continue
            if ft is not None and route_duration(cand, inst) > ft:
                seen.add(key)
                continue
            seen.add(key)
            pool.append(cand)
            new_gen.append(cand)
            if len(pool) >= params.pool_size:
                break
        frontier = new_gen
    return pool
