"""Deterministic semantics of routes and tours.

A route is one processing-center-to-processing-center trip: an ordered list
of truck stops plus attached drone sorties.  A tour is a tandem's daily
sequence of routes with per-route start times.  Times propagate at
earliest-start pace: within a route the tandem never idles; waiting is
representable only by delaying a route's start.

The validator mirrors the numbered constraints of the exported
mixed-integer model (see :mod:`bloodroute.oracle`); violation messages
carry the constraint number in parentheses:

  (2)  a batch is picked up at most once across the fleet
  (3)  truck pickups only at truck-visited sites
  (4)  drone pickups only at drone-served sites
  (5)  a site is visited at most once per route
  (8)  at most one sortie launched from a site per route
  (9)  sorties of one route do not overlap on the truck path
  (10) at most one sortie rendezvous at a site per route
  (13) a route starts only after the previous one completed
  (14) at most L routes per tour
  (17) a sortie's rendezvous stop follows its launch stop
  (20) pickups reach the center within the processing time limit
  (21) pickups only from batches completed before departure
  (22) drone payload per sortie within capacity
  (25) sortie legs within battery endurance
  (33) at most fleet_size tours
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .model import PC, Instance, Sortie, feasible_sorties, max_routes

TRUCK = "truck"
DRONE = "drone"


@dataclass(frozen=True)
class Route:
    """Truck path (PC implicit at both ends) plus drone sorties.

    Sortie launch/rendezvous sites must be truck stops; the served site is
    visited only by the drone.
    """

    path: tuple[int, ...]
    sorties: tuple[Sortie, ...] = ()

    def key(self):
        return (self.path, tuple(sorted(self.sorties)))

    @property
    def all_sites(self) -> tuple[int, ...]:
        return self.path + tuple(s.serve for s in self.sorties)

    def sortie_span(self, s: Sortie) -> tuple[int, int]:
        return (self.path.index(s.launch), self.path.index(s.rendezvous))


@dataclass(frozen=True)
class Tour:
    routes: tuple[Route, ...]
    route_starts: tuple[int, ...]

    def __post_init__(self):
        if len(self.routes) != len(self.route_starts):
            raise ValueError("one start time per route required")


@dataclass
class ScheduleEval:
    """Status tuples and pickup accounting for one tour.

    ``departures[m][i]`` is the departure minute from site ``i`` in route
    ``m`` (drone-served sites included); ``pickups`` maps (site, batch time)
    to (route index, carrier).
    """

    departures: list[dict[int, int]]
    completions: list[int]
    pickups: dict[tuple[int, int], tuple[int, str]]
    total_viable: int
    weighted_value: float


def route_violations(route: Route, inst: Instance) -> list[str]:
    """Structural checks for a single route; empty list when valid."""
    out = []
    n = inst.n_sites
    if not route.path:
        out.append("route has an empty truck path")
        return out
    for sid in route.all_sites:
        if not (1 <= sid <= n):
            out.append(f"unknown site id {sid}")
            return out
    seen = set()
    for sid in route.all_sites:
        if sid in seen:
            out.append(f"(5) site {sid} appears more than once in the route")
        seen.add(sid)
    pos = {sid: k for k, sid in enumerate(route.path)}
    b = inst.drone_endurance
    spans = []
    for s in route.sorties:
        if not inst.drone_enabled:
            out.append(f"(25) sortie {tuple(s)} in a drone-disabled instance")
            continue
        if len({s.launch, s.serve, s.rendezvous}) != 3:
            out.append(f"(25) sortie {tuple(s)} sites are not pairwise distinct")
            continue
        if s.launch not in pos:
            out.append(f"(8) sortie launch {s.launch} is not a truck stop")
            continue
        if s.rendezvous not in pos:
            out.append(f"(10) sortie rendezvous {s.rendezvous} is not a truck stop")
            continue
        if pos[s.launch] >= pos[s.rendezvous]:
            out.append(f"(17) sortie {tuple(s)} rendezvous does not follow its launch")
            continue
        if inst.drone_time[s.launch][s.serve] > b or inst.drone_time[s.serve][s.rendezvous] > b:
            out.append(f"(25) sortie {tuple(s)} leg exceeds battery endurance")
            continue
        spans.append((pos[s.launch], pos[s.rendezvous], s))
    launches = [s.launch for _, _, s in spans]
    rdvs = [s.rendezvous for _, _, s in spans]
    if len(set(launches)) != len(launches):
        out.append("(8) more than one sortie launched from the same site")
    if len(set(rdvs)) != len(rdvs):
        out.append("(10) more than one sortie rendezvous at the same site")
    for a in range(len(spans)):
        for c in range(len(spans)):
            if a == c:
                continue
            lo, hi, _ = spans[a]
            for endpoint in spans[c][:2]:
                if lo < endpoint < hi:
                    out.append(
                        f"(9) sorties {tuple(spans[a][2])} and {tuple(spans[c][2])} overlap"
                    )
                    break
            else:
                continue
            break
    return out


def route_is_valid(route: Route, inst: Instance) -> bool:
    return not route_violations(route, inst)


def evaluate_route(route: Route, start: int, inst: Instance):
    """Earliest-start propagation along the truck path with drone
    synchronization at rendezvous stops.

    Returns (departures, completion); ``departures`` covers truck stops and
    drone-served sites.
    """
    tv, td = inst.truck_time, inst.drone_time
    rdv_sortie = {s.rendezvous: s for s in route.sorties}
    dep: dict[int, int] = {}
    prev = PC
    t = start
    for sid in route.path:
        arrive = t + tv[prev][sid]
        d = arrive
        s = rdv_sortie.get(sid)
        if s is not None:
            serve_dep = dep[s.launch] + td[s.launch][s.serve]
            dep[s.serve] = serve_dep
            d = max(arrive, serve_dep + td[s.serve][sid])
        dep[sid] = d
        t = d
        prev = sid
    completion = t + tv[prev][PC]
    return dep, completion


def route_duration(route: Route, inst: Instance) -> int:
    return evaluate_route(route, 0, inst)[1]


def truck_only_strip(route: Route) -> Route:
    """The same truck path with every sortie removed."""
    return Route(route.path, ())


def assign_pickups(
    tour: Tour,
    availability: Optional[set[tuple[int, int]]],
    inst: Instance,
    batch_weights: Optional[dict[tuple[int, int], float]] = None,
) -> ScheduleEval:
    """Deterministic pickup accounting for one tour.

    A batch (i, t) is eligible for a visit in route m iff it is available,
    t <= departure(i) and completion(m) <= t + K.  Truck stops take every
    eligible batch; drone-served sites take batches newest-first, skipping
    any batch that would push the sortie load past the payload capacity.
    Earlier routes claim batches first.  ``batch_weights`` switches the
    reported weighted value from unit counts to the given per-batch weights.
    """
    site_batches = {s.id: s.donations for s in inst.sites}
    if availability is None:
        availability = {(s.id, t) for s in inst.sites for t, _ in s.donations}
    claimed: set[tuple[int, int]] = set()
    pickups: dict[tuple[int, int], tuple[int, str]] = {}
    departures = []
    completions = []
    total = 0
    value = 0.0
    K = inst.ptl
    Q = inst.drone_capacity
    for m, (route, start) in enumerate(zip(tour.routes, tour.route_starts)):
        dep, comp = evaluate_route(route, start, inst)
        departures.append(dep)
        completions.append(comp)
        drone_served = {s.serve for s in route.sorties}
        for sid in route.path + tuple(s.serve for s in route.sorties):
            is_drone = sid in drone_served
            window = [
                (t, c)
                for t, c in site_batches.get(sid, ())
                if (sid, t) in availability
                and (sid, t) not in claimed
                and t <= dep[sid]
                and comp <= t + K
            ]
            if is_drone:
                load = 0
                for t, c in sorted(window, reverse=True):
                    if load + c > Q:
                        continue
                    load += c
                    claimed.add((sid, t))
                    pickups[(sid, t)] = (m, DRONE)
                    total += c
                    value += batch_weights[(sid, t)] if batch_weights else c
            else:
                for t, c in window:
                    claimed.add((sid, t))
                    pickups[(sid, t)] = (m, TRUCK)
                    total += c
                    value += batch_weights[(sid, t)] if batch_weights else c
    return ScheduleEval(departures, completions, pickups, total, value)


def validate_solution(
    tours: list[Tour],
    inst: Instance,
    assignment=None,
) -> list[str]:
    """Full feasibility sweep over a fleet plan; returns the violation list.

    ``assignment`` is either a mapping (site, batch time) -> (tour index,
    route index, carrier) or an iterable of such pairs (which may contain
    duplicate batches, caught as rule (2) violations).  When omitted,
    pickups are derived deterministically with shared availability, in
    which case only structural and timing rules can fail.
    """
    out = []
    if len(tours) > inst.fleet_size:
        out.append(f"(33) {len(tours)} tours exceed fleet size {inst.fleet_size}")
    try:
        limit = max_routes(inst)
    except Exception:
        limit = None

    schedules = []
    for ti, tour in enumerate(tours):
        if limit is not None and len(tour.routes) > limit:
            out.append(f"(14) tour {ti}: {len(tour.routes)} routes exceed the bound {limit}")
        prev_comp = None
        deps, comps = [], []
        for m, (route, start) in enumerate(zip(tour.routes, tour.route_starts)):
            for v in route_violations(route, inst):
                out.append(f"tour {ti} route {m}: {v}")
            if route_violations(route, inst):
                deps.append({})
                comps.append(None)
                continue
            dep, comp = evaluate_route(route, start, inst)
            deps.append(dep)
            comps.append(comp)
            if prev_comp is not None and start < prev_comp:
                out.append(
                    f"(13) tour {ti} route {m} starts at {start} before previous completion {prev_comp}"
                )
            prev_comp = comp
        schedules.append((deps, comps))

    if assignment is None:
        records = []
        availability = {(s.id, t) for s in inst.sites for t, _ in s.donations}
        for ti, tour in enumerate(tours):
            ev = assign_pickups(tour, availability, inst)
            for (sid, t), (m, carrier) in ev.pickups.items():
                records.append(((sid, t), (ti, m, carrier)))
                availability.discard((sid, t))
    elif hasattr(assignment, "items"):
        records = list(assignment.items())
    else:
        records = list(assignment)

    batch_count = {(s.id, t): c for s in inst.sites for t, c in s.donations}
    seen_batches = set()
    sortie_loads: dict[tuple[int, int, int], int] = {}
    for (sid, t), (ti, m, carrier) in sorted(records):
        if (sid, t) not in batch_count:
            out.append(f"unknown batch (site {sid}, t={t})")
            continue
        if (sid, t) in seen_batches:
            out.append(f"(2) batch (site {sid}, t={t}) claimed more than once")
            continue
        seen_batches.add((sid, t))
        if ti >= len(tours) or m >= len(tours[ti].routes):
            out.append(f"claim (site {sid}, t={t}) references missing tour/route ({ti},{m})")
            continue
        route = tours[ti].routes[m]
        deps, comps = schedules[ti]
        if comps[m] is None:
            continue
        drone_served = {s.serve for s in route.sorties}
        if carrier == TRUCK and sid not in route.path:
            out.append(f"(3) truck claim at site {sid} not on the truck path of tour {ti} route {m}")
            continue
        if carrier == DRONE and sid not in drone_served:
            out.append(f"(4) drone claim at site {sid} not drone-served in tour {ti} route {m}")
            continue
        if t > deps[m][sid]:
            out.append(
                f"(21) batch (site {sid}, t={t}) claimed before completion (departure {deps[m][sid]})"
            )
        if comps[m] > t + inst.ptl:
            out.append(
                f"(20) batch (site {sid}, t={t}) expires before route completion {comps[m]}"
            )
        if carrier == DRONE:
            key = (ti, m, sid)
            sortie_loads[key] = sortie_loads.get(key, 0) + batch_count[(sid, t)]
    for (ti, m, sid), load in sorted(sortie_loads.items()):
        if load > inst.drone_capacity:
            out.append(
                f"(22) sortie load {load} at site {sid} in tour {ti} route {m} exceeds capacity {inst.drone_capacity}"
            )
    return out
