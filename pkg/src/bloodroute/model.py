"""Core data model: problem instances, file I/O, and derived quantities.

A problem instance is a complete network of one processing center (node 0)
plus N donation sites (nodes 1..N), integer-minute travel matrices for the
truck and the drone, a per-site donation schedule, and the operational
parameters of the truck-drone tandems (fleet size, drone payload capacity,
drone battery endurance per flight leg, planning horizon, and the
processing time limit within which a picked-up unit must reach the center).

All times are integer minutes; this keeps every schedule comparison exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

PC = 0  # node id of the processing center


class ModelError(ValueError):
    """An instance violates a structural invariant."""


class ParseError(ValueError):
    """An instance/solution file is malformed; carries line context."""

    def __init__(self, msg, line_no=None):
        if line_no is not None:
            msg = f"line {line_no}: {msg}"
        super().__init__(msg)
        self.line_no = line_no


class Sortie(NamedTuple):
    """One drone flight: launch at a truck stop, serve one site, rejoin the truck."""

    launch: int
    serve: int
    rendezvous: int


@dataclass(frozen=True)
class Site:
    """A donation site with its daily schedule of completed batches.

    ``donations`` is a tuple of (time, count) pairs sorted by strictly
    increasing time; each pair is one batch that becomes available at that
    minute and is picked up all-or-nothing.
    """

    id: int
    x: float
    y: float
    donations: tuple[tuple[int, int], ...] = ()

    @property
    def first_time(self):
        return self.donations[0][0]

    @property
    def last_time(self):
        return self.donations[-1][0]

    @property
    def total_units(self):
        return sum(c for _, c in self.donations)


@dataclass(frozen=True)
class Instance:
    """An immutable problem instance; safe to share across workers."""

    sites: tuple[Site, ...]
    truck_time: tuple[tuple[int, ...], ...]
    drone_time: tuple[tuple[int, ...], ...]
    fleet_size: int
    drone_capacity: int
    drone_endurance: int
    horizon_start: int
    horizon_end: int
    ptl: int
    drone_enabled: bool = True
    alpha: float = 2.0
    pc_xy: tuple[float, float] = (0.0, 0.0)

    pc_id: int = field(default=PC, init=False, repr=False)

    @property
    def n_sites(self):
        return len(self.sites)

    def site(self, sid: int) -> Site:
        return self.sites[sid - 1]

    def validate(self):
        """Raise ModelError naming the first violated invariant."""
        n = len(self.sites)
        if n < 1:
            raise ModelError("at least one donation site required")
        for idx, s in enumerate(self.sites):
            if s.id != idx + 1:
                raise ModelError(f"site ids must be exactly 1..{n}, got {s.id} at position {idx}")
            prev = None
            for t, c in s.donations:
                if prev is not None and t <= prev:
                    raise ModelError(f"site {s.id}: donation times must be strictly increasing")
                prev = t
                if c < 1:
                    raise ModelError(f"site {s.id}: donation count at t={t} must be >= 1")
                if not (self.horizon_start <= t <= self.horizon_end):
                    raise ModelError(f"site {s.id}: donation time {t} outside horizon")
        for name, m in (("truck", self.truck_time), ("drone", self.drone_time)):
            if len(m) != n + 1 or any(len(row) != n + 1 for row in m):
                raise ModelError(f"{name} matrix must be {n + 1}x{n + 1}")
            for i in range(n + 1):
                for j in range(n + 1):
                    v = m[i][j]
                    if i == j and v != 0:
                        raise ModelError(f"{name} matrix diagonal must be zero at ({i},{j})")
                    if i != j and v <= 0:
                        raise ModelError(f"{name} matrix off-diagonal must be positive at ({i},{j})")
        for i in range(n + 1):
            for j in range(n + 1):
                if i != j and self.drone_time[i][j] > self.truck_time[i][j]:
                    raise ModelError(f"drone time exceeds truck time on ({i},{j})")
        if self.horizon_start >= self.horizon_end:
            raise ModelError("horizon_start must be < horizon_end")
        if self.ptl <= 0:
            raise ModelError("ptl must be positive")
        if self.fleet_size < 1:
            raise ModelError("fleet_size must be >= 1")
        if self.drone_capacity < 1:
            raise ModelError("drone_capacity must be >= 1")
        if self.drone_endurance < 0:
            raise ModelError("drone_endurance must be >= 0")
        return self

    def batches(self) -> list[tuple[int, int, int]]:
        """All batches as (site, time, count), sites in id order."""
        out = []
        for s in self.sites:
            for t, c in s.donations:
                out.append((s.id, t, c))
        return out


def derive_drone_times(truck_time, alpha: float):
    """Drone matrix as ceil(truck/alpha) off-diagonal, zero on the diagonal."""
    n = len(truck_time)
    return tuple(
        tuple(0 if i == j else math.ceil(truck_time[i][j] / alpha) for j in range(n))
        for i in range(n)
    )


def feasible_sorties(inst: Instance) -> set[Sortie]:
    """All (launch, serve, rendezvous) site triples both of whose drone legs
    fit within the battery endurance.

    The battery is swapped at every landing, so each leg is checked against
    the endurance independently.
    """
    if not inst.drone_enabled:
        return set()
    b = inst.drone_endurance
    td = inst.drone_time
    n = inst.n_sites
    out = set()
    for i in range(1, n + 1):
        for nn in range(1, n + 1):
            if nn == i or td[i][nn] > b:
                continue
            for j in range(1, n + 1):
                if j == i or j == nn or td[nn][j] > b:
                    continue
                out.add(Sortie(i, nn, j))
    return out


def max_routes(inst: Instance) -> int:
    """Upper bound on routes one tandem can perform in a day.

    ceil((Te - Ts + 2K) / min_i 2*t_truck(0,i)).
    """
    if inst.n_sites < 1:
        raise ModelError("at least one donation site required")
    shortest = min(2 * inst.truck_time[PC][i] for i in range(1, inst.n_sites + 1))
    num = inst.horizon_end - inst.horizon_start + 2 * inst.ptl
    return -(-num // shortest)


def tour_horizon_limit(inst: Instance) -> int:
    """Latest useful route completion time: latest donation time plus the
    processing time limit.  Any route completing later delivers nothing viable.
    """
    latest = None
    for s in inst.sites:
        if s.donations:
            t = s.last_time
            latest = t if latest is None else max(latest, t)
    if latest is None:
        raise ModelError("instance has no donations")
    return latest + inst.ptl


# ---------------------------------------------------------------------------
# Instance file schema (line-oriented UTF-8 text).
#
#   bloodroute-instance 1
#   sites N
#   fleet F
#   capacity Q
#   endurance B
#   horizon Ts Te
#   ptl K
#   alpha A
#   drone 0|1
#   pc X Y
#   site ID X Y t:count t:count ...
#   truck
#   N+1 rows of N+1 integers
#   drone
#   N+1 rows of N+1 integers
#
# The canonical form sorts sites by id, batches by time, and always writes
# the drone matrix explicitly.  A file may omit the trailing drone section,
# in which case drone times are derived as ceil(truck/alpha).
# ---------------------------------------------------------------------------

MAGIC = "bloodroute-instance 1"


def _fmt_num(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def dumps_instance(inst: Instance) -> str:
    inst.validate()
    lines = [MAGIC]
    lines.append(f"sites {inst.n_sites}")
    lines.append(f"fleet {inst.fleet_size}")
    lines.append(f"capacity {inst.drone_capacity}")
    lines.append(f"endurance {inst.drone_endurance}")
    lines.append(f"horizon {inst.horizon_start} {inst.horizon_end}")
    lines.append(f"ptl {inst.ptl}")
    lines.append(f"alpha {_fmt_num(inst.alpha)}")
    lines.append(f"drone {1 if inst.drone_enabled else 0}")
    lines.append(f"pc {_fmt_num(inst.pc_xy[0])} {_fmt_num(inst.pc_xy[1])}")
    for s in sorted(inst.sites, key=lambda s: s.id):
        parts = [f"site {s.id} {_fmt_num(s.x)} {_fmt_num(s.y)}"]
        parts += [f"{t}:{c}" for t, c in sorted(s.donations)]
        lines.append(" ".join(parts))
    lines.append("truck")
    for row in inst.truck_time:
        lines.append(" ".join(str(v) for v in row))
    lines.append("drone")
    for row in inst.drone_time:
        lines.append(" ".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def loads_instance(text: str) -> Instance:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ParseError(f"expected header '{MAGIC}'", 1)

    header = {}
    sites = []
    pc_xy = (0.0, 0.0)
    i = 1
    n_lines = len(lines)

    def err(msg, ln):
        raise ParseError(msg, ln + 1)

    while i < n_lines:
        raw = lines[i].strip()
        if not raw:
            i += 1
            continue
        tok = raw.split()
        key = tok[0]
        if key == "truck":
            break
        try:
            if key == "sites":
                header["sites"] = int(tok[1])
            elif key == "fleet":
                header["fleet"] = int(tok[1])
            elif key == "capacity":
                header["capacity"] = int(tok[1])
            elif key == "endurance":
                header["endurance"] = int(tok[1])
            elif key == "horizon":
                header["horizon"] = (int(tok[1]), int(tok[2]))
            elif key == "ptl":
                header["ptl"] = int(tok[1])
            elif key == "alpha":
                header["alpha"] = float(tok[1])
            elif key == "drone":
                header["drone"] = bool(int(tok[1]))
            elif key == "pc":
                pc_xy = (float(tok[1]), float(tok[2]))
            elif key == "site":
                sid = int(tok[1])
                x, y = float(tok[2]), float(tok[3])
                dons = []
                for pair in tok[4:]:
                    t_s, _, c_s = pair.partition(":")
                    dons.append((int(t_s), int(c_s)))
                sites.append(Site(sid, x, y, tuple(sorted(dons))))
            else:
                err(f"unknown field '{key}'", i)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            err(f"malformed '{key}' line: {exc}", i)
        i += 1

    for want in ("sites", "fleet", "capacity", "endurance", "horizon", "ptl"):
        if want not in header:
            raise ParseError(f"missing header field '{want}'")
    n = header["sites"]
    if len(sites) != n:
        raise ParseError(f"expected {n} site lines, found {len(sites)}")

    def read_matrix(start):
        rows = []
        j = start
        while j < n_lines and len(rows) < n + 1:
            raw = lines[j].strip()
            if raw:
                try:
                    rows.append(tuple(int(v) for v in raw.split()))
                except ValueError as exc:
                    err(f"malformed matrix row: {exc}", j)
            j += 1
        if len(rows) < n + 1:
            raise ParseError("truncated travel matrix")
        return tuple(rows), j

    if i >= n_lines or lines[i].strip() != "truck":
        raise ParseError("missing 'truck' matrix section")
    truck, i = read_matrix(i + 1)

    drone = None
    while i < n_lines and not lines[i].strip():
        i += 1
    if i < n_lines and lines[i].strip() == "drone":
        drone, i = read_matrix(i + 1)

    alpha = header.get("alpha", 2.0)
    if drone is None:
        drone = derive_drone_times(truck, alpha)

    inst = Instance(
        sites=tuple(sorted(sites, key=lambda s: s.id)),
        truck_time=truck,
        drone_time=drone,
        fleet_size=header["fleet"],
        drone_capacity=header["capacity"],
        drone_endurance=header["endurance"],
        horizon_start=header["horizon"][0],
        horizon_end=header["horizon"][1],
        ptl=header["ptl"],
        drone_enabled=header.get("drone", True),
        alpha=alpha,
        pc_xy=pc_xy,
    )
    inst.validate()
    return inst


def load_instance(path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_instance(fh.read())


def save_instance(inst: Instance, path):
    text = dumps_instance(inst)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
