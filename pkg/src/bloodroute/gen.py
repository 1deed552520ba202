"""Benchmark instance synthesis.

Sites live on a 1000x1000 grid around a central processing center: half are
clustered around the midpoints of the grid's quadrants (polar offsets with
normally distributed radius), half are dispersed uniformly.  Truck times
scale Euclidean distances so that two round trips to the farthest site fit
the working day; drone times divide truck times by a speed factor (ceiled).
Donation activity is split between low-volume and high-volume sites and
between uniform and midday-peaked completion-time profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Instance, Site, derive_drone_times

GRID = 1000
ZONE_CENTERS = ((250.0, 250.0), (250.0, 750.0), (750.0, 250.0), (750.0, 750.0))

# small/large pairing of site counts and fleet sizes used by the smallest
# benchmark class (3..21 sites, 1..4 tandems)
C1_SHAPES = ((3, 1), (5, 1), (7, 2), (9, 2), (11, 2),
             (13, 3), (15, 3), (17, 3), (19, 4), (21, 4))


@dataclass
class GenConfig:
    n_sites: int
    fleet_size: int = 1
    seed: int = 0
    alpha: float = 2.0
    drone_capacity: int = 10
    drone_endurance: int = 30
    horizon_start: int = 0
    horizon_end: int = 800
    ptl: int = 300
    cluster_sigma: float = 100.0
    pc_xy: tuple = (500.0, 500.0)
    drone_enabled: bool = True
    low_units: tuple = (1, 25)
    high_units: tuple = (25, 50)

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be >= 1")
        if self.fleet_size < 1:
            raise ValueError("fleet_size must be >= 1")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")


def sample_clustered_site(rng: np.random.Generator, sigma: float = 100.0):
    """A point near one of the four quadrant-midpoint zone centers: uniform
    angle, normal radius; out-of-grid draws are resampled, not clamped."""
    while True:
        cx, cy = ZONE_CENTERS[int(rng.integers(4))]
        theta = rng.uniform(0.0, 2.0 * math.pi)
        rho = rng.normal(0.0, sigma)
        x = cx + rho * math.cos(theta)
        y = cy + rho * math.sin(theta)
        if 0.0 <= x <= GRID and 0.0 <= y <= GRID:
            return x, y


def sample_dispersed_site(rng: np.random.Generator):
    return float(rng.uniform(0.0, GRID)), float(rng.uniform(0.0, GRID))


def generate_donation_schedule(a: int, b: int, total: int, peaked: bool,
                               rng: np.random.Generator):
    """Completion times for ``total`` units in [a, b]; same-minute units are
    merged into one batch.  The peaked profile is normal around the window
    midpoint with sigma = (b - a)/6, clamped into the window."""
    if peaked:
        mid = (a + b) / 2.0
        sigma = max((b - a) / 6.0, 1e-9)
        times = rng.normal(mid, sigma, size=total)
    else:
        times = rng.uniform(a, b + 1, size=total)
    merged: dict[int, int] = {}
    for t in times:
        ti = min(max(int(math.floor(t)), a), b)
        merged[ti] = merged.get(ti, 0) + 1
    return tuple(sorted(merged.items()))


def generate_instance(cfg: GenConfig) -> Instance:
    """Deterministic function of the config (one rng stream, fixed draw order)."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_sites
    ts, te = cfg.horizon_start, cfg.horizon_end

    n_clustered = (n + 1) // 2
    coords = [sample_clustered_site(rng, cfg.cluster_sigma) for _ in range(n_clustered)]
    coords += [sample_dispersed_site(rng) for _ in range(n - n_clustered)]

    a_hi = ts + (te - ts) // 3
    b_lo = ts + (2 * (te - ts) + 2) // 3
    windows = [(int(rng.integers(ts, a_hi + 1)), int(rng.integers(b_lo, te + 1)))
               for _ in range(n)]

    n_low = (n + 1) // 2
    low_mask = np.zeros(n, dtype=bool)
    low_mask[rng.permutation(n)[:n_low]] = True
    totals = [
        int(rng.integers(cfg.low_units[0], cfg.low_units[1] + 1)) if low_mask[i]
        else int(rng.integers(cfg.high_units[0], cfg.high_units[1] + 1))
        for i in range(n)
    ]

    n_uniform = (n + 1) // 2
    uniform_mask = np.zeros(n, dtype=bool)
    uniform_mask[rng.permutation(n)[:n_uniform]] = True

    sites = []
    for i in range(n):
        a, b = windows[i]
        schedule = generate_donation_schedule(a, b, totals[i], not uniform_mask[i], rng)
        sites.append(Site(i + 1, coords[i][0], coords[i][1], schedule))

    pts = [cfg.pc_xy] + coords
    dmax = max(math.dist(cfg.pc_xy, c) for c in coords)
    scale = (te - ts) / (4.0 * dmax) if dmax > 0 else 1.0
    tv = [[0] * (n + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            t = max(1, int(math.floor(math.dist(pts[i], pts[j]) * scale + 0.5)))
            tv[i][j] = t
            tv[j][i] = t
    truck = tuple(tuple(row) for row in tv)
    inst = Instance(
        sites=tuple(sites),
        truck_time=truck,
        drone_time=derive_drone_times(truck, cfg.alpha),
        fleet_size=cfg.fleet_size,
        drone_capacity=cfg.drone_capacity,
        drone_endurance=cfg.drone_endurance,
        horizon_start=ts,
        horizon_end=te,
        ptl=cfg.ptl,
        drone_enabled=cfg.drone_enabled,
        alpha=cfg.alpha,
        pc_xy=cfg.pc_xy,
    )
    return inst.validate()
