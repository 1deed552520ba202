import os
import pathlib

import numpy as np
import pytest

from bloodroute.gen import GenConfig, generate_instance
from bloodroute.model import Instance, Site, Sortie, derive_drone_times
from bloodroute.schedule import Route, Tour

DATA = pathlib.Path(__file__).parent / "data"

# Worked example: four sites, one tandem, five-hour processing limit,
# drone at twice truck speed with 30-minute endurance and 10-unit payload.
TRUCK_MATRIX = (
    (0, 130, 120, 140, 150),
    (130, 0, 30, 110, 30),
    (120, 30, 0, 120, 30),
    (140, 110, 120, 0, 90),
    (150, 30, 30, 90, 0),
)


def build_motivating() -> Instance:
    sites = (
        Site(1, 250.0, 720.0, ((180, 5),)),
        Site(2, 180.0, 260.0, ((180, 6),)),
        Site(3, 820.0, 640.0, ((150, 3), (210, 4), (240, 1), (270, 5))),
        Site(4, 460.0, 430.0, ((150, 4), (180, 2))),
    )
    return Instance(
        sites=sites,
        truck_time=TRUCK_MATRIX,
        drone_time=derive_drone_times(TRUCK_MATRIX, 2),
        fleet_size=1,
        drone_capacity=10,
        drone_endurance=30,
        horizon_start=0,
        horizon_end=720,
        ptl=300,
        drone_enabled=True,
        alpha=2.0,
        pc_xy=(500.0, 80.0),
    ).validate()


@pytest.fixture(scope="session")
def motivating() -> Instance:
    return build_motivating()


@pytest.fixture(scope="session")
def motivating_path() -> str:
    return str(DATA / "motivating.inst")


@pytest.fixture
def fig1c_route() -> Route:
    return Route((2, 4, 3), (Sortie(2, 1, 4),))


@pytest.fixture
def fig1c_tour(fig1c_route) -> Tour:
    return Tour((fig1c_route,), (60,))


def small_instance(seed: int, n_sites: int = 4, fleet: int = 1, max_units: int = 4) -> Instance:
    """A tiny generated instance with few batches per site (oracle-friendly)."""
    cfg = GenConfig(n_sites=n_sites, fleet_size=fleet, seed=seed,
                    low_units=(1, max_units), high_units=(1, max_units))
    return generate_instance(cfg)


@pytest.fixture(scope="session")
def warm_engine(motivating):
    """Trigger JIT compilation once so timed tests measure the solver."""
    from bloodroute.colgen import CGParams, solve
    from bloodroute.memetic import MAParams
    from bloodroute.oracle import brute_force
    from bloodroute.pool import PoolParams

    solve(motivating, PoolParams(pool_size=500), MAParams(gen_limit=4, pop_size=8),
          CGParams(seed=0))
    brute_force(small_instance(0, n_sites=2))
    return True
