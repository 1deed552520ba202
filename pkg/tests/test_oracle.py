import dataclasses

import numpy as np
import pytest

from bloodroute.colgen import CGParams, solve
from bloodroute.memetic import MAParams
from bloodroute.model import Instance, Site, derive_drone_times
from bloodroute.oracle import brute_force, enumerate_routes
from bloodroute.pool import PoolParams
from bloodroute.schedule import validate_solution

from conftest import small_instance


def test_oracle_worked_example(motivating, warm_engine):
    obj, sol = brute_force(motivating)
    assert obj == 30
    assert validate_solution(sol.tours, motivating, sol.assignment) == []
    obj_t, sol_t = brute_force(motivating, drone=False)
    assert obj_t == 25
    assert all(not r.sorties for t in sol_t.tours for r in t.routes)


def test_oracle_single_site_round_trip():
    tv = ((0, 50), (50, 0))
    inst = Instance(sites=(Site(1, 0.0, 0.0, ((60, 4),)),), truck_time=tv,
                    drone_time=derive_drone_times(tv, 2), fleet_size=1,
                    drone_capacity=5, drone_endurance=10, horizon_start=0,
                    horizon_end=400, ptl=300).validate()
    obj, sol = brute_force(inst)
    assert obj == 4
    assert len(sol.tours) == 1


def test_oracle_refuses_beyond_limits():
    inst = small_instance(1, n_sites=4)
    with pytest.raises(ValueError, match="tandems"):
        brute_force(dataclasses.replace(inst, fleet_size=3))
    big = small_instance(2, n_sites=4)
    fat = dataclasses.replace(
        big,
        sites=tuple(Site(i, 0.0, 0.0, ((100, 1),)) for i in range(1, 8)),
        truck_time=tuple(tuple(0 if i == j else 5 for j in range(8)) for i in range(8)),
        drone_time=tuple(tuple(0 if i == j else 3 for j in range(8)) for i in range(8)),
    )
    with pytest.raises(ValueError, match="sites"):
        brute_force(fat)


def test_oracle_relabel_invariance(warm_engine):
    inst = small_instance(31, n_sites=4)
    base, _ = brute_force(inst)
    perm = [3, 1, 4, 2]  # new id of old site i is perm[i-1]
    inv = {perm[i - 1]: i for i in range(1, 5)}
    n = 4

    def old_node(new):  # node index mapping including the center
        return 0 if new == 0 else inv[new]

    tv = tuple(tuple(inst.truck_time[old_node(i)][old_node(j)] for j in range(n + 1))
               for i in range(n + 1))
    td = tuple(tuple(inst.drone_time[old_node(i)][old_node(j)] for j in range(n + 1))
               for i in range(n + 1))
    sites = tuple(
        dataclasses.replace(inst.site(inv[new]), id=new) for new in range(1, n + 1))
    relabeled = dataclasses.replace(inst, sites=sites, truck_time=tv, drone_time=td)
    relabeled.validate()
    got, _ = brute_force(relabeled)
    assert got == base


def test_oracle_drone_dominates_truck_only(warm_engine):
    for seed in (3, 11, 25):
        inst = small_instance(seed, n_sites=4)
        d, _ = brute_force(inst)
        t, _ = brute_force(inst, drone=False)
        assert d >= t


def test_heuristic_never_exceeds_oracle(warm_engine):
    for seed in (5, 9):
        inst = small_instance(seed, n_sites=4)
        obj, _ = brute_force(inst)
        sol = solve(inst, PoolParams(pool_size=5000),
                    MAParams(gen_limit=80, pop_size=24), CGParams(seed=seed))
        assert sol.objective <= obj


def test_second_tandem_strictly_helps():
    tv = ((0, 100, 100), (100, 0, 200), (100, 200, 0))
    base = Instance(
        sites=(Site(1, 0.0, 0.0, ((100, 2),)), Site(2, 1.0, 1.0, ((100, 3),))),
        truck_time=tv, drone_time=derive_drone_times(tv, 2), fleet_size=1,
        drone_capacity=5, drone_endurance=10, horizon_start=0, horizon_end=600,
        ptl=150, drone_enabled=False).validate()
    one, _ = brute_force(base, drone=False)
    two, sol2 = brute_force(dataclasses.replace(base, fleet_size=2), drone=False)
    assert one == 3  # pick the bigger batch, the other expires
    assert two == 5
    assert len(sol2.tours) == 2


def test_route_universe_is_structurally_valid(motivating):
    from bloodroute.schedule import route_is_valid, route_duration
    from bloodroute.model import tour_horizon_limit

    ft = tour_horizon_limit(motivating)
    universe = enumerate_routes(motivating, drone=True)
    assert all(route_is_valid(r, motivating) for r in universe)
    assert all(route_duration(r, motivating) <= ft for r in universe)
    keys = {r.key() for r in universe}
    assert len(keys) == len(universe)
    # truck-only universe is contained in the drone universe
    truck_universe = {r.key() for r in enumerate_routes(motivating, drone=False)}
    assert truck_universe <= keys
