import dataclasses
import itertools

import numpy as np
import pytest

from bloodroute.colgen import (
    CGParams,
    Solution,
    dumps_solution,
    finalize_integer,
    fractional_check,
    load_solution,
    loads_solution,
    solve,
    write_solution,
)
from bloodroute.lp import Column
from bloodroute.memetic import MAParams
from bloodroute.model import Instance, Site, derive_drone_times
from bloodroute.pool import PoolParams
from bloodroute.schedule import validate_solution

LIGHT = MAParams(gen_limit=120, pop_size=30, ref_iter=16)
POOL = PoolParams(pool_size=20_000)


def test_fractional_check_cases():
    assert fractional_check([1.0, 0.0])
    assert not fractional_check([0.5, 0.5])
    assert fractional_check([1 - 1e-9, 1e-9])
    assert not fractional_check([1 - 1e-3])


def _flat_instance(batch_counts, fleet=1):
    n = len(batch_counts)
    tv = tuple(tuple(0 if i == j else 5 for j in range(n + 1)) for i in range(n + 1))
    sites = tuple(Site(i + 1, 0.0, 0.0, ((100, c),)) for i, c in enumerate(batch_counts))
    return Instance(sites=sites, truck_time=tv, drone_time=derive_drone_times(tv, 2),
                    fleet_size=fleet, drone_capacity=5, drone_endurance=10,
                    horizon_start=0, horizon_end=400, ptl=300).validate()


def test_finalize_disjoint_union():
    inst = _flat_instance([3, 5], fleet=2)
    cols = [Column(0, frozenset({(1, 100)})), Column(1, frozenset({(2, 100)}))]
    sel = finalize_integer(cols, inst)
    assert {c.id for c in sel} == {0, 1}


def test_finalize_identical_columns_picks_one():
    inst = _flat_instance([3], fleet=2)
    cols = [Column(0, frozenset({(1, 100)})), Column(1, frozenset({(1, 100)}))]
    sel = finalize_integer(cols, inst)
    assert len(sel) == 1


def _coverage_value(cols, counts):
    covered = set()
    for c in cols:
        covered |= c.coverage
    return sum(counts[b] for b in covered)


def test_finalize_matches_exhaustive_enumeration():
    rng = np.random.default_rng(17)
    for trial in range(20):
        nb = int(rng.integers(3, 10))
        counts_list = [int(rng.integers(1, 9)) for _ in range(nb)]
        inst = _flat_instance(counts_list, fleet=2)
        counts = {(s.id, t): c for s in inst.sites for t, c in s.donations}
        batches = list(counts)
        cols = []
        for p in range(6):
            size = int(rng.integers(0, nb + 1))
            pick = rng.choice(nb, size=size, replace=False)
            cols.append(Column(p, frozenset(batches[int(i)] for i in pick)))
        sel = finalize_integer(cols, inst)
        got = _coverage_value(sel, counts)
        best = 0
        for k in range(0, 3):
            for combo in itertools.combinations(cols, k):
                best = max(best, _coverage_value(combo, counts))
        assert got == best
        assert len(sel) <= inst.fleet_size


def test_solve_worked_example_both_modes(motivating, warm_engine):
    sol = solve(motivating, POOL, LIGHT, CGParams(seed=1))
    assert sol.objective == 30
    assert len(sol.tours) == 1
    sol_t = solve(motivating, POOL, LIGHT, CGParams(seed=1), drone=False)
    assert sol_t.objective == 25
    assert all(not r.sorties for t in sol_t.tours for r in t.routes)


def test_solve_zero_donations():
    tv = ((0, 5), (5, 0))
    inst = Instance(sites=(Site(1, 0.0, 0.0, ()),), truck_time=tv,
                    drone_time=derive_drone_times(tv, 2), fleet_size=1,
                    drone_capacity=5, drone_endurance=10, horizon_start=0,
                    horizon_end=100, ptl=50).validate()
    sol = solve(inst, PoolParams(pool_size=10), MAParams(gen_limit=5, pop_size=4),
                CGParams(seed=0))
    assert sol.objective == 0
    assert sol.tours == []


def test_trace_monotone_and_integer_bounded(motivating, warm_engine):
    sol = solve(motivating, POOL, LIGHT, CGParams(seed=2))
    objs = [row[1] for row in sol.trace]
    assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))
    assert sol.objective <= objs[-1] + 1e-6


def test_objective_matches_validator_recount(motivating, warm_engine):
    sol = solve(motivating, POOL, LIGHT, CGParams(seed=3))
    counts = {(s.id, t): c for s in motivating.sites for t, c in s.donations}
    recount = sum(counts[b] for b in sol.assignment)
    assert recount == sol.objective
    assert validate_solution(sol.tours, motivating, sol.assignment) == []


def test_solution_file_round_trip(motivating, warm_engine):
    sol = solve(motivating, POOL, MAParams(gen_limit=40, pop_size=16),
                CGParams(seed=4))
    text = dumps_solution(sol)
    again = loads_solution(text)
    assert again.objective == sol.objective
    assert again.tours == sol.tours
    assert again.assignment == sol.assignment
    assert dumps_solution(again) == text


def test_fleet_two_uses_both_tandems():
    # two far-apart sites with simultaneous batches and a tight deadline:
    # one tandem can deliver only one batch in time
    tv = ((0, 100, 100), (100, 0, 200), (100, 200, 0))
    inst = Instance(
        sites=(Site(1, 0.0, 0.0, ((100, 2),)), Site(2, 1.0, 1.0, ((100, 3),))),
        truck_time=tv, drone_time=derive_drone_times(tv, 2), fleet_size=2,
        drone_capacity=5, drone_endurance=10, horizon_start=0, horizon_end=600,
        ptl=150, drone_enabled=False).validate()
    sol = solve(inst, PoolParams(pool_size=100), MAParams(gen_limit=60, pop_size=16),
                CGParams(seed=5), drone=False)
    assert sol.objective == 5
    assert len(sol.tours) == 2
