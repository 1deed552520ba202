"""Differential tests: the jitted evaluation engine against the reference
semantics, plus contracts of the jitted kernels used by the search."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bloodroute import engine
from bloodroute.engine import ScheduleContext, get_context
from bloodroute.memetic import rarp, trp
from bloodroute.model import Instance, Site, Sortie, derive_drone_times
from bloodroute.pool import PoolParams, build_pool
from bloodroute.schedule import (
    Route,
    Tour,
    assign_pickups,
    evaluate_route,
    route_duration,
    route_is_valid,
    validate_solution,
)

from conftest import small_instance


def _random_tour(inst, pool, rng, max_routes=3, max_gap=40):
    k = int(rng.integers(1, max_routes + 1))
    routes, starts, t = [], [], 0
    for _ in range(k):
        r = pool[int(rng.integers(len(pool)))]
        t += int(rng.integers(0, max_gap))
        routes.append(r)
        starts.append(t)
        t += route_duration(r, inst)
    return Tour(tuple(routes), tuple(starts))


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_engine_eval_matches_reference(seed):
    inst = small_instance(seed % 997, n_sites=4)
    ctx = get_context(inst)
    rng = np.random.default_rng(seed)
    pool = build_pool(inst, PoolParams(pool_size=800), np.random.default_rng(1))
    tour = _random_tour(inst, pool, rng)
    ref = assign_pickups(tour, None, inst)
    rids = np.array([ctx.register(r) for r in tour.routes], dtype=np.int64)
    sta = np.array(tour.route_starts, dtype=np.int64)
    val, units = ctx.eval_arrays(rids, sta, len(tour.routes), ctx.unit_weights())
    assert units == ref.total_viable
    assert val == pytest.approx(ref.weighted_value)


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_engine_claims_match_reference(seed):
    inst = small_instance(seed % 991, n_sites=4)
    ctx = get_context(inst)
    rng = np.random.default_rng(seed)
    pool = build_pool(inst, PoolParams(pool_size=800), np.random.default_rng(2))
    tour = _random_tour(inst, pool, rng)
    ref = assign_pickups(tour, None, inst)
    rids = np.array([ctx.register(r) for r in tour.routes], dtype=np.int64)
    sta = np.array(tour.route_starts, dtype=np.int64)
    _, _, mask, claim_route, claim_kind = ctx.eval_claims_arrays(
        rids, sta, len(tour.routes), ctx.unit_weights())
    batches = inst.batches()
    got = {}
    for b in np.nonzero(mask)[0]:
        sid, t, _ = batches[b]
        got[(sid, t)] = (int(claim_route[b]),
                         "drone" if claim_kind[b] == engine.DRONE_ENT else "truck")
    assert got == ref.pickups


def test_kernel_route_encoding_matches_reference(motivating):
    ctx = ScheduleContext(motivating)
    pool = build_pool(motivating, PoolParams(pool_size=5000), np.random.default_rng(0))
    nbuf = motivating.n_sites + 2
    for route in pool:
        p = np.zeros(nbuf, dtype=np.int64)
        sl = np.zeros(nbuf, dtype=np.int64)
        ss = np.zeros(nbuf, dtype=np.int64)
        sr = np.zeros(nbuf, dtype=np.int64)
        p[: len(route.path)] = route.path
        for i, s in enumerate(route.sorties):
            sl[i], ss[i], sr[i] = s
        e_site = np.zeros(nbuf, dtype=np.int64)
        e_off = np.zeros(nbuf, dtype=np.int64)
        e_kind = np.zeros(nbuf, dtype=np.uint8)
        ne, dur = engine.k_encode_route(p, len(route.path), sl, ss, sr,
                                        len(route.sorties), ctx.tv, ctx.td,
                                        e_site, e_off, e_kind)
        dep, comp = evaluate_route(route, 0, motivating)
        assert dur == comp
        assert ne == len(route.path) + len(route.sorties)
        for k in range(ne):
            assert e_off[k] == dep[int(e_site[k])]


def test_kernel_route_validity_matches_reference(motivating):
    ctx = get_context(motivating)
    rng = np.random.default_rng(3)
    nbuf = motivating.n_sites + 2
    cases = []
    pool = build_pool(motivating, PoolParams(pool_size=5000), np.random.default_rng(0))
    cases += [(r, True) for r in pool[:200]]
    # corrupted variants
    cases.append((Route((2, 4, 2), ()), False))
    cases.append((Route((2, 4, 3), (Sortie(4, 1, 2),)), False))  # rendezvous before launch
    cases.append((Route((2, 4, 3), (Sortie(2, 3, 4),)), False))  # serve is a truck stop
    cases.append((Route((2, 4), (Sortie(2, 3, 4),)), False))  # leg over endurance
    cases.append((Route((2, 4, 3), (Sortie(2, 1, 4), Sortie(2, 1, 3))), False))
    for route, expect in cases:
        p = np.zeros(nbuf, dtype=np.int64)
        sl = np.zeros(nbuf, dtype=np.int64)
        ss = np.zeros(nbuf, dtype=np.int64)
        sr = np.zeros(nbuf, dtype=np.int64)
        p[: len(route.path)] = route.path
        for i, s in enumerate(route.sorties):
            sl[i], ss[i], sr[i] = s
        got = engine.k_route_valid(p, len(route.path), sl, ss, sr, len(route.sorties),
                                   ctx.td, ctx.B, True)
        assert bool(got) == route_is_valid(route, motivating) == expect


def test_trp_identity_when_no_idle(motivating, fig1c_route):
    # two back-to-back routes filling the horizon exactly leave nothing to shift
    dur = route_duration(fig1c_route, motivating)
    start = 570 - dur  # completes exactly at the horizon limit
    tour = Tour((fig1c_route,), (start,))
    out = trp(tour, 16, motivating, np.random.default_rng(0))
    assert out == tour


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_trp_never_worse(seed):
    inst = small_instance(seed % 983, n_sites=4)
    pool = build_pool(inst, PoolParams(pool_size=500), np.random.default_rng(4))
    rng = np.random.default_rng(seed)
    # back-to-back tour
    routes, starts, t = [], [], 0
    for _ in range(int(rng.integers(1, 3))):
        r = pool[int(rng.integers(len(pool)))]
        routes.append(r)
        starts.append(t)
        t += route_duration(r, inst)
    tour = Tour(tuple(routes), tuple(starts))
    before = assign_pickups(tour, None, inst).total_viable
    out = trp(tour, 8, inst, rng)
    after = assign_pickups(out, None, inst).total_viable
    assert after >= before
    # chaining preserved
    prev = None
    for route, start in zip(out.routes, out.route_starts):
        if prev is not None:
            assert start >= prev
        prev = start + route_duration(route, inst)


def test_rarp_drops_late_routes(motivating, fig1c_route):
    # route takes 380; three in sequence end at 1140 > 570: only one survives
    out = rarp([fig1c_route, fig1c_route, fig1c_route], motivating)
    assert len(out.routes) == 1
    assert out.route_starts[0] >= 0


def test_rarp_keeps_two_short_routes(motivating):
    r = Route((2,), ())  # duration 240
    out = rarp([r, r], motivating, rng=None)
    assert len(out.routes) == 2
    assert out.route_starts == (0, 240)


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_rarp_output_validates(seed):
    inst = small_instance(seed % 977, n_sites=5)
    pool = build_pool(inst, PoolParams(pool_size=600), np.random.default_rng(5))
    rng = np.random.default_rng(seed)
    mix = [pool[int(rng.integers(len(pool)))] for _ in range(int(rng.integers(1, 7)))]
    out = rarp(mix, inst, rng=rng)
    assert validate_solution([out], inst) == []


def test_construct_packing_arithmetic():
    # single pooled route of duration 200 and a 570-minute horizon limit:
    # exactly floor(570/200) = 2 copies fit back-to-back
    truck = ((0, 100), (100, 0))
    inst = Instance(sites=(Site(1, 0, 0, ((270, 2),)),), truck_time=truck,
                    drone_time=derive_drone_times(truck, 2), fleet_size=1,
                    drone_capacity=5, drone_endurance=0, horizon_start=0,
                    horizon_end=720, ptl=300, drone_enabled=False).validate()
    from bloodroute.memetic import construct_random_tour

    pool = [Route((1,), ())]
    tour = construct_random_tour(pool, inst, np.random.default_rng(0))
    assert len(tour.routes) == 2
    assert tour.route_starts == (0, 200)


def test_construct_empty_when_nothing_fits():
    truck = ((0, 400), (400, 0))
    inst = Instance(sites=(Site(1, 0, 0, ((100, 2),)),), truck_time=truck,
                    drone_time=derive_drone_times(truck, 2), fleet_size=1,
                    drone_capacity=5, drone_endurance=0, horizon_start=0,
                    horizon_end=720, ptl=300, drone_enabled=False).validate()
    # FT = 400 < duration 800
    from bloodroute.memetic import construct_random_tour

    tour = construct_random_tour([Route((1,), ())], inst, np.random.default_rng(0))
    assert tour.routes == ()


def test_rng_kernel_deterministic():
    s1 = np.array([12345], dtype=np.uint64)
    s2 = np.array([12345], dtype=np.uint64)
    seq1 = [float(engine._randu(s1)) for _ in range(10)]
    seq2 = [float(engine._randu(s2)) for _ in range(10)]
    assert seq1 == seq2
    assert all(0.0 <= u < 1.0 for u in seq1)
    assert len(set(seq1)) > 5
