"""Memetic search over single-tandem tours.

Solves the pricing subproblem (maximize the reduced cost of a tour under
dual prices) and, with unit weights, the single-tandem collection problem
itself.  The population evolves by roulette selection, one-point crossover
over route sequences, a repair step that repacks and drops late routes,
an education phase with sixteen adaptive local-search moves, Dirichlet
timing refinement, and periodic mutation that replaces the weakest tours
with fresh random ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import engine
from .engine import ScheduleContext, get_context
from .model import Instance
from .schedule import Route, Tour

EDU_EPS = 1e-9  # strict-improvement threshold in education


@dataclass
class MAParams:
    gen_limit: int = 1000
    pop_size: int = 140
    ref_iter: int = 16
    mu_rate: float = 0.3
    mu_volume: float = 0.3
    omega: int = 100

    def __post_init__(self):
        if not (0.0 <= self.mu_rate <= 1.0):
            raise ValueError("mu_rate must be in [0, 1]")
        if not (0.0 < self.mu_volume <= 1.0):
            raise ValueError("mu_volume must be in (0, 1]")
        for name in ("gen_limit", "pop_size", "ref_iter", "omega"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class OperatorStats:
    """Adaptive weights and short-term memory for the 16 education moves."""

    weights: np.ndarray = field(default_factory=lambda: np.ones(16, dtype=np.float64))
    attempts: np.ndarray = field(default_factory=lambda: np.zeros(16, dtype=np.int64))
    successes: np.ndarray = field(default_factory=lambda: np.zeros(16, dtype=np.int64))
    active: np.ndarray = field(default_factory=lambda: np.ones(16, dtype=np.uint8))
    move_count: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))


@dataclass(eq=False)
class Chromosome:
    """A tour in flat form plus its cached fitness."""

    rids: np.ndarray
    starts: np.ndarray
    n: int
    fitness: float
    ctx: ScheduleContext

    def tour(self) -> Tour:
        routes = tuple(self.ctx.route_of(int(r)) for r in self.rids[: self.n])
        return Tour(routes, tuple(int(s) for s in self.starts[: self.n]))

    def copy(self) -> "Chromosome":
        return Chromosome(self.rids.copy(), self.starts.copy(), self.n, self.fitness, self.ctx)


def _weights_mu(ctx: ScheduleContext, duals):
    """Per-batch weight array and the fleet penalty for the given duals
    (None means unit weights: each unit counts one, no penalty)."""
    if duals is None:
        return ctx.unit_weights(), 0.0
    return ctx.weights_from(duals.pi), float(duals.mu)


# ---------------------------------------------------------------------------
# Algorithm pieces (also usable standalone; run_ma wires them together).
# ---------------------------------------------------------------------------


def construct_random_tour(pool: Sequence[Route], inst: Instance, rng: np.random.Generator) -> Tour:
    """Draw routes uniformly from the pool and pack them back-to-back from
    time zero; stop at the first draw that would complete past the horizon
    limit (or at the route-count bound).
    """
    if not pool:
        raise ValueError("route pool is empty")
    ctx = get_context(inst)
    routes, starts = [], []
    comp = 0
    from .schedule import route_duration

    durations = [route_duration(r, inst) for r in pool]
    while len(routes) < ctx.L:
        k = int(rng.integers(len(pool)))
        if ctx.FT < 0 or comp + durations[k] > ctx.FT:
            break
        routes.append(pool[k])
        starts.append(comp)
        comp += durations[k]
    return Tour(tuple(routes), tuple(starts))


def trp(tour: Tour, ref_iter: int, inst: Instance, rng: Optional[np.random.Generator],
        weights=None) -> Tour:
    """Timing refinement: if the tour completes before the horizon limit,
    sample ``ref_iter`` flat-Dirichlet splits of the idle time over the gaps
    before each route and keep the best configuration found (never worse
    than the input).
    """
    ctx = get_context(inst)
    if not tour.routes or rng is None or ref_iter < 1:
        return tour
    bw = ctx.unit_weights() if weights is None else weights
    n = len(tour.routes)
    rids = np.array([ctx.register(r) for r in tour.routes], dtype=np.int64)
    starts = np.array(tour.route_starts, dtype=np.int64)
    gaps = np.zeros(n + 1, dtype=np.float64)
    trial = np.zeros(n, dtype=np.int64)
    engine.k_trp(rids, starts, n, ref_iter, ctx.FT, ctx.route_dur,
                 engine.rng_state_from(rng),
                 ctx.ent_ptr, ctx.ent_site, ctx.ent_off, ctx.ent_kind,
                 ctx.site_ptr, ctx.bt, ctx.bc, bw, ctx.claimed, ctx.K, ctx.Q,
                 gaps, trial)
    return Tour(tour.routes, tuple(int(s) for s in starts))


def roulette_select(population: Sequence[Chromosome], rng: np.random.Generator):
    """Two independent fitness-proportional draws; fitness is shifted to be
    positive so negative reduced costs still yield a valid distribution."""
    if not population:
        raise ValueError("population is empty")
    fits = np.array([c.fitness for c in population], dtype=np.float64)
    lo, hi = fits.min(), fits.max()
    eps = 1e-6 * (hi - lo + 1.0)
    shifted = fits - lo + eps
    cum = np.cumsum(shifted)
    total = cum[-1]
    i = int(np.searchsorted(cum, rng.random() * total, side="right"))
    j = int(np.searchsorted(cum, rng.random() * total, side="right"))
    i = min(i, len(population) - 1)
    j = min(j, len(population) - 1)
    return population[i], population[j]


def one_point_crossover(p1: Sequence[Route], p2: Sequence[Route], rng: np.random.Generator):
    """Cut each parent's route sequence at an independent random point and
    exchange the tails; timing is discarded (the repair step recomputes it).
    """
    r1, r2 = tuple(p1), tuple(p2)
    c1 = int(rng.integers(0, len(r1) + 1))
    c2 = int(rng.integers(0, len(r2) + 1))
    return r1[:c1] + r2[c2:], r2[:c2] + r1[c1:]


def rarp(offspring: Sequence[Route], inst: Instance, *, ref_iter: int = 16,
         rng: Optional[np.random.Generator] = None, weights=None) -> Tour:
    """Route-alignment repair: repack the routes back-to-back from zero,
    drop any route that would complete past the horizon limit, cap the
    count at the per-tour bound, then apply timing refinement.
    """
    ctx = get_context(inst)
    from .schedule import route_duration

    routes, starts = [], []
    comp = 0
    for r in offspring:
        if len(routes) >= ctx.L:
            break
        d = route_duration(r, inst)
        if ctx.FT < 0 or comp + d > ctx.FT:
            continue
        routes.append(r)
        starts.append(comp)
        comp += d
    tour = Tour(tuple(routes), tuple(starts))
    return trp(tour, ref_iter, inst, rng, weights=weights)


def educate_route(tour: Tour, index: int, inst: Instance, stats: OperatorStats,
                  rng: np.random.Generator, weights=None, drone: Optional[bool] = None) -> Route:
    """Local search on one route of a tour (whole-tour fitness, start times
    fixed); returns the educated route.  See the engine kernel for the move
    semantics and the adaptive-weight rule.
    """
    ctx = get_context(inst)
    drone_on = inst.drone_enabled if drone is None else drone
    bw = ctx.unit_weights() if weights is None else weights
    n = len(tour.routes)
    rids = np.array([ctx.register(r) for r in tour.routes], dtype=np.int64)
    starts = np.array(tour.route_starts, dtype=np.int64)
    state = engine.rng_state_from(rng)
    stats.active[:] = 1
    if not drone_on:
        stats.active[8:] = 0
    _run_educate(ctx, rids, starts, n, index, stats, state, bw, drone_on)
    return ctx.route_of(int(rids[index]))


def _run_educate(ctx: ScheduleContext, rids, starts, n, index, stats: OperatorStats,
                 state, bw, drone_on, omega: int = 100):
    nbuf = ctx.n_sites + 2
    pbuf = np.zeros(nbuf, dtype=np.int64)
    slb = np.zeros(nbuf, dtype=np.int64)
    ssb = np.zeros(nbuf, dtype=np.int64)
    srb = np.zeros(nbuf, dtype=np.int64)
    cp = np.zeros(nbuf, dtype=np.int64)
    csl = np.zeros(nbuf, dtype=np.int64)
    css = np.zeros(nbuf, dtype=np.int64)
    csr = np.zeros(nbuf, dtype=np.int64)
    visited = np.zeros(ctx.n_sites + 1, dtype=np.uint8)
    while True:
        ctx.ensure_headroom(routes=4)
        val, truncated = engine.k_educate(
            rids, starts, n, index,
            stats.weights, stats.attempts, stats.successes, stats.active,
            stats.move_count, omega,
            ctx.n_routes, ctx.ent_cursor, ctx.path_cursor, ctx.sor_cursor,
            ctx._route_cap, ctx._ent_cap, ctx._ent_cap, ctx._ent_cap,
            ctx.ent_ptr, ctx.ent_site, ctx.ent_off, ctx.ent_kind, ctx.route_dur,
            ctx.path_ptr, ctx.path_site, ctx.sor_ptr, ctx.sor_l, ctx.sor_s, ctx.sor_r,
            ctx.site_ptr, ctx.bt, ctx.bc, bw, ctx.claimed, ctx.K, ctx.Q, ctx.B,
            drone_on, ctx.n_sites, ctx.tv, ctx.td, state,
            pbuf, slb, ssb, srb, cp, csl, css, csr, visited, EDU_EPS)
        if not truncated:
            return val
        ctx._grow()


def mutate(population: list[Chromosome], params: MAParams, pool_rids: np.ndarray,
           inst: Instance, rng: np.random.Generator, weights=None, mu: float = 0.0,
           drone: Optional[bool] = None) -> list[Chromosome]:
    """Replace the ceil(mu_volume * pop_size) least-fit chromosomes with
    fresh random tours (timing-refined); population size is unchanged."""
    ctx = get_context(inst)
    bw = ctx.unit_weights() if weights is None else weights
    k = math.ceil(params.mu_volume * len(population))
    order = np.argsort(np.array([c.fitness for c in population], dtype=np.float64), kind="stable")
    worst = order[:k]
    state = engine.rng_state_from(rng)
    fresh = _construct_batch(ctx, pool_rids, k, params.ref_iter, state, bw, mu)
    for slot, chrom in zip(worst, fresh):
        population[int(slot)] = chrom
    return population


def _construct_batch(ctx: ScheduleContext, pool_rids: np.ndarray, count: int,
                     ref_iter: int, state, bw, mu: float) -> list[Chromosome]:
    L = max(ctx.L, 1)
    out_rids = np.zeros((count, L), dtype=np.int64)
    out_starts = np.zeros((count, L), dtype=np.int64)
    out_len = np.zeros(count, dtype=np.int64)
    out_val = np.zeros(count, dtype=np.float64)
    gaps = np.zeros(L + 1, dtype=np.float64)
    trial = np.zeros(L, dtype=np.int64)
    engine.k_construct(count, len(pool_rids), L, ctx.FT, ref_iter, state, pool_rids,
                       out_rids, out_starts, out_len, out_val,
                       ctx.ent_ptr, ctx.ent_site, ctx.ent_off, ctx.ent_kind,
                       ctx.route_dur, ctx.site_ptr, ctx.bt, ctx.bc, bw,
                       ctx.claimed, ctx.K, ctx.Q, gaps, trial)
    return [
        Chromosome(out_rids[c].copy(), out_starts[c].copy(), int(out_len[c]),
                   float(out_val[c]) - mu, ctx)
        for c in range(count)
    ]


class Harvest:
    """Keeps the best ``k`` coverage-distinct chromosomes above a fitness
    threshold seen during a run (column candidates for the master problem)."""

    def __init__(self, k: int, eps: float, ctx: ScheduleContext, bw):
        self.k = k
        self.eps = eps
        self.ctx = ctx
        self.bw = bw
        self.items: list[tuple[float, bytes, Chromosome, np.ndarray]] = []

    def consider(self, chrom: Chromosome):
        if chrom.fitness <= self.eps:
            return
        if len(self.items) >= self.k and chrom.fitness <= self.items[-1][0]:
            return
        _, _, mask, _, _ = self.ctx.eval_claims_arrays(chrom.rids, chrom.starts, chrom.n, self.bw)
        key = mask.tobytes()
        for fit, k2, _, _ in self.items:
            if k2 == key:
                return
        self.items.append((chrom.fitness, key, chrom.copy(), mask.copy()))
        self.items.sort(key=lambda it: -it[0])
        del self.items[self.k:]


@dataclass
class MAResult:
    best: Chromosome
    harvest: list
    trace: list[tuple[int, float, float, float]]


def run_ma(inst: Instance, pool: Sequence[Route], duals, params: MAParams,
           rng, drone: Optional[bool] = None) -> Chromosome:
    """Run the memetic algorithm and return the fittest chromosome ever seen.

    ``duals`` is either None (unit weights: fitness is viable units) or dual
    prices with per-batch values ``pi`` and fleet penalty ``mu`` (fitness is
    the reduced cost of the tour).
    """
    return run_ma_full(inst, pool, duals, params, rng, drone=drone).best


def run_ma_full(inst: Instance, pool: Sequence[Route], duals, params: MAParams,
                rng, drone: Optional[bool] = None, harvest_k: int = 0,
                harvest_eps: float = 0.0, trace: bool = False) -> MAResult:
    if not pool:
        raise ValueError("route pool is empty")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    ctx = get_context(inst)
    drone_on = inst.drone_enabled if drone is None else drone
    bw, mu = _weights_mu(ctx, duals)
    pool_rids = np.array([ctx.register(r) for r in pool], dtype=np.int64)
    state = engine.rng_state_from(rng)

    pop = _construct_batch(ctx, pool_rids, params.pop_size, params.ref_iter, state, bw, mu)
    best = max(pop, key=lambda c: c.fitness).copy()
    collector = Harvest(harvest_k, harvest_eps, ctx, bw) if harvest_k > 0 else None
    if collector:
        for c in pop:
            collector.consider(c)

    stats = OperatorStats()
    rows = []
    L = max(ctx.L, 1)
    gaps = np.zeros(2 * L + 1, dtype=np.float64)
    trial = np.zeros(2 * L, dtype=np.int64)

    for gen in range(params.gen_limit):
        if rng.random() > params.mu_rate:
            pa, pb = roulette_select(pop, rng)
            c1 = int(rng.integers(0, pa.n + 1))
            c2 = int(rng.integers(0, pb.n + 1))
            for head, tail in (((pa, c1), (pb, c2)), ((pb, c2), (pa, c1))):
                (h, hc), (t, tc) = head, tail
                merged = np.concatenate([h.rids[:hc], t.rids[tc:t.n]]).astype(np.int64)
                out_rids = np.zeros(L, dtype=np.int64)
                out_starts = np.zeros(L, dtype=np.int64)
                n_new, val = engine.k_rarp(
                    merged, len(merged), L, ctx.FT, params.ref_iter, state,
                    out_rids, out_starts,
                    ctx.ent_ptr, ctx.ent_site, ctx.ent_off, ctx.ent_kind,
                    ctx.route_dur, ctx.site_ptr, ctx.bt, ctx.bc, bw,
                    ctx.claimed, ctx.K, ctx.Q, gaps, trial)
                child = Chromosome(out_rids, out_starts, int(n_new), float(val) - mu, ctx)
                for j in range(child.n):
                    stats.active[:] = 1
                    if not drone_on:
                        stats.active[8:] = 0
                    val = _run_educate(ctx, child.rids, child.starts, child.n, j,
                                       stats, state, bw, drone_on, omega=params.omega)
                engine.k_trp(child.rids, child.starts, child.n, params.ref_iter, ctx.FT,
                             ctx.route_dur, state,
                             ctx.ent_ptr, ctx.ent_site, ctx.ent_off, ctx.ent_kind,
                             ctx.site_ptr, ctx.bt, ctx.bc, bw, ctx.claimed, ctx.K, ctx.Q,
                             gaps, trial)
                v, _ = ctx.eval_arrays(child.rids, child.starts, child.n, bw)
                child.fitness = float(v) - mu
                pop.append(child)
                weakest = min(range(len(pop)), key=lambda i: pop[i].fitness)
                pop.pop(weakest)
                if child.fitness > best.fitness:
                    best = child.copy()
                if collector:
                    collector.consider(child)
        else:
            k = math.ceil(params.mu_volume * len(pop))
            order = sorted(range(len(pop)), key=lambda i: pop[i].fitness)
            fresh = _construct_batch(ctx, pool_rids, k, params.ref_iter, state, bw, mu)
            for slot, chrom in zip(order[:k], fresh):
                pop[slot] = chrom
                if chrom.fitness > best.fitness:
                    best = chrom.copy()
                if collector:
                    collector.consider(chrom)
        if trace:
            fits = [c.fitness for c in pop]
            rows.append((gen, max(fits), sum(fits) / len(fits), min(fits)))

    return MAResult(best, collector.items if collector else [], rows)
