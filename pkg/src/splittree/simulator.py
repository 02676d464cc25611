"""Exact simulation of splitting trees with neutral mutations.

Each individual lives for an independent lifespan drawn from Lambda(.)/b and
gives birth at rate b during its life.  A child is a clone of its mother with
probability 1 - p and otherwise carries a brand-new allele whose type is the
mother's type plus one.  No time discretisation is involved anywhere.

Three engines share the same law:

``simulate``
    event-driven, one replicate at a time, keeps the full record of every
    individual and allele (used for snapshots and moderate Monte Carlo runs).
``simulate_batch``
    generation by generation, vectorised over a block of replicates; keeps
    only per-replicate counts at a set of probe times.  Used where the
    population reaches millions of individuals.
``survives_to``
    depth-first exploration that stops at the first individual alive at the
    horizon; decides survival without building the whole population.
"""
from __future__ import annotations

import functools
import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidConfig, OutOfRange, RejectionBudgetExceeded, WrongRegime
from .lifespan import LifespanMeasure, MutationContext
from .scale import extinction_probability, marginal, regime, solve_scale

__all__ = [
    "Individual",
    "AlleleRecord",
    "PopulationSnapshot",
    "SpectrumTable",
    "BatchResult",
    "AlleleTable",
    "make_rng",
    "simulate",
    "simulate_batch",
    "snapshot_spectrum",
    "snapshot_type_counts",
    "survives_to",
    "extends_to",
    "survival_frequency",
    "survival_conditioned_statistic",
    "proxy_bias_bound",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 10**7

# stream families, so that the engines never share a random stream
_EXACT, _BATCH, _SURVIVAL, _REJECTION = 0, 1, 2, 3


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based stream for ``(seed, *key)``."""
    if int(seed) != seed or seed < 0:
        raise InvalidConfig(f"seed must be a non-negative integer, got {seed!r}", key="seed")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


@dataclass(frozen=True)
class Individual:
    id: int
    parent: Optional[int]
    birth_time: float
    death_time: float
    allele: int


@dataclass(frozen=True)
class AlleleRecord:
    id: int
    origin_time: float
    type: int
    parent_allele: Optional[int]


@dataclass(frozen=True)
class PopulationSnapshot:
    """Population alive at ``time``.

    ``alive`` is an (n, 2) integer array of (individual id, allele id) rows;
    ``individuals`` holds every individual born by ``time`` (may be left
    empty for hand-built snapshots).
    """

    time: float
    alive: np.ndarray
    allele_registry: tuple
    births_total: int
    truncated: bool = False
    individuals: tuple = ()

    @property
    def size(self):
        return len(self.alive)

    @functools.cached_property
    def _allele_arrays(self):
        reg = self.allele_registry
        ids = np.array([r.id for r in reg], dtype=np.int64)
        if len(ids) and not np.array_equal(ids, np.arange(len(ids))):
            raise InvalidConfig("allele ids must be 0..n-1 in registry order")
        origin = np.array([r.origin_time for r in reg], dtype=float)
        types = np.array([r.type for r in reg], dtype=np.int64)
        return origin, types

    def allele_sizes(self):
        """(allele ids, number of alive carriers) for every alive allele."""
        if self.size == 0:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        return np.unique(self.alive[:, 1], return_counts=True)


@dataclass(frozen=True)
class SpectrumTable:
    """counts[i - 1] = M_t^{i,a}."""

    time: float
    age_cutoff: float
    counts: np.ndarray

    def M(self, i):
        return int(self.counts[i - 1]) if 1 <= i <= len(self.counts) else 0

    @property
    def alleles(self):
        return int(self.counts.sum())

    def as_tuple(self, length=None):
        n = len(self.counts) if length is None else length
        return tuple(self.M(i) for i in range(1, n + 1))


def _validate(ctx, T, cap):
    if not isinstance(ctx, MutationContext):
        raise InvalidConfig("ctx must be a MutationContext", key="measure")
    if not (math.isfinite(T) and T >= 0):
        raise InvalidConfig(f"horizon must be a finite non-negative number, got {T!r}", key="horizon")
    if int(cap) != cap or cap < 1:
        raise InvalidConfig(f"cap must be a positive integer, got {cap!r}", key="cap")


def simulate(ctx: MutationContext, T: float, seed: int = 0, cap: int = DEFAULT_CAP,
             rng: Optional[np.random.Generator] = None) -> PopulationSnapshot:
    """Simulate the population on [0, T] and return its state at T.

    Individuals are processed in order of birth time (ties by id).  If more
    than ``cap`` individuals would be born the run stops and the snapshot is
    flagged ``truncated``.
    """
    _validate(ctx, T, cap)
    rng = make_rng(seed, _EXACT) if rng is None else rng
    measure, p = ctx.measure, ctx.p
    gap = 1.0 / measure.birth_rate

    births, parents, alleles = [0.0], [None], [0]
    deaths = [math.nan]
    reg = [AlleleRecord(0, 0.0, 0, None)]
    queue = [(0.0, 0)]
    truncated = False
    while queue and not truncated:
        alpha, k = heapq.heappop(queue)
        death = alpha + float(measure.sample(rng))
        deaths[k] = death
        end = min(death, T)
        t = alpha + rng.exponential(gap)
        while t <= end:
            if len(births) >= cap:
                truncated = True
                break
            allele = alleles[k]
            if rng.random() < p:
                parent_rec = reg[allele]
                allele = len(reg)
                reg.append(AlleleRecord(allele, t, parent_rec.type + 1, parent_rec.id))
            child = len(births)
            births.append(t)
            parents.append(k)
            alleles.append(allele)
            deaths.append(math.nan)
            heapq.heappush(queue, (t, child))
            t += rng.exponential(gap)

    birth = np.array(births)
    death = np.array(deaths)
    # unprocessed individuals (truncated runs only) count as alive
    alive_mask = (birth <= T) & ~(death <= T)
    ids = np.flatnonzero(alive_mask)
    alive = np.column_stack([ids, np.asarray(alleles, dtype=np.int64)[ids]]).astype(np.int64)
    people = tuple(Individual(i, parents[i], births[i], deaths[i], alleles[i]) for i in range(len(births)))
    return PopulationSnapshot(float(T), alive.reshape(-1, 2), tuple(reg), len(births), truncated, people)


def snapshot_spectrum(s: PopulationSnapshot, a: float) -> SpectrumTable:
    """Counts M_t^{i,a} of alleles of age at most ``a`` carried by i individuals."""
    if not (0.0 <= a <= s.time):
        raise OutOfRange(f"need 0 <= a <= t, got a={a}, t={s.time}")
    ids, sizes = s.allele_sizes()
    if len(ids) == 0:
        return SpectrumTable(s.time, a, np.zeros(0, dtype=np.int64))
    origin, _ = s._allele_arrays
    young = origin[ids] >= s.time - a
    counts = np.bincount(sizes[young], minlength=int(sizes.max()) + 1)[1:]
    return SpectrumTable(s.time, a, counts)


def snapshot_type_counts(s: PopulationSnapshot):
    """(K, L): K[i] alive carriers of type-i alleles, L[i] distinct alive type-i alleles."""
    if s.size == 0:
        return np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64)
    _, types = s._allele_arrays
    carrier_types = types[s.alive[:, 1]]
    ids, _ = s.allele_sizes()
    n = int(carrier_types.max()) + 1
    return np.bincount(carrier_types, minlength=n), np.bincount(types[ids], minlength=n)


# -- survival ---------------------------------------------------------------

def _subtree_reaches(measure, roots, horizon, rng):
    """True if some descendant of individuals born at ``roots`` is alive at ``horizon``."""
    gap = 1.0 / measure.birth_rate
    stack = list(roots)
    while stack:
        alpha = stack.pop()
        death = alpha + float(measure.sample(rng))
        if death > horizon:
            return True
        t = alpha + rng.exponential(gap)
        while t <= death:
            stack.append(t)
            t += rng.exponential(gap)
    return False


def survives_to(measure: LifespanMeasure, horizon: float, rng: np.random.Generator) -> bool:
    """Whether a population started by one newborn is alive at ``horizon``."""
    if measure.has_infinite_mass:
        return True
    return _subtree_reaches(measure, [0.0], horizon, rng)


def extends_to(ctx: MutationContext, s: PopulationSnapshot, horizon: float,
               rng: np.random.Generator) -> bool:
    """Continue the snapshot's population past ``s.time`` until ``horizon`` and
    report whether it is still alive there.

    Lifespans of the living are already fixed; their births after ``s.time``
    are fresh Poisson points, independent of everything simulated so far.
    """
    if horizon < s.time:
        raise OutOfRange("cannot extend a snapshot backwards in time")
    if s.size == 0:
        return False
    if not s.individuals:
        raise InvalidConfig("snapshot carries no individual records to extend")
    measure = ctx.measure
    gap = 1.0 / measure.birth_rate
    for k in s.alive[:, 0]:
        death = s.individuals[k].death_time
        if not death <= horizon:
            return True
        roots = []
        t = s.time + rng.exponential(gap)
        while t <= death:
            roots.append(t)
            t += rng.exponential(gap)
        if _subtree_reaches(measure, roots, horizon, rng):
            return True
    return False


def survival_frequency(measure: LifespanMeasure, horizon: float, attempts: int, seed: int):
    """(fraction of independent populations alive at ``horizon``, its standard error)."""
    hits = np.array([survives_to(measure, horizon, make_rng(seed, _SURVIVAL, k)) for k in range(attempts)])
    freq = float(hits.mean())
    return freq, math.sqrt(freq * (1.0 - freq) / attempts)


def proxy_bias_bound(ctx: MutationContext, t_star: float, step: float = 1e-3) -> float:
    """Upper bound on P(dies after t_star | alive at t_star): the error of using
    'alive at t_star' in place of ultimate survival."""
    measure = ctx.measure
    grid = solve_scale(measure, t_star, min(step, 0.05 / measure.birth_rate))
    p_zero = marginal(grid, t_star).p_zero
    survive = 1.0 - extinction_probability(measure)
    return max(0.0, (p_zero - (1.0 - survive)) / (1.0 - p_zero))


@dataclass(frozen=True)
class ConditionedSample:
    value: float
    attempts: int
    snapshot: PopulationSnapshot


def survival_conditioned_statistic(ctx: MutationContext, T: float,
                                   statistic: Callable[[PopulationSnapshot], float],
                                   seed: int, t_star: Optional[float] = None,
                                   max_attempts: int = 10_000,
                                   cap: int = DEFAULT_CAP) -> ConditionedSample:
    """One draw of ``statistic`` at time T under the law conditioned on survival.

    Survival is proxied by 'alive at t_star' (default max(T, 15)); populations
    failing it are rejected and resimulated.
    """
    if regime(ctx.measure) != "supercritical":
        raise WrongRegime("conditioning on survival needs a supercritical population")
    t_star = max(T, 15.0) if t_star is None else float(t_star)
    if t_star < T:
        raise InvalidConfig("t_star must be at least T", key="t_star")
    for k in range(max_attempts):
        rng = make_rng(seed, _REJECTION, k)
        s = simulate(ctx, T, cap=cap, rng=rng)
        if s.truncated or extends_to(ctx, s, t_star, rng):
            # a truncated run has at least cap individuals: treat as surviving
            return ConditionedSample(float(statistic(s)), k + 1, s)
    raise RejectionBudgetExceeded(f"no surviving population in {max_attempts} attempts")


# -- vectorised engine ------------------------------------------------------

@dataclass(frozen=True)
class AlleleTable:
    """Alive alleles at one probe time: replicate, origin time, type, carriers."""

    replicate: np.ndarray
    origin: np.ndarray
    type: np.ndarray
    size: np.ndarray


@dataclass(frozen=True)
class BatchResult:
    """Per-replicate counts at each probe time.

    xi[j, r]      population size at probe_times[j] in replicate r
    K[j, r, i]    alive carriers of type-i alleles
    L[j, r, i]    distinct alive type-i alleles (None unless alleles were kept)
    born[j, r]    individuals born by probe_times[j]
    """

    probe_times: np.ndarray
    xi: np.ndarray
    K: np.ndarray
    L: np.ndarray
    born: np.ndarray
    truncated: np.ndarray
    alleles: tuple = ()

    @property
    def replicates(self):
        return self.xi.shape[1]

    def probe_index(self, t):
        j = np.flatnonzero(np.isclose(self.probe_times, t, rtol=0, atol=1e-12))
        if not len(j):
            raise OutOfRange(f"time {t} is not among the probe times {self.probe_times}")
        return int(j[0])


def _block(ctx, horizon, nrep, rng, probes, max_type, ntypes, cap, keep_alleles):
    measure, p = ctx.measure, ctx.p
    b = measure.birth_rate
    nprobe = len(probes)
    xi = np.zeros((nprobe, nrep), dtype=np.int64)
    K = np.zeros((nprobe, nrep * ntypes), dtype=np.int64)
    born = np.zeros((nprobe, nrep), dtype=np.int64)
    ever = np.ones(nrep, dtype=np.int64)
    truncated = np.zeros(nrep, dtype=bool)

    rep = np.arange(nrep)
    birth = np.zeros(nrep)
    typ = np.zeros(nrep, dtype=np.int64)
    allele = np.arange(nrep)
    reg_rep, reg_origin, reg_type = [np.arange(nrep)], [np.zeros(nrep)], [np.zeros(nrep, dtype=np.int64)]
    n_alleles = nrep
    alive_ids = [[] for _ in probes]

    while rep.size:
        n = rep.size
        death = birth + measure.sample(rng, size=n)
        for j, t in enumerate(probes):
            mask = (birth <= t) & (death > t)
            xi[j] += np.bincount(rep[mask], minlength=nrep)
            tracked = mask & (typ < ntypes)
            K[j] += np.bincount(rep[tracked] * ntypes + typ[tracked], minlength=nrep * ntypes)
            born[j] += np.bincount(rep[birth <= t], minlength=nrep)
            if keep_alleles:
                alive_ids[j].append(allele[mask])
        span = np.minimum(death, horizon) - birth
        capped = typ >= max_type if max_type is not None else np.zeros(n, dtype=bool)
        rate = np.where(capped, b * (1.0 - p), b)
        kids = rng.poisson(rate * span)
        total = int(kids.sum())
        if total == 0:
            break
        par = np.repeat(np.arange(n), kids)
        kbirth = birth[par] + rng.random(total) * span[par]
        mutant = (rng.random(total) < p) & ~capped[par]
        krep = rep[par]
        ktyp = typ[par] + mutant
        kall = allele[par]
        m = int(mutant.sum())
        if m:
            kall[mutant] = n_alleles + np.arange(m)
            n_alleles += m
            reg_rep.append(krep[mutant])
            reg_origin.append(kbirth[mutant])
            reg_type.append(ktyp[mutant])
        ever += np.bincount(krep, minlength=nrep)
        truncated |= ever > cap
        keep = ~truncated[krep]
        rep, birth, typ, allele = krep[keep], kbirth[keep], ktyp[keep], kall[keep]

    tables = []
    if keep_alleles:
        a_rep, a_origin, a_type = (np.concatenate(x) for x in (reg_rep, reg_origin, reg_type))
        for j in range(nprobe):
            ids = np.concatenate(alive_ids[j]) if alive_ids[j] else np.empty(0, dtype=np.int64)
            uid, size = np.unique(ids, return_counts=True)
            tables.append(AlleleTable(a_rep[uid], a_origin[uid], a_type[uid], size))
    L = None
    if keep_alleles:
        L = np.zeros((nprobe, nrep, ntypes), dtype=np.int64)
        for j, tab in enumerate(tables):
            sel = tab.type < ntypes
            np.add.at(L[j], (tab.replicate[sel], tab.type[sel]), 1)
    return xi, K.reshape(nprobe, nrep, ntypes), L, born, truncated, tables


def simulate_batch(ctx: MutationContext, horizon: float, replicates: int, seed: int,
                   probe_times: Optional[Sequence[float]] = None,
                   max_type: Optional[int] = None, cap: int = DEFAULT_CAP, block: int = 500,
                   keep_alleles: bool = False, track_types: int = 16) -> BatchResult:
    """Run ``replicates`` independent populations up to ``horizon``.

    With ``max_type`` set, types above it are not simulated: an individual of
    type ``max_type`` only has clonal children (at rate b(1-p)), which leaves
    the law of all types <= max_type unchanged.  K and L are reported for
    types 0..max_type, or 0..track_types-1 when ``max_type`` is None (the
    dynamics are then unrestricted).  With ``keep_alleles`` the
    per-allele carrier counts are returned (needed for spectra and L_i).
    Replicates run in blocks of ``block``; each block has its own stream.
    """
    _validate(ctx, horizon, cap)
    if int(replicates) != replicates or replicates < 1:
        raise InvalidConfig(f"replicates must be a positive integer, got {replicates!r}", key="replicates")
    if max_type is not None and (int(max_type) != max_type or max_type < 0):
        raise InvalidConfig(f"max_type must be a non-negative integer, got {max_type!r}", key="max_type")
    ntypes = int(max_type) + 1 if max_type is not None else int(track_types)
    probes = np.array([horizon] if probe_times is None else sorted(probe_times), dtype=float)
    if probes.size == 0 or probes[0] < 0 or probes[-1] > horizon:
        raise OutOfRange("probe times must lie in [0, horizon]")
    parts = []
    for r, start in enumerate(range(0, int(replicates), block)):
        nrep = min(block, int(replicates) - start)
        parts.append(_block(ctx, horizon, nrep, make_rng(seed, _BATCH, r), probes, max_type,
                            ntypes, cap, keep_alleles))
    xi = np.concatenate([q[0] for q in parts], axis=1)
    K = np.concatenate([q[1] for q in parts], axis=1)
    L = np.concatenate([q[2] for q in parts], axis=1) if keep_alleles else None
    born = np.concatenate([q[3] for q in parts], axis=1)
    truncated = np.concatenate([q[4] for q in parts])
    tables = ()
    if keep_alleles:
        offsets = np.cumsum([0] + [len(q[4]) for q in parts])
        merged = []
        for j in range(len(probes)):
            tabs = [q[5][j] for q in parts]
            merged.append(AlleleTable(
                np.concatenate([t.replicate + off for t, off in zip(tabs, offsets)]),
                np.concatenate([t.origin for t in tabs]),
                np.concatenate([t.type for t in tabs]),
                np.concatenate([t.size for t in tabs]),
            ))
        tables = tuple(merged)
    return BatchResult(probes, xi, K, L, born, truncated, tables)
