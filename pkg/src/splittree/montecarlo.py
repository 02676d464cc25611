"""Monte Carlo estimates of snapshot statistics and comparison with theory.

Statistics are named by short selectors:

==============  ==========================================================
``xi``          population size Xi(t)
``extinct``     indicator of extinction by t
``born``        number of individuals born by t (y_t)
``alleles``     number of distinct alleles M_t
``M:i:a``       M_t^{i,a}, alleles younger than a carried by i individuals
``K:i``         carriers of type-i alleles
``L:i``         distinct alive type-i alleles
``kappa:i``     t^{-i} exp(-eta_c t) K_i(t)
``fraction:i``  M_t^{i,t} / M_t (undefined, hence skipped, when M_t = 0)
==============  ==========================================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import InvalidConfig, TooFewSamples, ZeroVariance
from .lifespan import MutationContext
from .mutation import kappa_law
from .scale import malthusian, marginal, solve_scale
from .simulator import (
    DEFAULT_CAP,
    _EXACT,
    _SURVIVAL,
    make_rng,
    simulate,
    simulate_batch,
    snapshot_spectrum,
    snapshot_type_counts,
    survives_to,
)

__all__ = [
    "Statistic",
    "Estimate",
    "ComparisonReport",
    "KappaEstimate",
    "parse_statistic",
    "summarize",
    "estimate",
    "estimate_many",
    "replicate_values",
    "compare",
    "geometric_gof",
    "kappa_empirical",
    "approaches",
    "two_sample_z",
    "run_suite",
    "SUITES",
]


@dataclass(frozen=True)
class Statistic:
    kind: str
    i: Optional[int] = None
    a: Optional[float] = None

    @property
    def name(self):
        parts = [self.kind] + [f"{x:g}" for x in (self.i, self.a) if x is not None]
        return ":".join(parts)

    @property
    def needs_alleles(self):
        return self.kind in ("M", "L", "alleles", "fraction")

    def scale(self, ctx, t):
        if self.kind != "kappa":
            return 1.0
        eta_c = malthusian(ctx.clonal_measure())
        return t ** (-self.i) * math.exp(-eta_c * t)

    def of_snapshot(self, s, scale=1.0):
        kind = self.kind
        if kind == "xi":
            return float(s.size)
        if kind == "extinct":
            return float(s.size == 0)
        if kind == "born":
            return float(s.births_total)
        if kind in ("K", "L", "kappa"):
            K, L = snapshot_type_counts(s)
            src = L if kind == "L" else K
            value = float(src[self.i]) if self.i < len(src) else 0.0
            return value * scale
        table = snapshot_spectrum(s, s.time)
        if kind == "alleles":
            return float(table.alleles)
        if kind == "fraction":
            return table.M(self.i) / table.alleles if table.alleles else math.nan
        if self.a > s.time:
            raise InvalidConfig(f"age cutoff a={self.a} exceeds t={s.time}", key="a")
        return float(snapshot_spectrum(s, self.a).M(self.i))

    def of_batch(self, r, j, scale=1.0):
        kind, t = self.kind, r.probe_times[j]
        if kind == "xi":
            return r.xi[j].astype(float)
        if kind == "extinct":
            return (r.xi[j] == 0).astype(float)
        if kind == "born":
            return r.born[j].astype(float)
        if kind in ("K", "kappa"):
            return r.K[j, :, self.i] * scale
        if kind == "L":
            return r.L[j, :, self.i].astype(float)
        tab = r.alleles[j]
        n = r.replicates
        total = np.bincount(tab.replicate, minlength=n).astype(float)
        if kind == "alleles":
            return total
        if kind == "fraction":
            hits = np.bincount(tab.replicate[tab.size == self.i], minlength=n)
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(total > 0, hits / total, np.nan)
        if self.a > t:
            raise InvalidConfig(f"age cutoff a={self.a} exceeds t={t}", key="a")
        mask = (tab.size == self.i) & (tab.origin >= t - self.a)
        return np.bincount(tab.replicate[mask], minlength=n).astype(float)


_NO_INDEX = ("xi", "extinct", "born", "alleles")
_ONE_INDEX = ("K", "L", "kappa", "fraction")


def parse_statistic(text: str) -> Statistic:
    if isinstance(text, Statistic):
        return text
    parts = str(text).strip().split(":")
    kind = parts[0]
    try:
        if kind in _NO_INDEX and len(parts) == 1:
            return Statistic(kind)
        if kind in _ONE_INDEX and len(parts) == 2:
            i = int(parts[1])
            if i < (1 if kind == "fraction" else 0):
                raise ValueError
            return Statistic(kind, i)
        if kind == "M" and len(parts) == 3:
            i, a = int(parts[1]), float(parts[2])
            if i < 1 or not a >= 0:
                raise ValueError
            return Statistic(kind, i, a)
    except ValueError:
        pass
    raise InvalidConfig(f"unknown statistic selector {text!r}", key="statistic")


@dataclass(frozen=True)
class Estimate:
    statistic: str
    n: int
    mean: float
    standard_error: float
    excluded_truncated: int = 0
    excluded_undefined: int = 0


@dataclass(frozen=True)
class ComparisonReport:
    estimate: Estimate
    theory_value: float
    z_score: float
    passed: bool


def summarize(name: str, values, excluded_truncated: int = 0) -> Estimate:
    """Mean and standard error of the defined (non-NaN) values."""
    values = np.asarray(values, dtype=float)
    ok = ~np.isnan(values)
    n = int(ok.sum())
    if n < 2:
        raise InvalidConfig("an estimate needs at least two usable replicates", key="replicates")
    v = values[ok]
    return Estimate(name, n, float(v.mean()), float(v.std(ddof=1) / math.sqrt(n)),
                    int(excluded_truncated), int((~ok).sum()))


def _check_replicates(replicates):
    if int(replicates) != replicates or replicates < 2:
        raise InvalidConfig(f"replicates must be an integer >= 2, got {replicates!r}", key="replicates")


def replicate_values(ctx: MutationContext, T: float, statistics: Sequence, replicates: int, seed: int,
                     cap: int = DEFAULT_CAP, engine: str = "exact", max_type: Optional[int] = None):
    """Per-replicate values of several statistics on the same replicates.

    Returns ({name: array}, number of truncated replicates dropped).
    ``engine='exact'`` simulates replicate k from stream (seed, k) with the
    event-driven engine; ``engine='batch'`` uses the vectorised engine.
    Extinction indicators are always decided by the depth-first survival
    check, which never builds the population.
    """
    _check_replicates(replicates)
    stats_ = [parse_statistic(s) for s in statistics]
    out = {}
    for st in [s for s in stats_ if s.kind == "extinct"]:
        hits = [not survives_to(ctx.measure, T, make_rng(seed, _SURVIVAL, k)) for k in range(int(replicates))]
        out[st.name] = np.array(hits, dtype=float)
    rest = [s for s in stats_ if s.kind != "extinct"]
    if not rest:
        return out, 0
    scales = [s.scale(ctx, T) for s in rest]
    if engine == "exact":
        rows, truncated = [], 0
        for k in range(int(replicates)):
            snap = simulate(ctx, T, cap=cap, rng=make_rng(seed, _EXACT, k))
            if snap.truncated:
                truncated += 1
                continue
            rows.append([s.of_snapshot(snap, c) for s, c in zip(rest, scales)])
        values = np.array(rows, dtype=float).reshape(-1, len(rest))
        for col, s in enumerate(rest):
            out[s.name] = values[:, col]
        return out, truncated
    if engine == "batch":
        typed = [s.i for s in rest if s.kind in ("K", "L", "kappa")]
        if max_type is None and typed and not any(s.kind in ("M", "alleles", "fraction") for s in rest):
            # types above the largest one asked for do not affect the answer
            max_type = max(typed)
        track = max(typed, default=0) + 1
        r = simulate_batch(ctx, T, replicates, seed, max_type=max_type, cap=cap,
                           keep_alleles=any(s.needs_alleles for s in rest), track_types=track)
        keep = ~r.truncated
        for s, c in zip(rest, scales):
            out[s.name] = s.of_batch(r, 0, c)[keep]
        return out, int(r.truncated.sum())
    raise InvalidConfig(f"engine must be 'exact' or 'batch', got {engine!r}", key="engine")


def estimate_many(ctx: MutationContext, T: float, statistics: Sequence, replicates: int, seed: int,
                  cap: int = DEFAULT_CAP, engine: str = "exact", max_type: Optional[int] = None):
    """{name: Estimate} for several statistics computed on the same replicates."""
    values, truncated = replicate_values(ctx, T, statistics, replicates, seed, cap, engine, max_type)
    return {name: summarize(name, v, 0 if name.startswith("extinct") else truncated)
            for name, v in values.items()}


def estimate(ctx: MutationContext, T: float, statistic, replicates: int, seed: int,
             cap: int = DEFAULT_CAP, engine: str = "exact") -> Estimate:
    st = parse_statistic(statistic)
    return estimate_many(ctx, T, [st], replicates, seed, cap, engine)[st.name]


def compare(e: Estimate, theory: float, threshold: float = 3.0) -> ComparisonReport:
    diff = e.mean - theory
    if e.standard_error == 0:
        if diff != 0:
            raise ZeroVariance(f"{e.statistic}: zero standard error with mean {e.mean} != theory {theory}")
        return ComparisonReport(e, theory, 0.0, True)
    z = diff / e.standard_error
    return ComparisonReport(e, theory, z, abs(z) <= threshold)


def two_sample_z(e1: Estimate, e2: Estimate) -> float:
    se = math.hypot(e1.standard_error, e2.standard_error)
    if se == 0:
        return 0.0 if e1.mean == e2.mean else math.inf
    return (e1.mean - e2.mean) / se


def geometric_gof(samples, success: float, p_zero: float, min_expected: float = 5.0) -> float:
    """Chi-square p-value of ``samples`` against the law
    {0 w.p. p_zero; k >= 1 w.p. (1 - p_zero)(1 - success)^(k-1) success}.

    Bins are formed left to right until each holds an expected count of at
    least ``min_expected``; the upper tail is folded into the last bin.
    """
    x = np.asarray(samples)
    if x.size < 500:
        raise TooFewSamples(f"goodness of fit needs at least 500 samples, got {x.size}")
    if not (0 < success <= 1 and 0 <= p_zero < 1):
        raise InvalidConfig("need 0 < success <= 1 and 0 <= p_zero < 1")
    n = x.size
    # bins must cover the law, not just the observed values
    kmax = int(x.max())
    if success < 1:
        reach = math.log(min_expected / (n * (1 - p_zero))) / math.log(1 - success)
        kmax = max(kmax, int(math.ceil(reach)))
    k = np.arange(kmax + 1)
    probs = np.where(k == 0, p_zero, (1 - p_zero) * (1 - success) ** np.maximum(k - 1, 0) * success)
    tail = (1 - p_zero) * (1 - success) ** kmax if kmax >= 1 else 1 - p_zero
    counts = np.bincount(x, minlength=kmax + 1)

    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, n * probs):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    acc_e += n * tail
    if obs:
        obs[-1] += acc_o
        exp[-1] += acc_e
    else:
        obs, exp = [acc_o], [acc_e]
    if len(obs) < 2:
        return 1.0
    return float(stats.chisquare(obs, exp).pvalue)


@dataclass(frozen=True)
class KappaEstimate:
    """Empirical summary of X = t^{-i} e^{-eta_c t} K_i(t) at one time.

    The atom of the limit law is the event that the clonal population dies
    out; it is proxied by K_0(t) = 0, and the conditional mean is taken over
    replicates with K_0(t) > 0.  ``zero_freq`` is the frequency of K_i(t) = 0.
    """

    order: int
    time: float
    n: int
    atom_freq: float
    atom_se: float
    conditional_mean: float
    conditional_se: float
    zero_freq: float
    mean: float
    mean_se: float


def _kappa_summary(i, t, K0, Ki, eta_c):
    x = Ki * (t ** (-i) * math.exp(-eta_c * t))
    alive = K0 > 0
    n = len(x)
    atom = 1.0 - alive.mean()
    xa = x[alive]
    cond_se = xa.std(ddof=1) / math.sqrt(len(xa)) if len(xa) > 1 else math.nan
    return KappaEstimate(
        order=i, time=float(t), n=n,
        atom_freq=float(atom), atom_se=math.sqrt(atom * (1 - atom) / n),
        conditional_mean=float(xa.mean()) if len(xa) else math.nan, conditional_se=float(cond_se),
        zero_freq=float((Ki == 0).mean()),
        mean=float(x.mean()), mean_se=float(x.std(ddof=1) / math.sqrt(n)),
    )


def kappa_empirical(ctx: MutationContext, i: int, t_probe: float, replicates: int, seed: int,
                    also_at: Sequence[float] = (), cap: int = DEFAULT_CAP):
    """Mixture summary of the kappa proxy at ``t_probe``.

    With ``also_at`` the same simulated paths are summarised at the extra
    times too, and a dict {time: KappaEstimate} is returned.
    """
    _check_replicates(replicates)
    law = kappa_law(ctx, i)
    times = sorted({float(t_probe), *map(float, also_at)})
    r = simulate_batch(ctx, max(times), replicates, seed, probe_times=times, max_type=int(i), cap=cap)
    keep = ~r.truncated
    out = {}
    for j, t in enumerate(r.probe_times):
        out[float(t)] = _kappa_summary(int(i), t, r.K[j, keep, 0], r.K[j, keep, int(i)], law.eta_c)
    return out if also_at else out[float(t_probe)]


def approaches(earlier: float, later: float, target: float) -> bool:
    """True when ``later`` is at least as close to ``target`` as ``earlier``."""
    return abs(later - target) <= abs(earlier - target)


# -- validation suites ------------------------------------------------------

def _core_suite(seed, replicates):
    from .lifespan import Exponential
    from .spectrum import SpectrumQuery, expected_spectrum
    from .mutation import expected_K, expected_L
    from .scale import clonal_grid

    bd = MutationContext(Exponential(2.0, 1.0), 0.25)
    grid = solve_scale(bd.measure, 2.0, 1e-3)
    law = marginal(grid, 1.0)
    rows = []
    one = estimate_many(bd, 1.0, ["xi", "extinct"], replicates, seed)
    rows.append(("xi(1)", float(grid.dW(1.0)) / bd.b, one["xi"]))
    rows.append(("extinct_by(1)", law.p_zero, one["extinct"]))
    gc = clonal_grid(bd, 2.0, 1e-3)
    two = estimate_many(bd, 2.0, ["M:1:1", "M:2:1", "M:3:1", "K:1", "L:1"], replicates, seed)
    for i in (1, 2, 3):
        theory = expected_spectrum(grid, gc, bd, SpectrumQuery(i, 1.0, 2.0))
        rows.append((f"M_2^({i},1)", theory, two[f"M:{i}:1"]))
    rows.append(("K_1(2)", expected_K(bd, gc, 1, 2.0), two["K:1"]))
    rows.append(("L_1(2)", expected_L(bd, gc, 1, 2.0), two["L:1"]))
    ext = estimate(bd, 15.0, "extinct", replicates, seed)
    rows.append(("extinct_by(15)", 1.0 - malthusian(bd.measure) / bd.b, ext))
    return [compare(e, theory) for _, theory, e in rows], [name for name, _, _ in rows]


SUITES = {"core": _core_suite}


def run_suite(name: str, seed: int = 42, replicates: int = 10_000):
    """[(check name, ComparisonReport)] for the named suite."""
    if name not in SUITES:
        raise InvalidConfig(f"unknown suite {name!r}; choose from {sorted(SUITES)}", key="suite")
    reports, names = SUITES[name](seed, replicates)
    return list(zip(names, reports))
