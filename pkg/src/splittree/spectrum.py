"""Expected allelic frequency spectrum and its large-time limits.

M_t^{i,a} counts the alleles younger than ``a`` carried by exactly ``i``
individuals at time ``t``.  Its expectation is an integral over the age of
the allele of

    p / (b (1-p)) * W'(t-x) * (1 - 1/W_c(x))^(i-1) * W_c'(x) / W_c(x)^2,

plus, when a = t, the probability that the ancestor's own allele has
exactly ``i`` carriers.  Everything here is a pure function of two scale
grids (W for the whole population, W_c for the clonal one).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import HorizonTooShort, OutOfRange, WrongRegime
from .lifespan import MutationContext
from .scale import MAX_STEP_RATE, ScaleGrid, clonal_grid, malthusian, regime

__all__ = [
    "SpectrumQuery",
    "SpectrumLimits",
    "expected_spectrum_density",
    "expected_spectrum",
    "expected_allele_count",
    "limit_J",
    "limit_horizon",
    "spectrum_limits",
    "size_fraction_limit",
    "default_step",
]


@dataclass(frozen=True)
class SpectrumQuery:
    i: int
    a: float
    t: float

    def __post_init__(self):
        if int(self.i) != self.i or self.i < 1:
            raise OutOfRange(f"family size i must be a positive integer, got {self.i!r}")
        if not (0.0 <= self.a <= self.t):
            raise OutOfRange(f"need 0 <= a <= t, got a={self.a}, t={self.t}")


@dataclass(frozen=True)
class SpectrumLimits:
    mean_limit: float
    as_limit_scale: float
    fraction_limit: float


def default_step(rate, step=1e-3):
    return min(step, MAX_STEP_RATE / rate)


def _clonal_factor(grid_wc, i, x):
    wc = grid_wc.W(x)
    return (1.0 - 1.0 / wc) ** (i - 1) * grid_wc.dW(x) / wc**2


def _density(grid_w, grid_wc, ctx, i, x, t):
    p, b = ctx.p, ctx.b
    return p / (b * (1.0 - p)) * grid_w.dW(t - x) * _clonal_factor(grid_wc, i, x)


def _check_horizons(q, *grids):
    for g in grids:
        if q.t > g.horizon * (1 + 1e-12):
            raise OutOfRange(f"t={q.t} beyond grid horizon {g.horizon}")


def expected_spectrum_density(grid_w, grid_wc, ctx: MutationContext, q: SpectrumQuery) -> float:
    """Density in ``a`` of E[M_t^{i,da}], for 0 < a < t."""
    if not 0.0 < q.a < q.t:
        raise OutOfRange(f"the density needs 0 < a < t, got a={q.a}, t={q.t}")
    _check_horizons(q, grid_w, grid_wc)
    return float(_density(grid_w, grid_wc, ctx, q.i, q.a, q.t))


def _nodes(step, upper):
    """Uniform nodes on [0, upper], with ``upper`` appended when off-grid."""
    n = int(math.floor(upper / step + 1e-9))
    x = step * np.arange(n + 1)
    if upper - x[-1] > 1e-9 * step:
        x = np.append(x, upper)
    return x


def expected_spectrum(grid_w, grid_wc, ctx: MutationContext, q: SpectrumQuery) -> float:
    """E[M_t^{i,a}] for 0 <= a <= t."""
    _check_horizons(q, grid_w, grid_wc)
    step = max(grid_w.step, grid_wc.step)
    total = 0.0
    if q.a > 0:
        x = _nodes(grid_wc.step, q.a)
        total = float(np.trapezoid(_density(grid_w, grid_wc, ctx, q.i, x, q.t), x))
    if abs(q.a - q.t) <= 0.5 * step:
        # the ancestral allele itself: P(clonal population at t = i)
        total += float(_clonal_factor(grid_wc, q.i, q.t)) / ctx.clonal_rate
    return total


def expected_allele_count(grid_w, grid_wc, ctx: MutationContext, t: float) -> float:
    """E[M_t], the expected number of distinct alleles alive at ``t``."""
    _check_horizons(SpectrumQuery(1, t, t), grid_w, grid_wc)
    p, b = ctx.p, ctx.b
    total = 0.0
    if t > 0:
        x = _nodes(grid_wc.step, t)
        f = grid_w.dW(t - x) * grid_wc.dW(x) / grid_wc.W(x)
        total = p / (b * (1.0 - p)) * float(np.trapezoid(f, x))
    return total + float(grid_wc.dW(t) / grid_wc.W(t)) / ctx.clonal_rate


def limit_horizon(rate: float, eta: float, tol: float) -> float:
    """Smallest U (to 1%) with rate e^{-eta U} (U + 1/eta + 1) / eta <= tol.

    This bounds the neglected tails of every improper integral below:
    the integrands are at most rate * e^{-eta u}, and ln W_c(u) <= rate * u.
    """
    bound = lambda u: rate * math.exp(-eta * u) * (u + 1.0 / eta + 1.0) / eta
    u = 1.0
    while bound(u) > tol:
        u *= 1.1
    return u


def _tail_check(grid_wc, eta, tol, what):
    U = grid_wc.horizon
    tail = grid_wc.birth_rate * math.exp(-eta * U) / eta
    if tail > tol:
        raise HorizonTooShort(
            f"{what}: truncation bound {tail:.3g} at U={U:.4g} exceeds tol={tol:.3g}; "
            f"use a horizon of at least {limit_horizon(grid_wc.birth_rate, eta, tol):.4g}"
        )


def limit_J(grid_wc: ScaleGrid, eta: float, i: Optional[int] = None, a: float = math.inf,
            tol: float = 1e-8) -> float:
    """J^{i,a} = int_0^a e^{-eta u} (1 - 1/W_c)^(i-1) W_c'/W_c^2 du, or, with
    ``i=None``, J = int_0^inf e^{-eta u} W_c'/W_c du."""
    if not eta > 0:
        raise WrongRegime("J is defined for a supercritical population (eta > 0)")
    if i is not None and (int(i) != i or i < 1):
        raise OutOfRange(f"i must be a positive integer, got {i!r}")
    if i is None:
        a = math.inf
    if a > grid_wc.horizon:
        _tail_check(grid_wc, eta, tol, "J")
        upper = grid_wc.horizon
    else:
        upper = a
    if upper <= 0:
        return 0.0
    x = _nodes(grid_wc.step, upper)
    if i is None:
        f = np.exp(-eta * x) * grid_wc.dW(x) / grid_wc.W(x)
    else:
        f = np.exp(-eta * x) * _clonal_factor(grid_wc, i, x)
    return float(np.trapezoid(f, x))


def _limit_grids(ctx, tol, step):
    if regime(ctx.measure) != "supercritical":
        raise WrongRegime("spectrum limits need a supercritical population")
    eta = malthusian(ctx.measure)
    rate = ctx.clonal_rate
    U = limit_horizon(rate, eta, tol)
    return eta, clonal_grid(ctx, U, default_step(rate, step))


def spectrum_limits(ctx: MutationContext, i: int, a: float, tol: float = 1e-8,
                    step: float = 1e-3) -> SpectrumLimits:
    """Large-time constants of the frequency spectrum on survival.

    mean_limit     -- lim e^{-eta t} E[M_t^{i,a}]
    as_limit_scale -- e^{-eta t} M_t^{i,a} -> as_limit_scale * E, E ~ Exp(psi'(eta))
    fraction_limit -- lim M_t^{i,a} / M_t
    """
    eta, grid_wc = _limit_grids(ctx, tol, step)
    p, b = ctx.p, ctx.b
    j_ia = limit_J(grid_wc, eta, i, a, tol)
    j = limit_J(grid_wc, eta, None, tol=tol)
    dpsi = ctx.measure.psi(eta)[1]
    scale = p / (1.0 - p) * j_ia
    return SpectrumLimits(mean_limit=eta / b * scale / dpsi, as_limit_scale=scale, fraction_limit=j_ia / j)


def size_fraction_limit(grid_wc: ScaleGrid, eta: float, i: int, tol: float = 1e-8) -> float:
    """lim M_t^{i,t} / M_t, as the ratio

        (1/i) int e^{-eta u} (1 - 1/W_c)^i du  /  int e^{-eta u} ln W_c du.
    """
    if not eta > 0:
        raise WrongRegime("the size-fraction limit needs eta > 0")
    U = grid_wc.horizon
    rate = grid_wc.birth_rate
    num_tail = math.exp(-eta * U) / eta
    den_tail = math.exp(-eta * U) * (math.log(grid_wc.W(U)) / eta + rate / eta**2)
    if max(num_tail, den_tail) > tol:
        raise HorizonTooShort(
            f"size-fraction limit: tail bound {max(num_tail, den_tail):.3g} exceeds tol={tol:.3g}; "
            f"use a horizon of at least {limit_horizon(rate, eta, tol):.4g}"
        )
    x = grid_wc.times
    weight = np.exp(-eta * x)
    num = np.trapezoid(weight * (1.0 - 1.0 / grid_wc.values) ** i, x) / i
    den = np.trapezoid(weight * np.log(grid_wc.values), x)
    return float(num / den)
