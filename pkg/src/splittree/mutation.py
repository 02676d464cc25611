"""Mutation counts: alleles and carriers by number of mutations.

K_i(t) is the number of individuals alive at t whose allele carries i more
mutations than the ancestral one, L_i(t) the number of such alleles.  Their
means are iterated convolutions of W_c' (and of W_c'/W_c for L_i); their
large-time behaviour depends on the criticality of the clonal process.  In
the supercritical clonal regime t^{-i} e^{-eta_c t} K_i(t) converges to a
mixture of an atom at 0 and an exponential law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import GridTooCoarse, OutOfRange, WrongRegime
from .lifespan import MutationContext
from .scale import ScaleGrid, clonal_grid, malthusian, negative_root, regime
from .spectrum import default_step, limit_horizon

__all__ = [
    "ConvolutionGrid",
    "KappaLaw",
    "LAsymptotics",
    "KAsymptotics",
    "iterated_convolution",
    "expected_K",
    "expected_K_series",
    "expected_L",
    "expected_L_series",
    "K_asymptotics",
    "L_asymptotics",
    "kappa_law",
    "kappa_fixed_point_residual",
    "convolution_limit_check",
    "log_slope",
]


@dataclass(frozen=True)
class ConvolutionGrid:
    """Samples of f^{*(order)} at t_k = k * step."""

    step: float
    values: np.ndarray
    order: int = 1

    @property
    def horizon(self):
        return self.step * (len(self.values) - 1)

    @property
    def times(self):
        return self.step * np.arange(len(self.values))

    def at(self, t):
        if t < 0 or t > self.horizon * (1 + 1e-12):
            raise OutOfRange(f"t={t} outside [0, {self.horizon}]")
        return float(np.interp(t, self.times, self.values))


def _trap_convolve(f, g, step):
    """Trapezoid approximation of (f * g)(t_k) = int_0^{t_k} f(t_k - x) g(x) dx."""
    n = len(f)
    full = np.convolve(f, g)[:n]
    # drop half of the two endpoint products
    return step * (full - 0.5 * f * g[0] - 0.5 * f[0] * g)


def iterated_convolution(f: ConvolutionGrid, i: int) -> ConvolutionGrid:
    """f^{*(i)}, applying the trapezoid convolution i - 1 times."""
    if int(i) != i or i < 1:
        raise OutOfRange(f"convolution order must be a positive integer, got {i!r}")
    if len(f.values) < 2 or not f.step > 0:
        raise GridTooCoarse("need at least two grid nodes")
    base = np.asarray(f.values, dtype=float)
    out = base
    for _ in range(int(i) - 1):
        out = _trap_convolve(base, out, f.step)
    return ConvolutionGrid(f.step, out, f.order * int(i))


def _wc_prime(grid_wc, t):
    if t > grid_wc.horizon * (1 + 1e-12) or t < 0:
        raise OutOfRange(f"t={t} outside [0, {grid_wc.horizon}]")
    n = grid_wc.upto(t)
    return ConvolutionGrid(grid_wc.step, np.asarray(grid_wc.derivatives[:n]))


def expected_K_series(ctx: MutationContext, grid_wc: ScaleGrid, imax: int, t: float) -> np.ndarray:
    """[E[K_0(t)], ..., E[K_imax(t)]]."""
    f = _wc_prime(grid_wc, t)
    ratio = ctx.p / (1.0 - ctx.p)
    out = []
    power = f.values
    for i in range(imax + 1):
        if i:
            power = _trap_convolve(f.values, power, f.step)
        value = float(np.interp(t, f.times, power))
        out.append(ratio**i * value / ctx.clonal_rate)
    return np.array(out)


def expected_K(ctx: MutationContext, grid_wc: ScaleGrid, i: int, t: float) -> float:
    """E[K_i(t)] = (p/(1-p))^i (W_c')^{*(i+1)}(t) / (b (1-p))."""
    if int(i) != i or i < 0:
        raise OutOfRange(f"i must be a non-negative integer, got {i!r}")
    return float(expected_K_series(ctx, grid_wc, int(i), t)[-1])


def expected_L_series(ctx: MutationContext, grid_wc: ScaleGrid, imax: int, t: float) -> np.ndarray:
    """[E[L_0(t)], ..., E[L_imax(t)]]."""
    f = _wc_prime(grid_wc, t)
    n = len(f.values)
    g = f.values / grid_wc.values[:n]
    ratio = ctx.p / (1.0 - ctx.p)
    out = [float(np.interp(t, f.times, g)) / ctx.clonal_rate]
    power = f.values
    for i in range(1, imax + 1):
        if i > 1:
            power = _trap_convolve(f.values, power, f.step)
        conv = _trap_convolve(power, g, f.step)
        out.append(ratio**i * float(np.interp(t, f.times, conv)) / ctx.clonal_rate)
    return np.array(out)


def expected_L(ctx: MutationContext, grid_wc: ScaleGrid, i: int, t: float) -> float:
    """E[L_i(t)]; for i >= 1, (p/(1-p))^i ((W_c')^{*(i)} * W_c'/W_c)(t) / (b (1-p))."""
    if int(i) != i or i < 0:
        raise OutOfRange(f"i must be a non-negative integer, got {i!r}")
    return float(expected_L_series(ctx, grid_wc, int(i), t)[-1])


@dataclass(frozen=True)
class KAsymptotics:
    """E[K_i(t)] ~ leading_coefficient * t^i * exp(eta_p t)."""

    regime: str
    eta_p: float
    C_p: float
    leading_coefficient: float


@dataclass(frozen=True)
class LAsymptotics:
    """E[L_i(t)] ~ constant * t^power * (ln t if log_factor) * exp(growth_exponent t)."""

    regime: str
    growth_exponent: float
    power: int
    log_factor: bool
    constant: float


def _clonal_root(ctx):
    kind = regime(ctx.clonal_measure())
    if kind == "supercritical":
        eta_c = malthusian(ctx.clonal_measure())
        return kind, eta_c, eta_c / ctx.psi_c(eta_c)[1]
    if kind == "critical":
        sigma2 = ctx.measure.moments()[1]
        return kind, 0.0, 2.0 / ((1.0 - ctx.p) * sigma2)
    eta_t = negative_root(ctx.clonal_measure())
    return kind, eta_t, eta_t / ctx.psi_c(eta_t)[1]


def K_asymptotics(ctx: MutationContext, i: int) -> KAsymptotics:
    if int(i) != i or i < 0:
        raise OutOfRange(f"i must be a non-negative integer, got {i!r}")
    kind, eta_p, c_p = _clonal_root(ctx)
    ratio = ctx.p / (1.0 - ctx.p)
    lead = ratio**i * c_p ** (i + 1) / (ctx.clonal_rate * math.factorial(i))
    return KAsymptotics(kind, eta_p, c_p, lead)


def clonal_J(ctx: MutationContext, tol: float = 1e-8, step: float = 1e-3) -> float:
    """J_c = int_0^inf e^{-eta_c u} W_c'(u)/W_c(u) du (supercritical clone)."""
    eta_c = malthusian(ctx.clonal_measure())
    if not eta_c > 0:
        raise WrongRegime("J_c needs a supercritical clonal process")
    rate = ctx.clonal_rate
    grid = clonal_grid(ctx, limit_horizon(rate, eta_c, tol), default_step(rate, step))
    x = grid.times
    return float(np.trapezoid(np.exp(-eta_c * x) * grid.derivatives / grid.values, x))


def L_asymptotics(ctx: MutationContext, i: int, tol: float = 1e-8) -> LAsymptotics:
    """Leading term of E[L_i(t)] for i >= 1.

    In the critical clonal regime the power of t is i - 1: (W_c')^{*(i)} grows
    like t^{i-1} and the convolution with W_c'/W_c ~ 1/t contributes ln t.
    In the subcritical regime the constant is built from psi_c'.
    """
    if int(i) != i or i < 1:
        raise OutOfRange(f"the leading term of E[L_i] is defined for i >= 1, got {i!r}")
    kind, eta_p, c_p = _clonal_root(ctx)
    p, rate = ctx.p, ctx.clonal_rate
    ratio = p / (1.0 - p)
    if kind == "supercritical":
        const = clonal_J(ctx, tol) * (ratio * c_p) ** i / (rate * math.factorial(i - 1))
        return LAsymptotics(kind, eta_p, i - 1, False, const)
    if kind == "critical":
        sigma2 = ctx.measure.moments()[1]
        const = (2.0 * p / (sigma2 * (1.0 - p) ** 2)) ** i / (rate * math.factorial(i - 1))
        return LAsymptotics(kind, 0.0, i - 1, True, const)
    m_c = ctx.clonal_measure().mean_offspring
    const = (1.0 - m_c) * ratio**i * c_p ** (i + 1) / (rate * math.factorial(i))
    return LAsymptotics(kind, eta_p, i, False, const)


@dataclass(frozen=True)
class KappaLaw:
    """Limit of t^{-i} e^{-eta_c t} K_i(t): atom at 0 with probability
    ``atom_prob``, otherwise exponential with mean ``conditional_mean``."""

    order: int
    atom_prob: float
    conditional_mean: float
    eta_c: float

    @property
    def theta(self):
        return 1.0 / self.conditional_mean

    @property
    def mean(self):
        return (1.0 - self.atom_prob) * self.conditional_mean

    def laplace(self, a, theta=None):
        theta = self.theta if theta is None else theta
        P = 1.0 - self.atom_prob
        return 1.0 - P + P * theta / (a + theta)


def _supercritical_clone(ctx):
    clonal = ctx.clonal_measure()
    if regime(clonal) != "supercritical":
        raise WrongRegime("the kappa limit needs (1-p) m > 1 (supercritical clonal process)")
    if not clonal.has_infinite_mass and math.isinf(ctx.measure.moments()[1]):
        raise WrongRegime("the kappa limit needs a finite second moment")
    return malthusian(clonal)


def kappa_law(ctx: MutationContext, i: int) -> KappaLaw:
    if int(i) != i or i < 0:
        raise OutOfRange(f"i must be a non-negative integer, got {i!r}")
    eta_c = _supercritical_clone(ctx)
    dpsi = ctx.psi_c(eta_c)[1]
    ratio = ctx.p / (1.0 - ctx.p)
    mean = ratio**i * eta_c**i / (math.factorial(i) * dpsi ** (i + 1))
    return KappaLaw(int(i), 1.0 - eta_c / ctx.clonal_rate, mean, eta_c)


def kappa_fixed_point_residual(ctx: MutationContext, i: int, a: float,
                               theta: Optional[float] = None,
                               atom_prob: Optional[float] = None,
                               tol: float = 1e-10) -> float:
    """|phi(a) - int Lambda(dz)/b exp{b(1-p)(int_0^z phi(a e^{-eta_c u}) du - z)}|
    for the mixture transform phi(a) = 1 - P + P theta / (a + theta).

    ``theta`` and ``atom_prob`` default to the limit law; overriding them
    evaluates the residual of a perturbed candidate.  The inner integral is
    done in closed form, the outer one by adaptive quadrature against the
    lifespan density.
    """
    if not a > 0:
        raise OutOfRange(f"a must be positive, got {a}")
    law = kappa_law(ctx, i)
    eta_c = law.eta_c
    theta = law.theta if theta is None else float(theta)
    P = 1.0 - (law.atom_prob if atom_prob is None else float(atom_prob))
    rate = ctx.clonal_rate
    lhs = 1.0 - P + P * theta / (a + theta)

    # closed inner integral: the exponent reduces to
    # (rate P / eta_c) * ln((a e^{-eta_c z} + theta) / (a + theta))
    power = rate * P / eta_c
    integrand = lambda z: ((a * math.exp(-eta_c * z) + theta) / (a + theta)) ** power

    measure = ctx.measure
    if measure.has_infinite_mass:
        return abs(lhs - (theta / (a + theta)) ** power)
    upper = measure.support_end
    weight = lambda z: integrand(z) * float(measure.density(z))
    if math.isinf(upper):
        rhs, _ = integrate.quad(weight, 0.0, math.inf, epsabs=tol, epsrel=tol, limit=500)
    else:
        rhs, _ = integrate.quad(weight, 0.0, upper, epsabs=tol, epsrel=tol, limit=500)
    return abs(lhs - rhs)


def convolution_limit_check(f: ConvolutionGrid, i: int, a_rate: float, l: float, t_probe: float) -> float:
    """|e^{a t} f^{*(i)}(t) (i-1)! / (t^{i-1} l^i) - 1| at t = t_probe, for f
    with e^{a t} f(t) -> l."""
    n = int(math.ceil(t_probe / f.step - 1e-9)) + 1
    if n > len(f.values):
        raise OutOfRange(f"t_probe={t_probe} beyond the sampled range {f.horizon}")
    head = ConvolutionGrid(f.step, np.asarray(f.values[:n]), f.order)
    conv = iterated_convolution(head, i).at(t_probe)
    scaled = math.exp(a_rate * t_probe) * conv * math.factorial(i - 1) / (t_probe ** (i - 1) * l**i)
    return abs(scaled - 1.0)


def log_slope(times, values, reference) -> float:
    """Least-squares slope of log(values / reference) against log(times).

    Used as a growth diagnostic: a slope near 0 means ``reference`` captures
    the growth of ``values`` over the probed range.
    """
    x = np.log(np.asarray(times, dtype=float))
    y = np.log(np.asarray(values, dtype=float) / np.asarray(reference, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
