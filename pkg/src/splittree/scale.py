"""Scale functions, Malthusian roots and one-dimensional marginals.

The scale function W has Laplace transform 1/psi.  Integrating the identity
W' = b W - int_0^t W(t - x) Lambda(dx) once gives the renewal-type equation

    W(t) = 1 + int_0^t W(u) Lambda((t - u, inf]) du,

a Volterra equation of the second kind with a bounded kernel.  It is solved
on a uniform grid with the trapezoid rule, the diagonal term being treated
implicitly.  W' is then recovered from the first identity, using the same
cell averages of W against the exact Lambda-mass of each grid cell.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import DivergentMoment, GridTooCoarse, NoNegativeRoot, NonConvergence, OutOfRange
from .lifespan import LifespanMeasure, MutationContext

__all__ = [
    "ScaleGrid",
    "GeometricLaw",
    "LimitConstants",
    "malthusian",
    "negative_root",
    "solve_scale",
    "clonal_grid",
    "marginal",
    "extinction_probability",
    "growth_constants",
    "regime",
    "MAX_STEP_RATE",
]

# largest admissible h * b for the Volterra solver
MAX_STEP_RATE = 0.05
_ROOT_TOL = 1e-12


@dataclass(frozen=True)
class ScaleGrid:
    """W and W' tabulated at t_k = k * step, k = 0..n."""

    step: float
    values: np.ndarray
    derivatives: np.ndarray
    birth_rate: float
    measure_tag: str

    @property
    def horizon(self):
        return self.step * (len(self.values) - 1)

    @property
    def times(self):
        return self.step * np.arange(len(self.values))

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.horizon * (1 + 1e-12) + 1e-12):
            raise OutOfRange(f"t={t} outside the tabulated range [0, {self.horizon}]")
        return np.clip(t, 0.0, self.horizon)

    def W(self, t):
        """W at ``t`` (linear interpolation between nodes)."""
        return np.interp(self._check(t), self.times, self.values)

    def dW(self, t):
        """W' at ``t`` (linear interpolation between nodes)."""
        return np.interp(self._check(t), self.times, self.derivatives)

    def at(self, t):
        return float(self.W(t)), float(self.dW(t))

    def upto(self, t):
        """Number of nodes needed to cover [0, t]."""
        return min(len(self.values), int(math.ceil(t / self.step - 1e-9)) + 1)


@dataclass(frozen=True)
class GeometricLaw:
    """Law of the population size: an atom at 0 mixed with a geometric law on
    {1, 2, ...}: P(n) = (1 - p_zero) (1 - success)^(n-1) success."""

    p_zero: float
    success: float

    @property
    def mean(self):
        return (1.0 - self.p_zero) / self.success

    def pmf(self, n):
        n = np.asarray(n)
        positive = (1.0 - self.p_zero) * (1.0 - self.success) ** np.maximum(n - 1, 0) * self.success
        return np.where(n == 0, self.p_zero, np.where(n > 0, positive, 0.0))

    def total_mass(self):
        # p0 + (1 - p0) * sum_n s (1-s)^(n-1); the geometric series sums to 1
        s = self.success
        series = s / (1.0 - (1.0 - s)) if s > 0 else 0.0
        return self.p_zero + (1.0 - self.p_zero) * series


@dataclass(frozen=True)
class LimitConstants:
    """Large-time behaviour of W and W'.

    supercritical: W ~ w_growth e^{eta t}, W' ~ wprime_growth e^{eta t};
    critical:      W ~ w_growth t,         W' -> wprime_growth;
    subcritical:   W -> w_growth,          W' ~ wprime_growth e^{eta_tilde t}.
    """

    regime: str
    eta: float
    eta_tilde: Optional[float]
    psi_prime_at_root: float
    w_growth_constant: float
    wprime_growth_constant: Optional[float]


def regime(measure: LifespanMeasure, rtol=1e-12) -> str:
    m = measure.mean_offspring
    if math.isinf(m) or m > 1.0 + rtol:
        return "supercritical"
    if m < 1.0 - rtol:
        return "subcritical"
    return "critical"


def _root(f, lo, hi):
    """Root of f bracketed by [lo, hi] (Brent's method to machine precision)."""
    if lo > hi:
        lo, hi = hi, lo
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def malthusian(measure: LifespanMeasure, eps: float = 1e-8) -> float:
    """Largest root eta of psi; 0 unless the process is supercritical."""
    if regime(measure) != "supercritical":
        return 0.0
    f = lambda lam: measure.psi(lam)[0]
    lo = eps
    for _ in range(200):
        if f(lo) < 0:
            break
        lo *= 0.5
    else:
        raise NonConvergence("could not find a point where psi is negative near 0")
    hi = 2.0 * lo
    while f(hi) <= 0:
        hi *= 2.0
        if hi > 2.0**60 * eps:
            raise NonConvergence("bracket for the Malthusian root exceeded 2^60 * eps")
    eta = _root(f, lo, hi)
    if abs(f(eta)) > _ROOT_TOL * max(1.0, eta):
        raise NonConvergence(f"|psi(eta)| = {abs(f(eta)):.3g} above tolerance")
    return eta


def negative_root(measure: LifespanMeasure, eps: float = 1e-8) -> float:
    """The negative root eta_tilde of psi for subcritical measures."""
    if regime(measure) != "subcritical":
        raise NoNegativeRoot(f"psi has no negative root: {measure.tag} is not subcritical")
    f = lambda lam: measure.psi(lam)[0]
    hi = -eps
    for _ in range(200):
        if f(hi) < 0:
            break
        hi *= 0.5
    else:
        raise NonConvergence("psi is not negative just below 0")
    boundary = measure.moment_boundary
    lo = None
    if math.isinf(boundary):
        cand = 2.0 * hi
        while cand > -1e300:
            if f(cand) > 0:
                lo = cand
                break
            cand *= 2.0
    else:
        for k in range(1, 200):
            cand = boundary * (1.0 - 2.0**-k)
            if cand >= hi:
                continue
            try:
                if f(cand) > 0:
                    lo = cand
                    break
            except (DivergentMoment, OverflowError, ZeroDivisionError):
                continue
    if lo is None:
        raise NoNegativeRoot(f"psi stays negative up to the moment boundary for {measure.tag}")
    root = _root(f, lo, hi)
    if abs(f(root)) > _ROOT_TOL * max(1.0, abs(root)):
        raise NonConvergence(f"|psi(eta_tilde)| = {abs(f(root)):.3g} above tolerance")
    return root


def _check_step(measure, horizon, step):
    if not step > 0 or not horizon > 0:
        raise GridTooCoarse("step and horizon must be positive")
    if step * measure.birth_rate > MAX_STEP_RATE * (1 + 1e-12):
        raise GridTooCoarse(
            f"h*b = {step * measure.birth_rate:.4g} exceeds {MAX_STEP_RATE}; refine the step"
        )
    if horizon < step * (1 - 1e-12):
        raise GridTooCoarse("horizon must be at least one step")


@functools.lru_cache(maxsize=32)
def _solve_cached(measure, n, step):
    b = measure.birth_rate
    kernel = measure.tail_mass(step * np.arange(n + 1))
    kernel[0] = b
    w = np.empty(n + 1)
    w[0] = 1.0
    diag = 1.0 - 0.5 * step * b
    # w[j] * kernel[n-j] summed over j=1..n-1: dot with the reversed kernel
    rev = kernel[::-1].copy()
    for k in range(1, n + 1):
        acc = 0.5 * kernel[k] + np.dot(w[1:k], rev[n - k + 1 : n])
        w[k] = (1.0 + step * acc) / diag
    # W'(t_k) = b W(t_k) - sum over cells of mean(W) * Lambda(cell)
    cell_mass = kernel[:-1] - kernel[1:]
    cell_mass[0] = b - measure.tail_mass(step)
    avg = 0.5 * (w[1:] + w[:-1])
    dw = np.empty(n + 1)
    dw[0] = b
    if np.any(cell_mass != 0):
        # sum_{j<k} avg[k-1-j] * cell_mass[j]
        conv = np.convolve(avg, cell_mass)[:n]
        dw[1:] = b * w[1:] - conv
    else:
        dw[1:] = b * w[1:]
    w.setflags(write=False)
    dw.setflags(write=False)
    return w, dw


def solve_scale(measure: LifespanMeasure, horizon: float, step: float) -> ScaleGrid:
    """Tabulate W and W' on [0, horizon] with grid step ``step``."""
    _check_step(measure, horizon, step)
    n = int(math.ceil(horizon / step - 1e-9))
    w, dw = _solve_cached(measure, n, float(step))
    return ScaleGrid(float(step), w, dw, measure.birth_rate, measure.tag)


def clonal_grid(ctx: MutationContext, horizon: float, step: float) -> ScaleGrid:
    """W_c, the scale function of the clonal measure (1 - p) Lambda."""
    return solve_scale(ctx.clonal_measure(), horizon, step)


def marginal(grid: ScaleGrid, t: float) -> GeometricLaw:
    """Law of the population size at time t."""
    w, dw = grid.at(t)
    return GeometricLaw(p_zero=1.0 - dw / (grid.birth_rate * w), success=1.0 / w)


def expected_population(grid: ScaleGrid, t: float) -> float:
    """E[population at t] = W'(t) / b."""
    return float(grid.dW(t)) / grid.birth_rate


def extinction_probability(measure: LifespanMeasure) -> float:
    return 1.0 - malthusian(measure) / measure.birth_rate


def growth_constants(measure: LifespanMeasure) -> LimitConstants:
    kind = regime(measure)
    m, sigma2 = measure.moments()
    if kind == "supercritical":
        eta = malthusian(measure)
        dpsi = measure.psi(eta)[1]
        return LimitConstants(kind, eta, None, dpsi, 1.0 / dpsi, eta / dpsi)
    if kind == "critical":
        if math.isinf(sigma2):
            raise DivergentMoment("critical regime needs a finite second moment")
        c = 2.0 / sigma2
        return LimitConstants(kind, 0.0, None, 0.0, c, c)
    eta_t = negative_root(measure)
    dpsi = measure.psi(eta_t)[1]
    return LimitConstants(kind, 0.0, eta_t, dpsi, 1.0 / (1.0 - m), eta_t / dpsi)
