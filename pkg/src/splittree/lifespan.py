"""Lifespan measures of a splitting tree and their Laplace exponents.

A lifespan measure is a finite measure on (0, inf] whose total mass is the
birth rate ``b``; normalised by ``b`` it is the law of an individual's
lifespan.  Four parametric families are provided, each with closed-form
tail, moments and Laplace transform:

* :class:`Exponential` -- linear birth-death process, death rate ``d``.
* :class:`PureBirth` -- infinite lifespans (Yule process).
* :class:`Gamma` -- gamma lifespans, ``shape`` and ``rate``.
* :class:`UniformLife` -- lifespans uniform on (0, ``c``].

The Laplace exponent is

    psi(lam) = lam - int (1 - exp(-lam r)) Lambda(dr),

and its clonal counterpart for mutation probability ``p`` is
``psi_c(lam) = p lam + (1 - p) psi(lam)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Mapping

import numpy as np
from scipy import integrate, special, stats

from .errors import DivergentMoment, InvalidConfig

__all__ = [
    "LifespanMeasure",
    "Exponential",
    "PureBirth",
    "Gamma",
    "UniformLife",
    "MutationContext",
    "tail_mass",
    "moments",
    "psi",
    "psi_c",
    "psi_by_quadrature",
    "sample_lifespan",
    "parse_measure",
]


def _positive(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        raise InvalidConfig(f"{name} must be a positive finite number, got {value!r}", key=name)
    return float(value)


@dataclass(frozen=True)
class LifespanMeasure:
    """Base class; subclasses fix the normalised lifespan law."""

    birth_rate: float

    family = "abstract"
    # exponential moments E[exp(-lam Z)] are finite iff lam > moment_boundary
    moment_boundary = -math.inf
    support_end = math.inf
    has_infinite_mass = False

    def __post_init__(self):
        object.__setattr__(self, "birth_rate", _positive("b", self.birth_rate))

    @property
    def b(self):
        return self.birth_rate

    def scaled(self, factor):
        """The measure ``factor * Lambda`` (same lifespan law, thinned births)."""
        return replace(self, birth_rate=self.birth_rate * factor)

    # -- normalised lifespan law --------------------------------------------
    def survival(self, t):
        """P(Z > t) for a lifespan Z."""
        raise NotImplementedError

    def density(self, r):
        """Density of the lifespan law on (0, inf)."""
        raise NotImplementedError

    def laplace(self, lam):
        """E[exp(-lam Z)], with exp(-lam * inf) = 0 for lam > 0."""
        raise NotImplementedError

    def laplace_weighted(self, lam):
        """E[Z exp(-lam Z)]."""
        raise NotImplementedError

    def lifespan_moments(self):
        """(E[Z], E[Z^2])."""
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    # -- measure-level quantities -------------------------------------------
    def tail_mass(self, t):
        """Lambda((t, inf]); vectorised over ``t``."""
        out = self.birth_rate * self.survival(np.asarray(t, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def moments(self):
        """(m, sigma2) = (int r Lambda(dr), int r^2 Lambda(dr))."""
        e1, e2 = self.lifespan_moments()
        return self.birth_rate * e1, self.birth_rate * e2

    @property
    def mean_offspring(self):
        return self.moments()[0]

    def _check_domain(self, lam):
        if lam <= self.moment_boundary and not (lam == 0 and self.moment_boundary == 0):
            raise DivergentMoment(
                f"int exp(-lam r) Lambda(dr) diverges for lam={lam} ({self.family} lifespans)"
            )

    def psi(self, lam):
        """Return ``(psi(lam), psi'(lam))``."""
        lam = float(lam)
        self._check_domain(lam)
        if lam == 0.0:
            return 0.0, 1.0 - self.moments()[0]
        b = self.birth_rate
        value = lam - b * (1.0 - self.laplace(lam))
        deriv = 1.0 - b * self.laplace_weighted(lam)
        return value, deriv

    def to_config(self) -> dict:
        raise NotImplementedError

    @property
    def tag(self):
        params = ",".join(f"{k}={v:.12g}" for k, v in self.to_config().items() if k != "family")
        return f"{self.family}({params})"


@dataclass(frozen=True)
class Exponential(LifespanMeasure):
    d: float = 1.0

    family = "exponential"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "d", _positive("d", self.d))

    @property
    def moment_boundary(self):
        return -self.d

    def survival(self, t):
        return np.exp(-self.d * np.maximum(t, 0.0))

    def density(self, r):
        return self.d * np.exp(-self.d * np.asarray(r, dtype=float))

    def laplace(self, lam):
        return self.d / (lam + self.d)

    def laplace_weighted(self, lam):
        return self.d / (lam + self.d) ** 2

    def psi(self, lam):
        lam = float(lam)
        self._check_domain(lam)
        b, d = self.birth_rate, self.d
        return lam * (lam + d - b) / (lam + d), 1.0 - b * d / (lam + d) ** 2

    def lifespan_moments(self):
        return 1.0 / self.d, 2.0 / self.d**2

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.d, size)

    def to_config(self):
        return {"family": self.family, "b": self.birth_rate, "d": self.d}


@dataclass(frozen=True)
class PureBirth(LifespanMeasure):
    """All mass at +inf: nobody dies.

    psi(lam) = (lam - b) 1{lam > 0}, so psi(0) = 0 by convention and the
    measure has no finite moments.
    """

    family = "pure_birth"
    moment_boundary = 0.0
    has_infinite_mass = True

    def survival(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def density(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def laplace(self, lam):
        return 1.0 if lam == 0 else 0.0

    def laplace_weighted(self, lam):
        return math.inf if lam == 0 else 0.0

    def psi(self, lam):
        lam = float(lam)
        self._check_domain(lam)
        if lam == 0.0:
            return 0.0, -math.inf
        return lam - self.birth_rate, 1.0

    def lifespan_moments(self):
        return math.inf, math.inf

    def sample(self, rng, size=None):
        if size is None:
            return math.inf
        return np.full(size, math.inf)

    def to_config(self):
        return {"family": self.family, "b": self.birth_rate}


@dataclass(frozen=True)
class Gamma(LifespanMeasure):
    shape: float = 2.0
    rate: float = 2.0

    family = "gamma"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "shape", _positive("shape", self.shape))
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    @property
    def moment_boundary(self):
        return -self.rate

    def survival(self, t):
        return special.gammaincc(self.shape, self.rate * np.maximum(t, 0.0))

    def density(self, r):
        return stats.gamma.pdf(r, self.shape, scale=1.0 / self.rate)

    def laplace(self, lam):
        return (self.rate / (self.rate + lam)) ** self.shape

    def laplace_weighted(self, lam):
        k, r = self.shape, self.rate
        return k * r**k / (r + lam) ** (k + 1)

    def lifespan_moments(self):
        k, r = self.shape, self.rate
        return k / r, k * (k + 1) / r**2

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def to_config(self):
        return {"family": self.family, "b": self.birth_rate, "shape": self.shape, "rate": self.rate}


def _uniform_weighted(x):
    # int_0^1 u exp(-x u) du, stable near x = 0
    if abs(x) < 0.5:
        term, total = 1.0, 0.0
        for n in range(30):
            total += term / (n + 2)
            term *= -x / (n + 1)
        return total
    return -math.expm1(-x) / x**2 - math.exp(-x) / x


@dataclass(frozen=True)
class UniformLife(LifespanMeasure):
    c: float = 1.0

    family = "uniform"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "c", _positive("c", self.c))

    @property
    def support_end(self):
        return self.c

    def survival(self, t):
        return np.clip(1.0 - np.asarray(t, dtype=float) / self.c, 0.0, 1.0)

    def density(self, r):
        r = np.asarray(r, dtype=float)
        return np.where((r > 0) & (r <= self.c), 1.0 / self.c, 0.0)

    def laplace(self, lam):
        return float(special.exprel(-lam * self.c))

    def laplace_weighted(self, lam):
        return self.c * _uniform_weighted(lam * self.c)

    def lifespan_moments(self):
        return self.c / 2.0, self.c**2 / 3.0

    def sample(self, rng, size=None):
        # (0, c], never exactly 0
        return self.c * (1.0 - rng.random(size))

    def to_config(self):
        return {"family": self.family, "b": self.birth_rate, "c": self.c}


@dataclass(frozen=True)
class MutationContext:
    """A lifespan measure together with the per-birth mutation probability."""

    measure: LifespanMeasure
    mutation_prob: float

    def __post_init__(self):
        p = self.mutation_prob
        if not (isinstance(p, (int, float, np.floating)) and 0.0 < p < 1.0):
            raise InvalidConfig(f"mutation probability p must lie in (0, 1), got {p!r}", key="p")
        object.__setattr__(self, "mutation_prob", float(p))

    @property
    def p(self):
        return self.mutation_prob

    @property
    def b(self):
        return self.measure.birth_rate

    @property
    def clonal_rate(self):
        return (1.0 - self.mutation_prob) * self.measure.birth_rate

    def clonal_measure(self):
        """Lambda_c = (1 - p) Lambda."""
        return self.measure.scaled(1.0 - self.mutation_prob)

    def psi_c(self, lam):
        p = self.mutation_prob
        value, deriv = self.measure.psi(lam)
        if math.isinf(deriv):
            return p * lam + (1 - p) * value, deriv
        return p * lam + (1 - p) * value, p + (1 - p) * deriv


def tail_mass(measure, t):
    return measure.tail_mass(t)


def moments(measure):
    return measure.moments()


def psi(measure, lam):
    return measure.psi(lam)


def psi_c(ctx, lam):
    return ctx.psi_c(lam)


def sample_lifespan(measure, rng):
    return measure.sample(rng)


def psi_by_quadrature(measure, lam, tol=1e-10):
    """psi(lam) by adaptive Gauss-Kronrod quadrature against the lifespan
    density, independently of the closed forms.  Only the value is returned.
    """
    lam = float(lam)
    if lam == 0.0:
        return 0.0
    b = measure.birth_rate
    if measure.has_infinite_mass:
        if lam < 0:
            raise DivergentMoment("pure-birth measure has no negative exponential moments")
        return lam - b
    upper = measure.support_end
    if math.isinf(upper):
        # truncate where the remaining tail mass is negligible
        upper = 1.0
        while measure.tail_mass(upper) >= 1e-14:
            upper *= 2.0
    integrand = lambda r: -math.expm1(-lam * r) * float(measure.density(r))
    breaks = [x for x in (0.5, 2.0, 8.0) if x < upper]
    value, _ = integrate.quad(integrand, 0.0, upper, epsabs=tol, epsrel=1e-12, limit=500, points=breaks or None)
    return lam - b * value


_FAMILIES = {
    "exponential": (Exponential, ("d",)),
    "pure_birth": (PureBirth, ()),
    "purebirth": (PureBirth, ()),
    "yule": (PureBirth, ()),
    "gamma": (Gamma, ("shape", "rate")),
    "uniform": (UniformLife, ("c",)),
}


def parse_measure(config: Mapping[str, Any]) -> LifespanMeasure:
    """Build a measure from ``{"family": "exponential", "d": 1.0, "b": 2.0}`` style dicts."""
    if "family" not in config:
        raise InvalidConfig("measure config needs a 'family' key", key="family")
    name = str(config["family"]).lower()
    if name not in _FAMILIES:
        raise InvalidConfig(
            f"unknown lifespan family {config['family']!r}; expected one of "
            "exponential, pure_birth, gamma, uniform",
            key="family",
        )
    cls, params = _FAMILIES[name]
    if "b" not in config:
        raise InvalidConfig("measure config needs the birth rate 'b'", key="b")
    kwargs = {"birth_rate": config["b"]}
    for key in params:
        if key not in config:
            raise InvalidConfig(f"{name} lifespans need the parameter {key!r}", key=key)
        kwargs[key] = config[key]
    extra = set(config) - {"family", "b", *params}
    if extra:
        key = sorted(extra)[0]
        raise InvalidConfig(f"unexpected key {key!r} for {name} lifespans", key=key)
    for key, value in kwargs.items():
        try:
            kwargs[key] = float(value)
        except (TypeError, ValueError):
            raise InvalidConfig(f"{key} must be numeric, got {value!r}", key="b" if key == "birth_rate" else key) from None
    return cls(**kwargs)
