import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from splittree.errors import DivergentMoment, InvalidConfig
from splittree.lifespan import (
    Exponential,
    Gamma,
    MutationContext,
    PureBirth,
    UniformLife,
    moments,
    parse_measure,
    psi,
    psi_by_quadrature,
    psi_c,
    sample_lifespan,
    tail_mass,
)

rates = st.floats(0.2, 4.0)


@st.composite
def measures(draw, pure_birth=True):
    b = draw(rates)
    family = draw(st.sampled_from(["exp", "gamma", "uniform"] + (["pure"] if pure_birth else [])))
    if family == "exp":
        return Exponential(b, draw(st.floats(0.2, 4.0)))
    if family == "gamma":
        return Gamma(b, draw(st.floats(0.5, 4.0)), draw(st.floats(0.3, 4.0)))
    if family == "uniform":
        return UniformLife(b, draw(st.floats(0.2, 5.0)))
    return PureBirth(b)


def test_tail_mass_examples():
    assert tail_mass(Exponential(2.0, 1.0), 0.0) == pytest.approx(2.0)
    assert tail_mass(Exponential(2.0, 1.0), 1.0) == pytest.approx(2 * math.exp(-1), rel=1e-12)
    assert tail_mass(PureBirth(1.0), 100.0) == 1.0


def test_moments_examples():
    assert moments(Exponential(2.0, 1.0)) == pytest.approx((2.0, 4.0))
    assert moments(Exponential(0.5, 1.0)) == pytest.approx((0.5, 1.0))
    assert moments(PureBirth(1.0)) == (math.inf, math.inf)
    # gamma: b k/r and b k(k+1)/r^2; uniform: b c/2 and b c^2/3
    assert moments(Gamma(2.0, 3.0, 2.0)) == pytest.approx((3.0, 6.0))
    assert moments(UniformLife(3.0, 2.0)) == pytest.approx((3.0, 4.0))


def test_psi_examples():
    value, deriv = psi(Exponential(2.0, 1.0), 1.0)
    assert value == pytest.approx(0.0, abs=1e-15)
    assert deriv == pytest.approx(0.5)
    for m in (Exponential(2.0, 1.0), Gamma(1.0, 2.0, 1.0), UniformLife(1.0, 2.0), PureBirth(1.0)):
        assert psi(m, 0.0)[0] == 0.0


def test_psi_c_examples():
    ctx = MutationContext(Exponential(2.0, 1.0), 0.25)
    value, deriv = psi_c(ctx, 0.5)
    assert value == pytest.approx(0.0, abs=1e-15)
    assert deriv == pytest.approx(1 / 3)
    assert psi_c(MutationContext(Exponential(2.0, 1.0), 0.5), 0.0)[0] == 0.0


def test_pure_birth_psi():
    m = PureBirth(1.5)
    assert m.psi(2.0) == (0.5, 1.0)
    with pytest.raises(DivergentMoment):
        m.psi(-0.1)


def test_divergent_exponential_moment():
    with pytest.raises(DivergentMoment):
        Exponential(1.0, 2.0).psi(-2.5)
    with pytest.raises(DivergentMoment):
        Gamma(1.0, 2.0, 1.5).psi(-1.6)
    # bounded support: every exponential moment is finite
    assert math.isfinite(UniformLife(1.0, 2.0).psi(-5.0)[0])


@given(measures(), st.floats(0.01, 20.0))
def test_psi_closed_form_matches_quadrature(m, lam):
    # compare the integral part lam - psi, which is what the quadrature computes;
    # psi itself can vanish through cancellation near its root
    value = lam - m.psi(lam)[0]
    ref = lam - psi_by_quadrature(m, lam)
    assert value == pytest.approx(ref, rel=1e-8)


@given(measures(), st.lists(st.floats(0.0, 10.0), min_size=3, max_size=3, unique=True))
def test_psi_convex(m, lams):
    l1, l2, l3 = sorted(lams)
    if l3 - l1 < 1e-6:
        return
    f = lambda x: m.psi(x)[0]
    interp = f(l1) + (f(l3) - f(l1)) * (l2 - l1) / (l3 - l1)
    assert f(l2) <= interp + 1e-10


@given(measures(), st.floats(0.05, 0.95), st.floats(0.01, 10.0))
def test_psi_c_identity(m, p, lam):
    ctx = MutationContext(m, p)
    lhs = ctx.psi_c(lam)[0] - m.psi(lam)[0]
    assert lhs == pytest.approx(p * (lam - m.psi(lam)[0]), rel=1e-12, abs=1e-12)


@given(measures(pure_birth=False))
def test_tail_mass_vanishes_and_decreases(m):
    t = np.linspace(0, 50, 400)
    tail = tail_mass(m, t)
    assert tail[0] == pytest.approx(m.birth_rate)
    assert np.all(np.diff(tail) <= 1e-15)
    assert tail_mass(m, 1e4) < 1e-10


def test_clonal_mass():
    ctx = MutationContext(Gamma(3.0, 2.0, 1.0), 0.2)
    assert ctx.clonal_measure().birth_rate == pytest.approx(2.4)
    assert ctx.clonal_rate == pytest.approx(2.4)


def test_sampling():
    rng = np.random.default_rng(7)
    assert sample_lifespan(PureBirth(1.0), rng) == math.inf
    draws = Exponential(2.0, 1.0).sample(rng, 100_000)
    assert abs(draws.mean() - 1.0) < 3 * draws.std() / math.sqrt(draws.size)
    u = UniformLife(1.0, 2.0).sample(rng, 10_000)
    assert np.all((u > 0) & (u <= 2))
    g = Gamma(1.0, 2.0, 4.0).sample(rng, 100_000)
    assert abs(g.mean() - 0.5) < 3 * g.std() / math.sqrt(g.size)


@pytest.mark.parametrize("bad, key", [
    ({"d": 1.0, "b": 2.0}, "family"),
    ({"family": "weibull", "b": 1.0}, "family"),
    ({"family": "exponential", "d": 1.0}, "b"),
    ({"family": "exponential", "b": 2.0}, "d"),
    ({"family": "gamma", "b": 2.0, "shape": 1.0}, "rate"),
    ({"family": "uniform", "b": 2.0, "c": -1.0}, "c"),
    ({"family": "exponential", "b": "x", "d": 1.0}, "b"),
    ({"family": "pure_birth", "b": 1.0, "d": 1.0}, "d"),
])
def test_parse_errors_name_the_key(bad, key):
    with pytest.raises(InvalidConfig) as info:
        parse_measure(bad)
    assert info.value.key == key


def test_parse_roundtrip():
    for m in (Exponential(2.0, 1.0), PureBirth(1.0), Gamma(2.0, 3.0, 1.5), UniformLife(1.0, 2.5)):
        assert parse_measure(m.to_config()) == m


def test_invalid_mutation_probability():
    for p in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(InvalidConfig):
            MutationContext(Exponential(1.0, 1.0), p)
