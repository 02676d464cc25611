import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from oracles import bd_dW, bd_W, geometric_marginal
from splittree.errors import GridTooCoarse, NoNegativeRoot, OutOfRange
from splittree.lifespan import Exponential, Gamma, MutationContext, PureBirth, UniformLife
from splittree.scale import (
    GeometricLaw,
    clonal_grid,
    extinction_probability,
    growth_constants,
    malthusian,
    marginal,
    negative_root,
    regime,
    solve_scale,
)

BD = Exponential(2.0, 1.0)


def test_malthusian_examples():
    assert malthusian(BD) == pytest.approx(1.0, abs=1e-10)
    assert malthusian(Exponential(0.5, 1.0)) == 0.0
    assert malthusian(PureBirth(1.0)) == pytest.approx(1.0, abs=1e-10)
    eta = malthusian(Gamma(3.0, 2.0, 1.0))
    assert abs(Gamma(3.0, 2.0, 1.0).psi(eta)[0]) <= 1e-12


def test_negative_root_examples():
    assert negative_root(Exponential(0.5, 1.0)) == pytest.approx(-0.5, abs=1e-10)
    assert negative_root(Exponential(1.0, 2.0)) == pytest.approx(-1.0, abs=1e-10)
    with pytest.raises(NoNegativeRoot):
        negative_root(BD)
    root = negative_root(UniformLife(0.5, 1.0))
    assert root < 0 and abs(UniformLife(0.5, 1.0).psi(root)[0]) <= 1e-12


def test_regime():
    assert regime(BD) == "supercritical"
    assert regime(Exponential(1.0, 1.0)) == "critical"
    assert regime(Exponential(0.5, 1.0)) == "subcritical"
    assert regime(PureBirth(0.1)) == "supercritical"


def test_birth_death_closed_form():
    grid = solve_scale(BD, 10.0, 1e-3)
    assert grid.values[0] == 1.0
    assert grid.W(1.0) == pytest.approx(4.436564, rel=1e-5)
    assert grid.dW(1.0) == pytest.approx(5.436564, rel=1e-5)
    t = grid.times
    assert np.max(np.abs(grid.values / bd_W(t, 2, 1) - 1)) <= 1e-5
    assert np.max(np.abs(grid.derivatives / bd_dW(t, 2, 1) - 1)) <= 1e-5


def test_pure_birth_closed_form():
    grid = solve_scale(PureBirth(1.0), 10.0, 1e-3)
    assert np.max(np.abs(grid.values / np.exp(grid.times) - 1)) <= 1e-5


def test_clonal_closed_forms():
    g = clonal_grid(MutationContext(BD, 0.25), 10.0, 1e-3)
    assert g.W(1.0) == pytest.approx(2.946164, rel=1e-5)
    assert np.max(np.abs(g.values / (3 * np.exp(0.5 * g.times) - 2) - 1)) <= 1e-5
    g = clonal_grid(MutationContext(BD, 0.5), 10.0, 1e-3)
    assert np.max(np.abs(g.values / (1 + g.times) - 1)) <= 1e-5
    g = clonal_grid(MutationContext(PureBirth(1.0), 0.3), 5.0, 1e-3)
    assert np.max(np.abs(g.values / np.exp(0.7 * g.times) - 1)) <= 1e-5


def test_step_guard():
    with pytest.raises(GridTooCoarse):
        solve_scale(BD, 1.0, 0.03)
    with pytest.raises(GridTooCoarse):
        solve_scale(BD, 1e-4, 1e-3)
    solve_scale(BD, 1.0, 0.025)


def test_out_of_range():
    grid = solve_scale(BD, 1.0, 1e-3)
    with pytest.raises(OutOfRange):
        grid.W(1.5)
    with pytest.raises(OutOfRange):
        marginal(grid, -0.1)


def test_marginal_examples():
    grid = solve_scale(BD, 2.0, 1e-3)
    law = marginal(grid, 1.0)
    p0, s, mean = geometric_marginal(1.0, 2, 1)
    assert law.p_zero == pytest.approx(0.38730, abs=1e-5)
    assert law.p_zero == pytest.approx(p0, rel=1e-5)
    assert law.success == pytest.approx(0.22540, abs=1e-5)
    assert law.success == pytest.approx(s, rel=1e-5)
    assert law.mean == pytest.approx(math.e, rel=1e-5)
    law0 = marginal(grid, 0.0)
    assert (law0.p_zero, law0.success, law0.mean) == (0.0, 1.0, 1.0)
    pb = marginal(solve_scale(PureBirth(1.0), 2.0, 1e-3), 2.0)
    assert pb.p_zero == pytest.approx(0.0, abs=1e-6)
    assert pb.mean == pytest.approx(math.exp(2), rel=1e-5)


def test_extinction_probability():
    assert extinction_probability(BD) == pytest.approx(0.5)
    assert extinction_probability(Exponential(0.5, 1.0)) == 1.0
    assert extinction_probability(PureBirth(1.0)) == pytest.approx(0.0, abs=1e-10)


def test_growth_constants_examples():
    c = growth_constants(BD)
    assert c.regime == "supercritical"
    assert (c.eta, c.w_growth_constant, c.wprime_growth_constant) == pytest.approx((1.0, 2.0, 2.0))
    c = growth_constants(MutationContext(BD, 0.5).clonal_measure())
    assert c.regime == "critical" and c.w_growth_constant == pytest.approx(1.0)
    c = growth_constants(Exponential(0.5, 1.0))
    assert c.regime == "subcritical"
    assert (c.w_growth_constant, c.eta_tilde, c.wprime_growth_constant) == pytest.approx((2.0, -0.5, 0.5))


def test_growth_limits():
    grid = solve_scale(BD, 20.0, 1e-3)
    assert abs(math.exp(-20) * grid.W(20.0) * 0.5 - 1) <= 1e-3
    g = clonal_grid(MutationContext(BD, 0.5), 10.0, 1e-3)
    assert abs(g.dW(10.0) - 1) <= 1e-4
    sub = solve_scale(Exponential(0.5, 1.0), 20.0, 1e-3)
    assert abs(sub.W(20.0) - 2) <= 1e-3
    assert abs(math.exp(10) * sub.dW(20.0) - 0.5) <= 1e-3


def test_geometric_mass():
    law = GeometricLaw(0.3, 0.2)
    assert law.total_mass() == pytest.approx(1.0, abs=1e-12)
    assert law.pmf(np.arange(2000)).sum() == pytest.approx(1.0, abs=1e-12)


@st.composite
def measures(draw):
    b = draw(st.floats(0.3, 3.0))
    kind = draw(st.sampled_from(["exp", "gamma", "uniform", "pure"]))
    if kind == "exp":
        return Exponential(b, draw(st.floats(0.3, 3.0)))
    if kind == "gamma":
        return Gamma(b, draw(st.floats(0.5, 3.0)), draw(st.floats(0.5, 3.0)))
    if kind == "uniform":
        return UniformLife(b, draw(st.floats(0.3, 3.0)))
    return PureBirth(b)


@settings(max_examples=25)
@given(measures(), st.floats(0.05, 0.9))
def test_grid_invariants(m, p):
    h = min(1e-3, 0.05 / m.birth_rate) * 4
    T = 2.0
    grid = solve_scale(m, T, h)
    w, dw = grid.values, grid.derivatives
    assert w[0] == 1.0
    # strictly increasing wherever the increment is above rounding level
    inc = np.diff(w)
    assert np.all(inc >= 0)
    assert np.all(inc[dw[1:] * h > 1e-12 * w[1:]] > 0)
    # Volterra identity and the derivative identity with trapezoid quadrature
    t = grid.times
    tail = m.tail_mass(t)
    for k in range(1, len(t), 97):
        rhs = 1.0 + np.trapezoid(w[: k + 1] * tail[k::-1], t[: k + 1])
        assert abs(w[k] - rhs) <= 10 * h**2 * w[: k + 1].max()
        if not m.has_infinite_mass and k % 3 == 1:
            f = lambda x: float(grid.W(t[k] - x)) * m.birth_rate * float(m.density(x))
            conv = integrate.quad(f, 0, t[k], limit=200, epsabs=h * m.birth_rate * w[k], epsrel=1e-6)[0]
            assert abs(dw[k] - (m.birth_rate * w[k] - conv)) <= 10 * h * m.birth_rate * w[k]
    # thinning reduces W
    wc = clonal_grid(MutationContext(m, p), T, h).values
    assert np.all(wc <= w + h**2 * m.birth_rate)
    law = marginal(grid, T)
    assert 0 <= law.p_zero < 1 and 0 < law.success <= 1
    assert law.total_mass() == pytest.approx(1.0, abs=1e-12)
