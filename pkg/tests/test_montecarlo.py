import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from splittree.errors import InvalidConfig, TooFewSamples, ZeroVariance
from splittree.lifespan import Exponential, MutationContext, PureBirth
from splittree.montecarlo import (
    Estimate,
    approaches,
    compare,
    estimate,
    estimate_many,
    geometric_gof,
    kappa_empirical,
    parse_statistic,
    replicate_values,
    run_suite,
    summarize,
    two_sample_z,
)

BD = MutationContext(Exponential(2.0, 1.0), 0.25)


def test_compare_arithmetic():
    e = Estimate("x", 100, 2.0, 0.5)
    r = compare(e, 2.0)
    assert r.z_score == 0.0 and r.passed
    r = compare(Estimate("x", 100, 4.0, 0.5), 2.0)
    assert r.z_score == pytest.approx(4.0) and not r.passed
    assert compare(Estimate("x", 100, 4.0, 0.5), 2.0, threshold=5).passed
    r = compare(Estimate("x", 100, 1.0, 0.0), 1.0)
    assert r.z_score == 0.0 and r.passed
    with pytest.raises(ZeroVariance):
        compare(Estimate("x", 100, 1.5, 0.0), 1.0)


@given(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3), st.floats(-10, 10))
def test_z_score_definition(theory, se, k):
    r = compare(Estimate("x", 10, theory + k * se, se), theory)
    assert r.z_score == pytest.approx(k, abs=1e-6 * (1 + abs(theory) / se))
    assert r.passed == (abs(r.z_score) <= 3)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
def test_summarize_definition(values):
    e = summarize("v", values)
    v = np.array(values)
    assert e.n == len(v)
    assert e.mean == pytest.approx(v.mean(), abs=1e-9)
    assert e.standard_error == pytest.approx(v.std(ddof=1) / math.sqrt(len(v)), abs=1e-9)


def test_summarize_skips_undefined():
    e = summarize("f", [1.0, math.nan, 3.0])
    assert (e.n, e.mean, e.excluded_undefined) == (2, 2.0, 1)
    with pytest.raises(InvalidConfig):
        summarize("f", [1.0])


def test_two_sample_z():
    a, b = Estimate("a", 10, 1.0, 0.3), Estimate("b", 10, 0.5, 0.4)
    assert two_sample_z(a, b) == pytest.approx(1.0)
    assert two_sample_z(a, a) == 0.0


def test_parse_statistic():
    assert parse_statistic("xi").name == "xi"
    assert parse_statistic("M:1:1").name == "M:1:1"
    assert parse_statistic("K:0").i == 0
    assert parse_statistic("M:2:0.5").a == 0.5
    for bad in ("", "foo", "K", "K:x", "M:1", "M:0:1", "fraction:0", "xi:1", "K:-1", "M:1:-2"):
        with pytest.raises(InvalidConfig):
            parse_statistic(bad)


def test_gof_accepts_exact_law():
    rng = np.random.default_rng(1)
    n, p0, s = 10_000, 0.3, 0.2
    draws = np.where(rng.random(n) < p0, 0, rng.geometric(s, n))
    assert geometric_gof(draws, s, p0) > 0.01


def test_gof_negative_control():
    assert geometric_gof(np.zeros(1000, dtype=int), 0.5, 0.1) < 1e-6
    with pytest.raises(TooFewSamples):
        geometric_gof(np.zeros(100, dtype=int), 0.5, 0.1)
    with pytest.raises(InvalidConfig):
        geometric_gof(np.zeros(1000, dtype=int), 0.0, 0.1)


def test_estimates_are_reproducible():
    a = estimate(BD, 1.0, "xi", 200, seed=5)
    b = estimate(BD, 1.0, "xi", 200, seed=5)
    assert a == b
    c = estimate(BD, 1.0, "xi", 200, seed=6)
    assert a.mean != c.mean


def test_disjoint_seeds_agree():
    a = estimate(BD, 1.0, "xi", 2000, seed=1)
    b = estimate(BD, 1.0, "xi", 2000, seed=2)
    assert abs(two_sample_z(a, b)) < 4


def test_engines_agree():
    stats = ["xi", "K:1", "M:1:1", "fraction:1"]
    exact = estimate_many(BD, 1.5, stats, 2000, seed=3)
    batch = estimate_many(BD, 1.5, stats, 2000, seed=3, engine="batch")
    for name in ("xi", "K:1", "M:1:1", "fraction:1"):
        assert abs(two_sample_z(exact[name], batch[name])) < 4
    with pytest.raises(InvalidConfig):
        replicate_values(BD, 1.0, ["xi"], 10, 0, engine="gpu")


def test_replicate_values_share_paths():
    values, truncated = replicate_values(BD, 1.5, ["xi", "K:0", "K:1", "K:2", "K:3", "K:4", "K:5", "K:6",
                                                   "K:7", "K:8", "K:9"], 300, seed=4)
    assert truncated == 0
    total = sum(values[f"K:{i}"] for i in range(10))
    assert np.array_equal(total, values["xi"])


def test_kappa_empirical_examples():
    est = kappa_empirical(BD, 0, 8.0, 2000, seed=1)
    assert abs(est.atom_freq - 2 / 3) <= 3 * est.atom_se + 0.01
    assert est.conditional_mean == pytest.approx(3.0, rel=0.1)
    pb = kappa_empirical(MutationContext(PureBirth(1.0), 0.3), 1, 6.0, 500, seed=1)
    assert pb.atom_freq == 0.0
    many = kappa_empirical(BD, 1, 6.0, 200, seed=2, also_at=[4.0])
    assert sorted(many) == [4.0, 6.0]


def test_approaches():
    assert approaches(1.3, 1.4, 1.5)
    assert not approaches(1.4, 1.3, 1.5)
    assert approaches(1.6, 1.45, 1.5)


def test_core_suite_small():
    rows = run_suite("core", seed=42, replicates=400)
    assert [name for name, _ in rows][:2] == ["xi(1)", "extinct_by(1)"]
    assert all(r.passed for _, r in rows)
    with pytest.raises(InvalidConfig):
        run_suite("nope")
