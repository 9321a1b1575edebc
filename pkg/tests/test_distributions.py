import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from pertwalk.distributions import (INF, Deterministic, ExpDifference, Exponential, NegatedExponential,
                                    Normal, Pareto, Weibull, exp_tail_fit, mgf_boundary, parse_distribution,
                                    sample)
from pertwalk.errors import ConfigError, DivergenceError, UndefinedHazardError, UnsupportedError
from pertwalk.streams import RandomStream

CONTINUOUS = [Exponential(2.0), NegatedExponential(1.5), ExpDifference(2.0, 1.0), Normal(-1.0, 1.0),
              Pareto(2.0, 1.0), Pareto(3.5, 2.0), Weibull(0.5, 1.0), Weibull(2.0, 1.5)]
FINITE_MGF = [Exponential(2.0), NegatedExponential(1.5), ExpDifference(2.0, 1.0), Normal(-1.0, 1.0),
              Weibull(2.0, 1.5), Deterministic(-0.3)]


def probe_points(d):
    lo, hi = d.support()
    m = d.mean() if not isinstance(d, Pareto) or d.shape > 1 else 1.0
    s = d.scale_hint
    xs = m + s * np.array([-1.5, -0.5, 0.0, 0.7, 2.0])
    return xs[(xs > lo) & (xs < hi)]


# -- examples ---------------------------------------------------------------

def test_sample_examples():
    assert sample(Deterministic(3.5), RandomStream(1)) == 3.5
    s = RandomStream(42)
    a = sample(Exponential(1.0), s)
    b = sample(Exponential(1.0), s.reset())
    assert a == b
    big = sample(Normal(-1.0, 1.0), RandomStream(3), 10**6)
    assert abs(big.mean() + 1.0) < 0.01


def test_tail_examples():
    assert Exponential(2.0).tail(0.0) == 1.0
    assert Pareto(2.0, 1.0).tail(1.0) == pytest.approx(0.25, abs=1e-15)
    d = ExpDifference(2.0, 1.0)
    oracle, _ = integrate.quad(d.pdf, 0.0, np.inf)
    assert oracle == pytest.approx(1 / 3, abs=1e-10)
    assert d.tail(0.0) == pytest.approx(1 / 3, abs=1e-14)


def test_mgf_examples():
    for d in CONTINUOUS + [Deterministic(2.0)]:
        assert d.mgf(0.0) == 1.0
        assert d.cgf(0.0) == 0.0
    assert Exponential(2.0).mgf(1.0) == pytest.approx(2.0)
    assert Exponential(2.0).mgf(2.0) == INF
    assert Pareto(2.0, 1.0).mgf(0.1) == INF
    assert Normal(-1.0, 1.0).cgf(2.0) == pytest.approx(0.0, abs=1e-15)
    assert Normal(-1.0, 1.0).cgf(1.0) == pytest.approx(-0.5)


@pytest.mark.parametrize("d", FINITE_MGF[:-1])
def test_mgf_matches_quadrature(d):
    theta = 0.4
    lo, hi = d.support()

    def quad(fn):
        f = lambda y: fn(y) * np.exp(theta * y + d.logpdf(y))
        pieces = [(lo, 0.0), (0.0, hi)] if lo < 0 < hi else [(lo, hi)]
        return sum(integrate.quad(f, a, b, epsrel=1e-12, limit=400)[0] for a, b in pieces)

    oracle = quad(lambda y: 1.0)
    assert d.mgf(theta) == pytest.approx(oracle, rel=1e-8)
    oracle_p = quad(lambda y: y)
    assert d.mgf_prime(theta) == pytest.approx(oracle_p, rel=1e-7, abs=1e-12)


def test_hazard_examples():
    for x in (0.0, 1.0, 7.5):
        assert Exponential(0.7).hazard(x) == pytest.approx(0.7)
    assert Pareto(2.0, 1.0).hazard(0.0) == pytest.approx(2.0)
    assert Pareto(2.0, 1.0).hazard(3.0) == pytest.approx(0.5)
    with pytest.raises(UndefinedHazardError):
        Deterministic(1.0).hazard(0.0)
    with pytest.raises(UndefinedHazardError):
        Exponential(1.0).hazard(2000.0)
    h = Weibull(0.5, 1.0).hazard(np.array([1.0, 4.0, 16.0]))
    assert np.all(np.diff(h) < 0)


def test_integrated_tail_examples():
    assert Exponential(1.0).integrated_tail(0.0) == pytest.approx(1.0)
    assert Pareto(2.0, 1.0).integrated_tail(0.0) == pytest.approx(1.0)
    assert Pareto(2.0, 1.0).integrated_tail(9.0) == pytest.approx(0.1)
    assert Deterministic(2.0).integrated_tail(2.0) == 0.0
    assert Deterministic(2.0).integrated_tail(5.0) == 0.0
    with pytest.raises(DivergenceError):
        Pareto(1.0, 1.0).integrated_tail(0.0)


@pytest.mark.parametrize("d", CONTINUOUS)
def test_integrated_tail_matches_quadrature(d):
    for x in probe_points(d):
        oracle, _ = integrate.quad(lambda y: d.tail(y), x, np.inf, epsrel=1e-12, limit=500)
        assert d.integrated_tail(x) == pytest.approx(oracle, rel=1e-8)


def test_mean_examples():
    assert ExpDifference(2.0, 1.0).mean() == pytest.approx(-0.5)
    assert Normal(-1.0, 1.0).mean() == -1.0
    assert Pareto(2.0, 1.0).mean() == pytest.approx(1.0)
    with pytest.raises(DivergenceError):
        Pareto(0.8, 1.0).mean()


# -- properties -------------------------------------------------------------

@pytest.mark.parametrize("d", CONTINUOUS + [Deterministic(0.5)])
def test_tail_is_a_survival_function(d):
    lo, hi = d.support()
    a = lo if math.isfinite(lo) else -60.0
    b = hi if math.isfinite(hi) else 1e6
    xs = np.linspace(a - 1, a + 50, 2000)
    if b > 1:
        xs = np.concatenate([xs, np.geomspace(1, b, 200)])
    xs.sort()
    t = d.tail(xs)
    assert np.all(np.diff(t) <= 0)
    assert np.all((t >= 0) & (t <= 1))
    assert d.tail(a - 1.0) == pytest.approx(1.0, abs=1e-12)
    assert d.tail(1e12) < 1e-10


@pytest.mark.parametrize("d", FINITE_MGF)
def test_cgf_derivative_at_zero_is_mean(d):
    h = 1e-6
    num = (d.cgf(h) - d.cgf(-h)) / (2 * h)
    assert num == pytest.approx(d.mean(), rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("d", CONTINUOUS)
def test_integrated_tail_derivative(d):
    for x in probe_points(d):
        h = 1e-5 * max(1.0, abs(x))
        num = (d.integrated_tail(x + h) - d.integrated_tail(x - h)) / (2 * h)
        assert num == pytest.approx(-d.tail(x), rel=1e-6, abs=1e-10)


@pytest.mark.parametrize("i,d", list(enumerate(CONTINUOUS)))
def test_empirical_tail_frequency(i, d):
    n = 10**6
    xs = sample(d, RandomStream(100 + i), n)
    for x in probe_points(d):
        p = d.tail(x)
        freq = np.mean(xs > x)
        se = math.sqrt(max(p * (1 - p), 1e-12) / n)
        assert abs(freq - p) <= 4 * se + 1e-12


def test_log_concave_families_have_consistent_score():
    for d in (ExpDifference(2.0, 1.0), Normal(-1.0, 2.0), Weibull(2.0, 1.0)):
        x = np.array([0.3, 0.9, 1.7])
        h = 1e-6
        num = (d.logpdf(x + h) - d.logpdf(x - h)) / (2 * h)
        assert np.allclose(d.dlogpdf(x), num, rtol=1e-5)


def test_mgf_boundary():
    assert mgf_boundary(Exponential(2.0)) == pytest.approx(2.0, rel=1e-9)
    assert mgf_boundary(ExpDifference(3.0, 1.0)) == pytest.approx(3.0, rel=1e-9)
    assert mgf_boundary(Normal(0.0, 1.0)) == INF
    assert mgf_boundary(Pareto(2.0, 1.0)) == 0.0


def test_exp_tail_fit():
    f = exp_tail_fit(Exponential(1.5))
    assert (f.d, f.nu) == (1.0, 1.5)
    d = ExpDifference(2.0, 1.0)
    f = exp_tail_fit(d)
    for x in (0.0, 1.0, 4.0):
        assert d.tail(x) == pytest.approx(f.d * math.exp(-f.nu * x), rel=1e-12)
    with pytest.raises(UnsupportedError):
        exp_tail_fit(Pareto(2.0, 1.0))


# -- literals ---------------------------------------------------------------

@pytest.mark.parametrize("text,expected", [
    ("exponential(1)", Exponential(1.0)),
    ("Exponential(rate=2.5)", Exponential(2.5)),
    ("family(pareto, shape=2, scale=1)", Pareto(2.0, 1.0)),
    ("EXPDIFFERENCE(2, neg_rate=1)", ExpDifference(2.0, 1.0)),
    ("normal(mean=-1, std=0.5)", Normal(-1.0, 0.5)),
    ("deterministic(0)", Deterministic(0.0)),
    ("weibull(0.5, 1)", Weibull(0.5, 1.0)),
    ("negatedexponential(1)", NegatedExponential(1.0)),
])
def test_parse_distribution(text, expected):
    assert parse_distribution(text) == expected


@pytest.mark.parametrize("text", ["exponential", "exponential()", "gamma(1)", "exponential(-1)",
                                  "pareto(2)", "normal(1, 2, 3)", "exponential(rate=x)",
                                  "exponential(1, rate=1)", "exponential(nan)"])
def test_parse_distribution_rejects(text):
    with pytest.raises(ConfigError):
        parse_distribution(text)


positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["exponential", "negatedexponential", "expdifference", "normal", "pareto",
                        "weibull", "deterministic"]), positive, positive)
def test_literal_round_trip(name, a, b):
    ctor = {"exponential": lambda: Exponential(a), "negatedexponential": lambda: NegatedExponential(a),
            "expdifference": lambda: ExpDifference(a, b), "normal": lambda: Normal(-a, b),
            "pareto": lambda: Pareto(a, b), "weibull": lambda: Weibull(a, b),
            "deterministic": lambda: Deterministic(-a)}[name]
    d = ctor()
    assert parse_distribution(d.to_literal()) == d


def test_parameters_must_be_positive():
    for bad in (lambda: Exponential(0.0), lambda: Pareto(2.0, -1.0), lambda: Normal(0.0, 0.0),
                lambda: Weibull(-1.0, 1.0), lambda: ExpDifference(1.0, 0.0)):
        with pytest.raises(ValueError):
            bad()
