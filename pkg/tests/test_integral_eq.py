import math

import numpy as np
import pytest

from pertwalk.analytic import exact_tail
from pertwalk.distributions import Deterministic, ExpDifference, Exponential, NegatedExponential, Normal
from pertwalk.errors import NonConvergenceError, UnsupportedError
from pertwalk.integral_eq import (Grid, TabulatedFn, apply_T, default_grid, neumann_terms, perturbation_tail,
                                  residual, solve_u)
from pertwalk.streams import RandomStream
from pertwalk.walk_sim import WalkModel, conditional_tail

P4 = WalkModel(NegatedExponential(1.0), Exponential(1.0))
GRID = Grid(-5.0, 10.0, 4001)


@pytest.fixture(scope="module")
def u_p4():
    return solve_u(P4, GRID, 1e-6)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(1.0, 1.0, 100)
    with pytest.raises(ValueError):
        Grid(0.0, 1.0, 15)
    g = Grid(0.0, 1.0, 101)
    assert g.h == pytest.approx(0.01)
    assert g.points[-1] == 1.0


def test_apply_T_examples():
    zero = TabulatedFn(GRID, np.zeros(GRID.n_points), 0.0, 0.0)
    assert np.all(apply_T(zero, P4).values == 0.0)
    one = TabulatedFn(GRID, np.ones(GRID.n_points), 1.0, 1.0)
    t1 = apply_T(one, P4)
    assert t1(1.0) == pytest.approx(1.0 - math.exp(-1.0), abs=1e-10)
    # below the perturbation's support the factor P(xi <= x) vanishes
    assert np.all(t1.values[GRID.points < 0] == 0.0)


def test_apply_T_matches_direct_quadrature():
    from scipy import integrate
    m = WalkModel(Normal(-1.0, 0.7), Exponential(2.0))
    g = TabulatedFn(GRID, np.exp(-0.3 * np.maximum(GRID.points, 0.0)) * (GRID.points > -2), 0.0, 0.0)
    tg = apply_T(g, m)
    for x in (0.5, 2.0, 6.0):
        inner, _ = integrate.quad(lambda y: g(x - y) * m.increment.pdf(y), -12, 10, limit=400,
                                  points=[x + 2.0])
        assert tg(x) == pytest.approx(m.perturbation.cdf(x) * inner, abs=2e-5)


def test_deterministic_increment_is_an_exact_shift():
    m = WalkModel(Deterministic(-0.5), Exponential(1.0))
    g = TabulatedFn(GRID, np.linspace(1.0, 0.0, GRID.n_points), 1.0, 0.0)
    tg = apply_T(g, m)
    x = GRID.points[1000:1010]
    assert np.allclose(tg.values[1000:1010], m.perturbation.cdf(x) * g(x + 0.5), atol=1e-14)


def test_solve_u_matches_closed_form(u_p4):
    exact = exact_tail(P4, GRID.points)
    assert np.max(np.abs(u_p4.values - exact)) <= 1e-3
    assert u_p4.terms >= 1
    assert u_p4.last_norm <= 1e-6


def test_solve_u_below_support(u_p4):
    assert np.all(u_p4.values[GRID.points < 0] == pytest.approx(1.0, abs=1e-12))


def test_solve_u_unperturbed():
    m = WalkModel(ExpDifference(2.0, 1.0), Deterministic(0.0))
    u = solve_u(m, default_grid(m, 5.0), 1e-7)
    assert abs(u(5.0) - 0.5 * math.exp(-5.0)) <= 2e-3
    assert u(5.0) == pytest.approx(0.5 * math.exp(-5.0), rel=0.02)


def test_residuals(u_p4):
    assert residual(u_p4, P4) <= 1e-4
    zero = TabulatedFn(GRID, np.zeros(GRID.n_points), 0.0, 0.0)
    b = perturbation_tail(P4, GRID)
    assert residual(zero, P4) == pytest.approx(b.values[1:-1].max())
    wide = Grid(-5.0, 30.0, 7001)
    exact = TabulatedFn.from_function(lambda x: exact_tail(P4, x), wide)
    # trapezoid-type error h^2 max|u''| / 8 with h = 5e-3 and |u''| <= 1, times 5
    assert residual(exact, P4) <= 5 * wide.h**2 / 8


def test_output_is_a_tail_function(u_p4):
    v = u_p4.values
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(np.diff(v) <= 1e-15)


def test_neumann_partial_sums_increase():
    terms = neumann_terms(P4, Grid(-5.0, 10.0, 801), 12)
    partial = np.cumsum([t.values for t in terms], axis=0)
    assert np.all(np.diff(partial, axis=0) >= 0)
    assert all(np.all(t.values >= 0) for t in terms)


def test_grid_refinement():
    errs = []
    for n in (201, 401, 801):
        g = Grid(-5.0, 10.0, n)
        u = solve_u(P4, g, 1e-9)
        errs.append(u)
    probe = np.linspace(-4.0, 9.0, 53)
    d1 = np.max(np.abs(errs[0](probe) - errs[1](probe)))
    d2 = np.max(np.abs(errs[1](probe) - errs[2](probe)))
    assert d2 <= 4 * d1


def test_non_convergence():
    with pytest.raises(NonConvergenceError):
        solve_u(P4, GRID, 1e-12, max_terms=3)


def test_correlated_unsupported():
    m = WalkModel.correlated(2.0, 0.5)
    g = Grid(-5.0, 10.0, 101)
    with pytest.raises(UnsupportedError):
        solve_u(m, g)
    with pytest.raises(UnsupportedError):
        apply_T(TabulatedFn(g, np.zeros(101)), m)


def test_agrees_with_conditional_monte_carlo(u_p4):
    for i, x in enumerate((0.5, math.log(2.0), 1.0, 2.0, 3.0)):
        r = conditional_tail(P4, x, 20_000, stream=RandomStream(50).substream(i))
        assert abs(u_p4(x) - r.estimate) <= 4 * r.std_error


def test_default_grid():
    g = default_grid(P4, 10.0)
    assert g.x_min == pytest.approx(-5.0)
    assert g.x_max == pytest.approx(20.0)
    m = WalkModel(ExpDifference(2.0, 1.0), Exponential(3.0))
    g = default_grid(m, 8.0)
    assert g.x_min == pytest.approx(-10.0)
    assert g.x_max == pytest.approx(18.0)
