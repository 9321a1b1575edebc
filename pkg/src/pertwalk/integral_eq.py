"""Discretised Neumann series for the tail function of the perturbed maximum.

``u(x) = P(M > x)`` solves ``u = b + T u`` with ``b(x) = P(xi > x)`` and

    (T g)(x) = P(xi <= x) * integral g(x - y) F_X(dy)

for independent perturbations. ``u`` is the sum of ``T^n b`` over n >= 0.
Functions live on a uniform grid and are extended by constants outside it.
Between grid points they are taken to be linear, and the integral against
``F_X`` of that piecewise-linear function is done exactly up to Gauss-Legendre
error on each cell, so applying ``T`` is a single discrete convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .distributions import Deterministic, Distribution, mgf_boundary
from .errors import NonConvergenceError, NoRootError, UnsupportedError
from .tilt import solve_theta_star

MASS_EPS = 1e-15
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("grid needs x_min < x_max")
        if self.n_points < 16:
            raise ValueError("grid needs at least 16 points")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)


@dataclass(frozen=True)
class TabulatedFn:
    grid: Grid
    values: np.ndarray
    below_min_value: float = 1.0
    above_max_value: float = 0.0
    terms: int | None = None
    last_norm: float | None = None

    def __post_init__(self):
        if np.shape(self.values) != (self.grid.n_points,):
            raise ValueError("one value per grid point required")

    def __call__(self, x):
        return np.interp(x, self.grid.points, self.values,
                         left=self.below_min_value, right=self.above_max_value)

    @classmethod
    def from_function(cls, fn, grid: Grid, below: float = 1.0, above: float = 0.0) -> "TabulatedFn":
        return cls(grid, np.asarray(fn(grid.points), dtype=float), below, above)


def _mass_range(dist: Distribution, eps: float = MASS_EPS):
    """Interval holding all but ``eps`` of the mass of ``dist``."""
    lo, hi = dist.support()
    centre = dist.mean()
    step = dist.scale_hint
    if not math.isfinite(lo):
        lo = centre - step
        while dist.cdf(lo) > eps:
            lo -= step
            step *= 1.5
    step = dist.scale_hint
    if not math.isfinite(hi):
        hi = centre + step
        while dist.tail(hi) > eps:
            hi += step
            step *= 1.5
    return lo, hi


@dataclass(frozen=True)
class Kernel:
    """Weights ``w[j - j_lo] = E phi((X - j h)/h)``, phi the unit hat function."""

    h: float
    j_lo: int
    weights: np.ndarray


def increment_kernel(increment: Distribution, h: float) -> Kernel:
    if isinstance(increment, Deterministic):
        # exact shift of the piecewise-linear interpolant
        pos = increment.value / h
        j0 = math.floor(pos)
        t = pos - j0
        return Kernel(h, j0, np.array([1.0 - t, t]))
    lo, hi = _mass_range(increment)
    j_lo = math.floor(lo / h)
    j_hi = math.ceil(hi / h)
    cells = np.arange(j_lo, j_hi)
    # Gauss-Legendre nodes on each cell [j h, (j + 1) h]
    t = 0.5 * (_GL_NODES + 1.0)
    y = (cells[:, None] + t[None, :]) * h
    f = np.asarray(increment.pdf(y), dtype=float) * (0.5 * h) * _GL_WEIGHTS[None, :]
    w = np.zeros(j_hi - j_lo + 1)
    w[:-1] += (f * (1.0 - t)).sum(axis=1)
    w[1:] += (f * t).sum(axis=1)
    return Kernel(h, j_lo, w)


def _convolve(g: TabulatedFn, kernel: Kernel) -> np.ndarray:
    """integral g(x_i - y) F_X(dy) at every grid point."""
    n = g.grid.n_points
    j_lo = kernel.j_lo
    j_hi = j_lo + kernel.weights.size - 1
    k_lo = min(0, -j_hi)
    k_hi = max(n - 1, n - 1 - j_lo)
    gpad = np.concatenate([np.full(-k_lo, g.below_min_value), g.values,
                           np.full(k_hi - (n - 1), g.above_max_value)])
    c = signal.fftconvolve(gpad, kernel.weights) if kernel.weights.size > 64 else np.convolve(gpad, kernel.weights)
    start = -k_lo - j_lo
    return c[start:start + n]


def _check_model(model):
    if not model.independent:
        raise UnsupportedError("the integral equation solver handles independent perturbations only")


def apply_T(g: TabulatedFn, model, grid: Grid | None = None, kernel: Kernel | None = None) -> TabulatedFn:
    _check_model(model)
    grid = g.grid if grid is None else grid
    if grid != g.grid:
        raise ValueError("g must be tabulated on the given grid")
    kernel = increment_kernel(model.increment, grid.h) if kernel is None else kernel
    factor = np.asarray(model.perturbation.cdf(grid.points), dtype=float)
    vals = np.clip(factor * _convolve(g, kernel), 0.0, 1.0)
    below = float(vals[0])
    return TabulatedFn(grid, vals, below, 0.0)


def perturbation_tail(model, grid: Grid) -> TabulatedFn:
    """b(x) = P(xi > x) on the grid."""
    return TabulatedFn(grid, np.asarray(model.perturbation.tail(grid.points), dtype=float), 1.0, 0.0)


def neumann_terms(model, grid: Grid, count: int):
    """The first ``count`` terms ``T^n b`` (n = 0 .. count-1)."""
    kernel = increment_kernel(model.increment, grid.h)
    term = perturbation_tail(model, grid)
    out = [term]
    for _ in range(count - 1):
        term = apply_T(term, model, grid, kernel)
        out.append(term)
    return out


def solve_u(model, grid: Grid, tol: float = 1e-6, max_terms: int = 10_000) -> TabulatedFn:
    """Partial sums of the Neumann series, stopped once a term's sup norm is <= tol."""
    _check_model(model)
    if not tol > 0:
        raise ValueError("tol must be positive")
    kernel = increment_kernel(model.increment, grid.h)
    term = perturbation_tail(model, grid)
    total = term.values.copy()
    norm = float(np.max(np.abs(term.values)))
    n = 0
    while norm > tol:
        if n + 1 >= max_terms:
            raise NonConvergenceError(f"{max_terms} terms used, last term norm {norm:.3g} > tol {tol:g}")
        term = apply_T(term, model, grid, kernel)
        n += 1
        total += term.values
        norm = float(np.max(term.values))
    return TabulatedFn(grid, np.clip(total, 0.0, 1.0), 1.0, 0.0, terms=n, last_norm=norm)


def residual(u: TabulatedFn, model) -> float:
    """sup over interior grid points of |u - b - T u|."""
    b = perturbation_tail(model, u.grid)
    tu = apply_T(u, model)
    diff = np.abs(u.values - b.values - tu.values)
    return float(diff[1:-1].max())


def default_grid(model, x: float, n_points: int = 4001) -> Grid:
    """Grid from below the perturbation's support to well past ``x``."""
    xi = model.perturbation
    mu = abs(model.drift)
    lo, _ = xi.support()
    if not math.isfinite(lo):
        lo, _ = _mass_range(xi, 1e-12)
    x_min = min(lo, x) - 5.0 / mu
    try:
        gamma = solve_theta_star(model.increment).theta_star
    except NoRootError:
        gamma = math.inf
    gamma = min(gamma, mgf_boundary(xi))
    if gamma == math.inf:
        x_max = x + 10.0 / mu
    elif gamma > 0:
        x_max = x + 10.0 / gamma
    else:
        # heavy tail: the mean residual life R(x)/P(xi > x) sets the scale
        t = float(xi.tail(max(x, 0.0)))
        scale = float(xi.integrated_tail(max(x, 0.0))) / t if t > 0 else 0.0
        x_max = x + 10.0 * max(scale, 1.0 / mu)
    return Grid(x_min, max(x_max, x_min + 1.0), n_points)


__all__ = ["Grid", "TabulatedFn", "Kernel", "increment_kernel", "apply_T", "perturbation_tail",
           "neumann_terms", "solve_u", "residual", "default_grid"]
