"""Lundberg roots, exponential tilting of the increment law, ladder heights.

For an increment law with negative mean and cumulant generating function
``psi(t) = log E exp(t X)``, the Lundberg root ``theta_star`` is the positive
zero of ``psi`` and ``kappa`` is the minimiser of ``psi`` on ``(0, theta_star)``.
Reweighting the increment density by ``exp(theta_star x)`` gives a law with
positive mean ``psi'(theta_star)``, under which every level is crossed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .distributions import (INF, Deterministic, Distribution, ExpDifference, NegatedExponential,
                            Normal, mgf_boundary)
from .errors import InvalidDriftError, NoRootError, StepLimitError, UnsupportedError
from .estimates import EstimateResult, Moments, normal_interval, run_blocks

LADDER_STEP_CAP = 10**7


@dataclass(frozen=True)
class LundbergSolution:
    theta_star: float
    kappa: float
    psi_prime_at_theta_star: float
    psi_at_kappa: float
    bracket: tuple[float, float]


def _bracket_positive(increment: Distribution, start: float = 1e-3, cap: float = 1e8):
    """Smallest probed hi with psi(hi) > 0, expanding geometrically from ``start``."""
    last_finite = 0.0
    hi = start
    while hi <= cap:
        c = increment.cgf(hi)
        if c == INF:
            break
        if c > 0:
            return last_finite, hi
        last_finite = hi
        hi *= 2.0
    else:
        raise NoRootError(f"psi stays negative up to theta={cap:g} for {increment.to_literal()}")
    # MGF diverged: walk towards the divergence boundary from below
    edge = mgf_boundary(increment)
    if not math.isfinite(edge) or edge <= last_finite:
        raise NoRootError(f"no positive Lundberg root for {increment.to_literal()}")
    gap = edge - last_finite
    for k in range(1, 200):
        probe = edge - gap * 0.5**k
        if probe >= edge:
            break
        if increment.cgf(probe) > 0:
            return last_finite, probe
    raise NoRootError(f"psi stays negative up to the MGF boundary {edge:g} "
                      f"for {increment.to_literal()}")


def solve_theta_star(increment: Distribution) -> LundbergSolution:
    mu = increment.mean()
    if not mu < 0:
        raise InvalidDriftError(f"increment mean {mu:g} is not negative")
    lo, hi = _bracket_positive(increment)
    # psi is convex with psi'(0) = mu < 0 and psi(hi) > 0, so psi'(hi) > 0
    kappa = optimize.brentq(increment.cgf_prime, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                            maxiter=500)
    theta = optimize.brentq(increment.cgf, kappa, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                            maxiter=500)
    return LundbergSolution(theta, kappa, increment.cgf_prime(theta), increment.cgf(kappa), (lo, hi))


def climb_exponent(increment: Distribution) -> float:
    """Largest gamma with psi(gamma) <= 0 (``inf`` if psi never turns positive).

    Lundberg's inequality gives P(sup_n S_n > m) <= exp(-gamma m).
    """
    try:
        return solve_theta_star(increment).theta_star
    except NoRootError:
        return mgf_boundary(increment)


class TiltedIncrement:
    """The law exp(theta x) P(X in dx) / E exp(theta X).

    Exact families are sampled directly; other log-concave laws by rejection
    from a piecewise-exponential envelope built from tangent lines of the
    tilted log-density (tangents of a concave function lie above it, so the
    envelope is certified).
    """

    def __init__(self, base: Distribution, theta: float, force_rejection: bool = False):
        self.base = base
        self.theta = float(theta)
        self.force_rejection = force_rejection
        self.law = None if force_rejection else _exact_tilt(base, self.theta)
        self._envelope = None
        if self.law is None:
            if not getattr(base, "log_concave", False) or not hasattr(base, "dlogpdf"):
                raise UnsupportedError(f"no exact or certified tilted sampler for {base.to_literal()}")
            if base.mgf(self.theta) == INF:
                raise UnsupportedError(f"E exp({self.theta:g} X) is infinite for {base.to_literal()}")
            self._envelope = _Envelope(base, self.theta)

    @property
    def theta_star(self):
        return self.theta

    def mean(self) -> float:
        if self.law is not None:
            return self.law.mean()
        return self.base.cgf_prime(self.theta)

    def sample(self, rng: np.random.Generator, size=None):
        if self.law is not None:
            return self.law.sample(rng, size)
        n = 1 if size is None else int(np.prod(size))
        out = self._envelope.sample(rng, n)
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def __repr__(self):
        return f"TiltedIncrement({self.base.to_literal()}, theta={self.theta!r})"


def _exact_tilt(base, theta):
    if theta == 0.0:
        return base
    if isinstance(base, ExpDifference):
        if not -base.neg_rate < theta < base.pos_rate:
            raise UnsupportedError(f"tilt {theta:g} outside the MGF domain of {base.to_literal()}")
        return ExpDifference(base.pos_rate - theta, base.neg_rate + theta)
    if isinstance(base, Normal):
        return Normal(base.mean_ + theta * base.std**2, base.std)
    if isinstance(base, NegatedExponential):
        return NegatedExponential(base.rate + theta)
    if isinstance(base, Deterministic):
        return base
    return None


class _Envelope:
    def __init__(self, base, theta):
        self.base = base
        self.theta = theta
        lo, hi = base.support()
        centre = base.cgf_prime(theta)
        spread = math.sqrt(base.variance())
        for widen in range(12):
            offsets = np.array([-4.0, -2.0, -1.0, -0.3, 0.3, 1.0, 2.0, 4.0]) * spread * 2.0**widen
            xs = centre + offsets
            xs = xs[(xs > lo) & (xs < hi)]
            if xs.size < 2:
                xs = np.array([lo + 0.5 * spread, lo + spread]) if math.isfinite(lo) else xs
            slopes = theta + np.asarray(base.dlogpdf(xs), dtype=float)
            left_ok = math.isfinite(lo) or slopes[0] > 0
            right_ok = math.isfinite(hi) or slopes[-1] < 0
            if left_ok and right_ok:
                break
        else:
            raise UnsupportedError(f"could not build a rejection envelope for {base.to_literal()}")
        logf = theta * xs + np.asarray(base.logpdf(xs), dtype=float)
        # drop tangents that share a slope (piecewise-linear log-densities)
        keep = np.concatenate([[True], np.abs(np.diff(slopes)) > 1e-12 * (1 + np.abs(slopes[1:]))])
        xs, slopes, logf = xs[keep], slopes[keep], logf[keep]
        self.intercepts = logf - slopes * xs
        self.slopes = slopes
        z = (self.intercepts[1:] - self.intercepts[:-1]) / (slopes[:-1] - slopes[1:])
        self.edges = np.concatenate([[lo], z, [hi]])
        self.shift = float(np.max(logf))
        self.log_mass = np.array([self._segment_log_mass(k) for k in range(len(slopes))])
        w = np.exp(self.log_mass - self.log_mass.max())
        self.probs = w / w.sum()

    def _segment_log_mass(self, k):
        a, s = self.intercepts[k] - self.shift, self.slopes[k]
        z0, z1 = self.edges[k], self.edges[k + 1]
        if s == 0.0:
            return a + math.log(z1 - z0)
        if not math.isfinite(z0):
            return a + s * z1 - math.log(s)
        if not math.isfinite(z1):
            return a + s * z0 - math.log(-s)
        # log of e^{a}(e^{s z1} - e^{s z0})/s
        top = max(s * z0, s * z1)
        return a + top + math.log(abs(math.exp(s * z1 - top) - math.exp(s * z0 - top))) - math.log(abs(s))

    def _draw(self, rng, n):
        k = rng.choice(len(self.probs), size=n, p=self.probs)
        u = rng.random(n)
        s = self.slopes[k]
        z0, z1 = self.edges[k], self.edges[k + 1]
        x = np.empty(n)
        left = ~np.isfinite(z0)
        right = ~np.isfinite(z1)
        mid = ~(left | right)
        x[left] = z1[left] + np.log1p(-u[left]) / s[left]
        x[right] = z0[right] + np.log1p(-u[right]) / s[right]
        sm, z0m, wm = s[mid], z0[mid], (z1 - z0)[mid]
        flat = np.abs(sm * wm) < 1e-12
        xm = np.where(flat, z0m + u[mid] * wm,
                      z0m + np.log1p(u[mid] * np.expm1(np.where(flat, 1.0, sm) * wm)) / np.where(flat, 1.0, sm))
        x[mid] = xm
        env = self.intercepts[k] + s * x
        return x, env

    def sample(self, rng, n):
        out = np.empty(n)
        filled = 0
        while filled < n:
            need = n - filled
            x, env = self._draw(rng, max(need + need // 4, 16))
            target = self.theta * x + np.asarray(self.base.logpdf(x), dtype=float)
            accept = np.log(rng.random(x.size)) <= target - env
            got = x[accept][:need]
            out[filled:filled + got.size] = got
            filled += got.size
        return out


def tilt(increment: Distribution, sol: LundbergSolution | float, force_rejection: bool = False):
    theta = sol.theta_star if isinstance(sol, LundbergSolution) else float(sol)
    return TiltedIncrement(increment, theta, force_rejection=force_rejection)


def _ladder_block(tilted, cap):
    def run(rng, size):
        s = np.zeros(size)
        height = np.empty(size)
        active = np.arange(size)
        steps = 0
        while active.size:
            steps += 1
            if steps > cap:
                raise StepLimitError(f"ladder epoch exceeded {cap} steps; tilted drift is not positive")
            s[active] += tilted.sample(rng, active.size)
            done = s[active] > 0.0
            height[active[done]] = s[active[done]]
            active = active[~done]
        return height
    return run


def estimate_r_ladder(increment: Distribution, sol: LundbergSolution, reps: int, stream,
                      theta: float | None = None, workers: int = 1,
                      step_cap: int = LADDER_STEP_CAP) -> EstimateResult:
    """Ratio estimator of the Cramér–Lundberg constant from ladder heights.

    Simulates the first strict ascending ladder height H under the tilted law
    and returns ``E[(1 - exp(-theta H))/theta] / E[H]``. With ``theta`` left
    at ``theta_star`` this is the constant r in
    ``P(max_n S_n > x) ~ r exp(-theta_star x)``.
    """
    theta = sol.theta_star if theta is None else float(theta)
    tilted = tilt(increment, sol)
    if tilted.mean() <= 0:
        raise StepLimitError("tilted increment mean is not positive")
    heights = np.concatenate(run_blocks(_ladder_block(tilted, step_cap), reps, stream, workers))
    a = -np.expm1(-theta * heights) / theta
    ma, mh = Moments.of(a), Moments.of(heights)
    r = ma.mean / mh.mean
    # delta method for a ratio of means
    resid = Moments.of(a - r * heights)
    se = math.sqrt(resid.variance / resid.n) / mh.mean
    lo, hi = normal_interval(r, se)
    return EstimateResult(r, se, lo, hi, int(heights.size), stream.seed, "ladder",
                          extra={"mean_height": mh.mean, "theta": theta})


__all__ = ["LundbergSolution", "TiltedIncrement", "solve_theta_star", "tilt",
           "estimate_r_ladder", "climb_exponent"]
