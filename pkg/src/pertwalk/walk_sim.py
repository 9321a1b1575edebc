"""Path-level Monte Carlo for the maximum of a perturbed random walk.

The target throughout is ``P(M > x)`` with ``M = max_k (S_k + xi_k)``,
``S_0 = 0`` and ``S_n = X_1 + ... + X_n``. Three estimators are provided:

* ``crude_tail`` -- indicator of ``M_horizon > x`` (biased low by the finite horizon);
* ``is_tail`` -- importance sampling under the exponentially tilted increment
  law, stopped at the first passage ``T(x)`` of ``S_n + xi_n`` above ``x``;
* ``conditional_tail`` -- simulates the unperturbed walk only and averages
  ``1 - prod_j P(xi <= x - S_j)``.

Replications run in blocks (see :mod:`pertwalk.estimates`), each on its own
substream, so the output depends only on the seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .distributions import INF, Deterministic, Distribution, ExpDifference, Exponential, mgf_boundary
from .errors import (ApplicabilityError, ApplicabilityWarning, DivergenceError, InvalidDriftError,
                     StepLimitError, UnsupportedError)
from .estimates import (EstimateResult, Moments, result_from_moments,
                        run_blocks)
from .streams import as_stream
from .tilt import LundbergSolution, climb_exponent, tilt

STEP_CAP = 10**7
HORIZON_FLOOR = 10**4
HORIZON_FACTOR = 50.0


@dataclass(frozen=True)
class Independent:
    def to_literal(self):
        return "independent"


@dataclass(frozen=True)
class CorrelatedExample:
    """X_i = R_i - Rt_i and xi_i = R_i (i >= 1), R ~ Exp(lambda1), Rt ~ Exp(lambda2).

    xi_0 is an independent Exp(lambda1) draw.
    """

    lambda1: float
    lambda2: float

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("correlated rates must be positive")
        if not self.lambda2 < self.lambda1:
            raise InvalidDriftError("correlated example needs lambda2 < lambda1 for negative drift")

    def to_literal(self):
        return f"correlated({self.lambda1!r}, {self.lambda2!r})"


@dataclass(frozen=True)
class WalkModel:
    increment: Distribution
    perturbation: Distribution
    dependence: Independent | CorrelatedExample = field(default_factory=Independent)

    def __post_init__(self):
        mu = self.increment.mean()
        if not mu < 0:
            raise InvalidDriftError(f"increment mean {mu:g} must be negative")
        try:
            pos = self.perturbation.positive_part_mean()
        except DivergenceError as exc:
            raise DivergenceError(f"E xi^+ is infinite: {exc}") from None
        if not math.isfinite(pos):
            raise DivergenceError("E xi^+ is infinite")
        if isinstance(self.dependence, CorrelatedExample):
            d = self.dependence
            if self.increment != ExpDifference(d.lambda1, d.lambda2) or self.perturbation != Exponential(d.lambda1):
                raise ValueError("correlated example fixes increment=expdifference(l1,l2), "
                                 "perturbation=exponential(l1)")

    @classmethod
    def correlated(cls, lambda1: float, lambda2: float) -> "WalkModel":
        dep = CorrelatedExample(lambda1, lambda2)
        return cls(ExpDifference(lambda1, lambda2), Exponential(lambda1), dep)

    @property
    def drift(self) -> float:
        return self.increment.mean()

    @property
    def independent(self) -> bool:
        return isinstance(self.dependence, Independent)

    def _require_independent(self, what):
        if not self.independent:
            raise UnsupportedError(f"{what} requires independent perturbations")


@dataclass(frozen=True)
class HittingRecord:
    """Per-replication first passage data at level x (arrays of equal length)."""

    t: np.ndarray
    overshoot: np.ndarray  # S_T - x
    weight: np.ndarray     # exp(-theta_star (S_T - x))
    perturbation: np.ndarray  # xi_T


# ---------------------------------------------------------------------------
# production model (make-to-order facility with supplier delays)

@dataclass(frozen=True)
class LindleyPath:
    waiting: np.ndarray      # tilde W_k, k = 0..n
    total: np.ndarray        # W_k = tilde W_k + eta_k
    z: np.ndarray            # Z_k, k = 1..n (index 0 unused, set to 0)
    eta: np.ndarray          # eta_k, k = 0..n


def lindley_recursion(interarrivals, services, delays) -> LindleyPath:
    """Waiting and total times from raw inputs.

    ``interarrivals[k]`` is ``A~_{k+1} - A~_k`` and ``services[k]`` is ``V_k``
    for ``k = 0..n-1``; ``delays[k]`` is ``eta_k`` for ``k = 0..n``.
    The recursion is ``W~_{k+1} = max(W~_k + A_k - A_{k+1} + V_k, 0)`` with
    ``A_k = A~_k + eta_k`` and ``A~_0 = 0``.
    """
    tau = np.asarray(interarrivals, dtype=float)
    v = np.asarray(services, dtype=float)
    eta = np.asarray(delays, dtype=float)
    n = tau.size
    if v.size != n or eta.size != n + 1:
        raise ValueError("need n interarrivals, n services and n + 1 delays")
    arrival_order = np.concatenate([[0.0], np.cumsum(tau)])
    a = arrival_order + eta
    w = np.empty(n + 1)
    w[0] = 0.0
    for k in range(n):
        w[k + 1] = max(w[k] + a[k] - a[k + 1] + v[k], 0.0)
    z = np.concatenate([[0.0], arrival_order[:-1] - arrival_order[1:] + v])
    return LindleyPath(w, w + eta, z, eta)


def max_representation(z, eta) -> np.ndarray:
    """``W~_n = max_{0<=k<=n} (sum_{j=k+1}^n Z_j + eta_k - eta_n)`` for every n.

    Uses the running maximum of ``eta_k - C_k`` with ``C`` the partial sums of Z.
    """
    z = np.asarray(z, dtype=float)
    eta = np.asarray(eta, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(z[1:])])
    best = np.maximum.accumulate(eta - c)
    return c + best - eta


def lindley_path(arrivals: Distribution, services: Distribution, delays: Distribution,
                 n: int, stream) -> LindleyPath:
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = stream.rng
    tau = np.asarray(arrivals.sample(rng, n), dtype=float)
    v = np.asarray(services.sample(rng, n), dtype=float)
    eta = np.asarray(delays.sample(rng, n + 1), dtype=float)
    return lindley_recursion(tau, v, eta)


def production_model(arrivals: Distribution, services: Distribution, delays: Distribution) -> WalkModel:
    """The walk whose maximum is the steady-state order-to-delivery time.

    Increments are ``V - tau``; only exponential inter-arrival and service
    times have a closed-form increment law in the catalogue.
    """
    if isinstance(arrivals, Exponential) and isinstance(services, Exponential):
        return WalkModel(ExpDifference(services.rate, arrivals.rate), delays)
    if isinstance(arrivals, Deterministic) and isinstance(services, Deterministic):
        return WalkModel(Deterministic(services.value - arrivals.value), delays)
    raise UnsupportedError("production model needs exponential (or deterministic) "
                           "inter-arrival and service laws")


# ---------------------------------------------------------------------------
# crude estimator

def default_horizon(model: WalkModel, x) -> int:
    xmax = float(np.max(np.atleast_1d(x)))
    return int(max(math.ceil(HORIZON_FACTOR * max(xmax, 0.0) / abs(model.drift)), HORIZON_FLOOR))


def _draw(model, rng, rows, steps, first):
    """Increments (rows x steps) and perturbations (rows x steps[+1]).

    On the first time block perturbations include xi_0.
    """
    extra = 1 if first else 0
    dep = model.dependence
    if isinstance(dep, CorrelatedExample):
        r = rng.exponential(1.0 / dep.lambda1, (rows, steps + extra))
        rt = rng.exponential(1.0 / dep.lambda2, (rows, steps))
        x = r[:, extra:] - rt
        return x, r
    x = model.increment.sample(rng, (rows, steps))
    xi = model.perturbation.sample(rng, (rows, steps + extra))
    return np.asarray(x, dtype=float), np.asarray(xi, dtype=float)


def simulate_maxima(model: WalkModel, horizon: int, reps: int, stream, workers: int = 1,
                    time_block: int = 500) -> np.ndarray:
    """M_horizon = max_{0<=k<=horizon} (S_k + xi_k) for each replication."""

    def run(rng, size):
        s = np.zeros(size)
        best = np.full(size, -INF)
        done = 0
        first = True
        while done < horizon:
            steps = min(time_block, horizon - done)
            x, xi = _draw(model, rng, size, steps, first)
            path = np.cumsum(x, axis=1)
            path += s[:, None]
            if first:
                best = np.maximum(best, xi[:, 0])
                xi = xi[:, 1:]
                first = False
            path += xi
            np.maximum(best, path.max(axis=1), out=best)
            s += x.sum(axis=1)
            done += steps
        return best

    return np.concatenate(run_blocks(run, reps, stream, workers))


def crude_tail(model: WalkModel, x, horizon: int | None = None, reps: int = 10**5, stream=None,
               workers: int = 1):
    """Indicator estimate of P(M_horizon > x), a lower-biased estimate of P(M > x).

    ``x`` may be a scalar or a sequence; all levels share the same paths.
    """
    stream = as_stream(stream)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    need = HORIZON_FACTOR * max(float(xs.max()), 0.0) / abs(model.drift)
    if horizon is None:
        horizon = default_horizon(model, xs)
    elif horizon < need:
        raise ValueError(f"horizon {horizon} too small: need at least {math.ceil(need)} "
                         f"(= {HORIZON_FACTOR:g} x / |mean increment|)")
    maxima = simulate_maxima(model, int(horizon), reps, stream, workers)
    out = []
    for level in xs:
        hits = (maxima > level).astype(float)
        out.append(result_from_moments(Moments.of(hits), stream.seed, "crude", indicator=True,
                                       biased_low=True, extra={"horizon": int(horizon), "x": float(level)}))
    return out if np.ndim(x) else out[0]


# ---------------------------------------------------------------------------
# importance sampling under the tilted increment law

def _hitting_block(model, tilted, x, cap):
    xi_law = model.perturbation

    def run(rng, size):
        s = np.zeros(size)
        t = np.zeros(size, dtype=np.int64)
        s_hit = np.empty(size)
        xi_hit = np.empty(size)
        xi = np.asarray(xi_law.sample(rng, size), dtype=float)
        hit = xi > x
        s_hit[hit] = 0.0
        xi_hit[hit] = xi[hit]
        active = np.flatnonzero(~hit)
        steps = 0
        while active.size:
            steps += 1
            if steps > cap:
                raise StepLimitError(f"T(x) not reached within {cap} steps; check the tilt")
            s[active] += tilted.sample(rng, active.size)
            xi = np.asarray(xi_law.sample(rng, active.size), dtype=float)
            now = s[active] + xi > x
            idx = active[now]
            t[idx] = steps
            s_hit[idx] = s[idx]
            xi_hit[idx] = xi[now]
            active = active[~now]
        return t, s_hit, xi_hit

    return run


def _is_setup(model, sol):
    model._require_independent("importance sampling")
    mgf = model.perturbation.mgf(sol.theta_star)
    if mgf == INF:
        warnings.warn("E exp(theta_star xi) is infinite: the importance sampling estimator "
                      "has infinite variance", ApplicabilityWarning, stacklevel=3)
    tilted = tilt(model.increment, sol)
    if not tilted.mean() > 0:
        raise StepLimitError("tilted increment has non-positive mean")
    return tilted


def is_hitting(model: WalkModel, sol: LundbergSolution, x: float, reps: int, stream,
               workers: int = 1, step_cap: int = STEP_CAP) -> HittingRecord:
    tilted = _is_setup(model, sol)
    parts = run_blocks(_hitting_block(model, tilted, float(x), step_cap), reps, stream, workers)
    t = np.concatenate([p[0] for p in parts])
    s_hit = np.concatenate([p[1] for p in parts])
    xi_hit = np.concatenate([p[2] for p in parts])
    over = s_hit - float(x)
    return HittingRecord(t, over, np.exp(-sol.theta_star * over), xi_hit)


def is_tail(model: WalkModel, sol: LundbergSolution, x: float, reps: int = 10**5, stream=None,
            workers: int = 1, step_cap: int = STEP_CAP) -> EstimateResult:
    """Unbiased estimate of P(M > x) from exp(theta* x) P(M > x) = E* exp(-theta*(S_T - x))."""
    stream = as_stream(stream)
    rec = is_hitting(model, sol, x, reps, stream, workers, step_cap)
    m = Moments.of(rec.weight)
    scale = math.exp(-sol.theta_star * float(x))
    res = result_from_moments(m, stream.seed, "is",
                              extra={"x": float(x), "weight_mean": m.mean, "mean_T": float(rec.t.mean()),
                                     "max_weight": float(rec.weight.max())})
    return res.scaled(scale)


# ---------------------------------------------------------------------------
# conditional Monte Carlo

@dataclass(frozen=True)
class TruncationRule:
    """When to stop summing log P(xi <= x - S_j) along a path.

    kind ``bounded``: xi <= top; stop once x - S_n >= top + margin, where
        ``margin = log(1/eps)/gamma`` bounds (via Lundberg's inequality) the
        chance that the walk climbs back by eps.
    kind ``light``: P(xi > z) <= c exp(-nu z) with E exp(nu X) = g < 1, so the
        expected remainder is at most ``c exp(-nu y) g/(1-g)``; stop once that
        is <= eps times the running tail sum.
    kind ``heavy``: xi has no exponential moment; the remainder is replaced by
        its mean-drift value ``R(y)/|mu| - F(y)/2`` and summation stops once the
        error proxy ``F(y)(1 + var X/mu^2)`` is <= eps times the running sum.
    """

    kind: str
    eps: float
    margin: float
    c: float = 0.0
    nu: float = 0.0
    g: float = 0.0
    top: float = INF

    def remainder_bound(self, y):
        if self.kind == "light":
            return self.c * np.exp(-self.nu * y) * self.g / (1.0 - self.g)
        raise UnsupportedError(self.kind)


def truncation_rule(model: WalkModel, eps: float) -> TruncationRule:
    xi, inc = model.perturbation, model.increment
    gamma = climb_exponent(inc)
    if gamma == 0.0:
        raise ApplicabilityError("increment has no exponential moment; truncation cannot be certified")
    margin = 0.0 if gamma == INF else math.log(1.0 / eps) / gamma
    top = xi.support()[1]
    if math.isfinite(top):
        return TruncationRule("bounded", eps, margin, top=top)
    edge = mgf_boundary(xi)
    if edge == 0.0:
        try:
            xi.integrated_tail(0.0)
        except DivergenceError:
            raise ApplicabilityError("perturbation has infinite integrated tail") from None
        return TruncationRule("heavy", eps, margin)
    if isinstance(xi, (Exponential, ExpDifference)):
        nu = xi.rate if isinstance(xi, Exponential) else xi.pos_rate
        g = inc.mgf(nu)
        if g < 1.0:
            return TruncationRule("light", eps, 0.0, c=1.0, nu=nu, g=g)
    # Chernoff envelope P(xi > z) <= E exp(nu xi) exp(-nu z)
    nu = 0.5 * min(edge, gamma, 50.0 / xi.scale_hint)
    return TruncationRule("light", eps, 0.0, c=xi.mgf(nu), nu=nu, g=inc.mgf(nu))


def _conditional_block(model, x, rule, cap):
    xi, inc = model.perturbation, model.increment
    mu = abs(inc.mean())
    spread = 1.0 + inc.variance() / mu**2

    def run(rng, size):
        s = np.zeros(size)
        acc_log = np.zeros(size)
        acc_tail = np.zeros(size)
        active = np.arange(size)
        steps = 0
        while True:
            y = x - s[active]
            t = np.asarray(xi.tail(y), dtype=float)
            with np.errstate(divide="ignore"):
                acc_log[active] += np.log1p(-t)
            acc_tail[active] += t
            dead = np.isneginf(acc_log[active])
            if rule.kind == "bounded":
                stop = y >= rule.top + rule.margin
            elif rule.kind == "light":
                stop = rule.remainder_bound(y) <= rule.eps * acc_tail[active]
            else:
                stop = (y >= rule.margin) & (xi.tail(y) * spread <= rule.eps * acc_tail[active])
                if np.any(stop):
                    ys = y[stop]
                    corr = np.maximum(np.asarray(xi.integrated_tail(ys)) / mu - 0.5 * np.asarray(xi.tail(ys)), 0.0)
                    acc_log[active[stop]] -= corr
            stop |= dead
            active = active[~stop]
            if not active.size:
                break
            steps += 1
            if steps > cap:
                raise StepLimitError(f"conditional estimator did not truncate within {cap} steps")
            s[active] += np.asarray(inc.sample(rng, active.size), dtype=float)
        return -np.expm1(acc_log)

    return run


def conditional_tail(model: WalkModel, x: float, reps: int = 10**5, eps: float = 1e-4, stream=None,
                     workers: int = 1, step_cap: int = STEP_CAP) -> EstimateResult:
    """Average of 1 - exp(sum_j log P(xi <= x - S_j)) over unperturbed paths."""
    stream = as_stream(stream)
    model._require_independent("the conditional estimator")
    if not 0.0 < eps <= 1e-3:
        raise ValueError("eps must lie in (0, 1e-3]")
    rule = truncation_rule(model, eps)
    values = np.concatenate(run_blocks(_conditional_block(model, float(x), rule, step_cap),
                                       reps, stream, workers))
    return result_from_moments(Moments.of(values), stream.seed, "cond",
                               extra={"x": float(x), "truncation": rule.kind})


# ---------------------------------------------------------------------------
# counterexample: correlated perturbations change the decay rate

@dataclass(frozen=True)
class DecayFit:
    rate: float
    rate_se: float
    xs: tuple
    estimates: tuple


def fit_decay(xs, estimates) -> DecayFit:
    """Weighted least-squares slope of log P(M > x) against x."""
    xs = np.asarray(xs, dtype=float)
    p = np.array([e.estimate for e in estimates])
    se = np.array([e.std_error for e in estimates])
    if np.any(p <= 0):
        raise ValueError("degenerate fit: some tail estimates are zero")
    y = np.log(p)
    w = (p / np.where(se > 0, se, p * 1e-6)) ** 2
    xbar = np.sum(w * xs) / w.sum()
    ybar = np.sum(w * y) / w.sum()
    sxx = np.sum(w * (xs - xbar) ** 2)
    slope = np.sum(w * (xs - xbar) * (y - ybar)) / sxx
    return DecayFit(-slope, math.sqrt(1.0 / sxx), tuple(xs), tuple(estimates))


def counterexample_decay(lambda1: float, xs, reps: int = 10**5, stream=None, independent: bool = False,
                         horizon: int | None = None, workers: int = 1) -> DecayFit:
    """Fitted exponential decay rate of P(M > x) on ``xs`` for the correlated
    example (lambda2 = lambda1/4, xi_i = R_i), or for independent perturbations
    with the same marginals when ``independent`` is set."""
    xs = np.asarray(xs, dtype=float)
    if xs.size < 4 or np.any(np.diff(xs) <= 0):
        raise ValueError("need at least 4 increasing x values")
    lambda2 = lambda1 / 4.0
    model = WalkModel.correlated(lambda1, lambda2)
    if independent:
        model = WalkModel(model.increment, model.perturbation)
    ests = crude_tail(model, xs, horizon=horizon, reps=reps, stream=stream, workers=workers)
    return fit_decay(xs, ests)


__all__ = [
    "Independent", "CorrelatedExample", "WalkModel", "HittingRecord", "EstimateResult",
    "LindleyPath", "lindley_recursion", "max_representation", "lindley_path", "production_model",
    "default_horizon", "simulate_maxima", "crude_tail", "is_hitting", "is_tail",
    "TruncationRule", "truncation_rule", "conditional_tail", "DecayFit", "fit_decay",
    "counterexample_decay",
]
