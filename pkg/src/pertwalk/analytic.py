"""Closed forms, asymptotic approximations and bounds for P(M > x)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .distributions import (INF, Deterministic, Distribution, ExpDifference, ExpTailFit,
                            NegatedExponential)
from .errors import (ConditionViolatedError, DivergenceError, InapplicableModelError, NoPlateauError,
                     ApplicabilityWarning, UndefinedHazardError)
from .tilt import LundbergSolution

REL_SE_MAX = 0.05
PLATEAU_SE = 2.0
HAZARD_PROBES = tuple(2.0**k for k in range(11))


def exact_prop4(lam: float, xi: Distribution, x):
    """P(M <= x) when increments are minus Exponential(lam) and xi is independent.

    Equals ``P(xi <= x) exp(-lam R(x))`` with R the integrated tail of xi.
    """
    if not lam > 0:
        raise ValueError("rate must be positive")
    xa = np.asarray(x, dtype=float)
    cdf = np.asarray(xi.cdf(xa), dtype=float)
    r = np.asarray(xi.integrated_tail(xa), dtype=float)
    if not np.all(np.isfinite(r[cdf > 0])):
        raise DivergenceError("integrated tail of the perturbation is infinite")
    with np.errstate(invalid="ignore"):
        out = np.where(cdf > 0, cdf * np.exp(-lam * r), 0.0)
    return float(out) if np.ndim(x) == 0 else out


def exact_tail(model, x):
    """P(M > x) for a model whose increments are NegatedExponential."""
    if not isinstance(model.increment, NegatedExponential):
        raise InapplicableModelError(f"closed form needs negatedexponential increments, "
                                     f"got {model.increment.to_literal()}")
    if not model.independent:
        raise InapplicableModelError("closed form needs independent perturbations")
    cdf = exact_prop4(model.increment.rate, model.perturbation, x)
    return 1.0 - cdf


@dataclass(frozen=True)
class AsymptoteReport:
    regime: str  # "CramerLundberg", "ExpPerturbation" or "HeavyTail"
    rate_or_scale: float
    constant: float
    applicability: dict = field(default_factory=dict)
    value: float | None = None
    constant_se: float | None = None

    @property
    def applicable(self) -> bool:
        return all(v for k, v in self.applicability.items() if isinstance(v, bool))


# ---------------------------------------------------------------------------
# light tails: c exp(-theta* x)

def cl_constant(model, sol: LundbergSolution, xs, results) -> AsymptoteReport:
    """Estimate c in P(M > x) ~ c exp(-theta* x) from importance-sampling results.

    ``results[i]`` is the estimate at ``xs[i]`` (increasing). The plateau is the
    longest suffix of xs on which consecutive values of exp(theta* x) P(M > x)
    differ by less than two pooled standard errors; c is their
    inverse-variance weighted mean.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.size < 4 or len(results) != xs.size:
        raise ValueError("need at least 4 levels with one result each")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("levels must increase")
    rel = np.array([r.rel_error for r in results])
    if np.any(rel > REL_SE_MAX):
        raise ValueError(f"relative standard errors {np.round(rel, 4).tolist()} exceed {REL_SE_MAX:g}")
    th = sol.theta_star
    scale = np.exp(th * xs)
    stat = np.array([r.estimate for r in results]) * scale
    se = np.array([r.std_error for r in results]) * scale
    gaps = np.abs(np.diff(stat)) / np.hypot(se[:-1], se[1:])
    start = xs.size - 1
    while start > 0 and gaps[start - 1] < PLATEAU_SE:
        start -= 1
    if xs.size - start < 2:
        raise NoPlateauError(f"no two consecutive levels agree within {PLATEAU_SE:g} pooled standard "
                             f"errors; gaps {np.round(gaps, 2).tolist()}")
    w = 1.0 / se[start:] ** 2
    c = float(np.sum(w * stat[start:]) / np.sum(w))
    c_se = float(1.0 / math.sqrt(np.sum(w)))
    plateau = stat[start:]
    pooled = math.sqrt(float(np.mean(se[start:] ** 2)))
    mgf = model.perturbation.mgf(th)
    diag = {
        "mgf_xi_at_theta_star_finite": mgf < INF,
        "plateau_start_x": float(xs[start]),
        "plateau_points": int(xs.size - start),
        "plateau_spread_pooled_se": float((plateau.max() - plateau.min()) / pooled),
        "consecutive_gaps_se": [float(g) for g in gaps],
        "note": "estimated; only existence of c is guaranteed",
    }
    return AsymptoteReport("CramerLundberg", th, c, diag, constant_se=c_se)


# ---------------------------------------------------------------------------
# exponential-like perturbation tails: d (1 - E exp(nu X))^-1 exp(-nu x)

def exp_perturbation_constant(model, fit: ExpTailFit) -> float:
    m = model.increment.mgf(fit.nu)
    if not m < 1.0:
        raise ConditionViolatedError(f"E exp(nu X) = {m:.6g} >= 1 at nu = {fit.nu:g}")
    return fit.d / (1.0 - m)


def exp_perturbation_asymptote(model, fit: ExpTailFit, x):
    c = exp_perturbation_constant(model, fit)
    out = c * np.exp(-fit.nu * np.asarray(x, dtype=float))
    return float(out) if np.ndim(x) == 0 else out


def exp_perturbation_report(model, fit: ExpTailFit, x: float) -> AsymptoteReport:
    m = model.increment.mgf(fit.nu)
    c = exp_perturbation_constant(model, fit)
    diag = {"mgf_increment_at_nu": m, "mgf_below_one": m < 1.0, "tail_threshold": fit.threshold,
            "x_above_threshold": x >= fit.threshold}
    return AsymptoteReport("ExpPerturbation", fit.nu, c, diag, value=c * math.exp(-fit.nu * x))


# ---------------------------------------------------------------------------
# heavy tails: R(x) / |mu|

@dataclass(frozen=True)
class HazardGate:
    probes: tuple
    hazards: tuple
    decreasing: bool
    decay_ratio: float
    passed: bool


def hazard_gate(xi: Distribution) -> HazardGate:
    """Finite proxy for h(x) -> 0: strict decrease on {1, 2, ..., 1024} x scale
    and a final value under a tenth of the first."""
    probes = tuple(p * xi.scale_hint for p in HAZARD_PROBES)
    try:
        h = np.asarray(xi.hazard(np.array(probes)), dtype=float)
    except (UndefinedHazardError, ArithmeticError):
        return HazardGate(probes, (), False, math.nan, False)
    decreasing = bool(np.all(np.diff(h) < 0))
    ratio = float(h[-1] / h[0]) if h[0] > 0 else math.nan
    return HazardGate(probes, tuple(float(v) for v in h), decreasing, ratio,
                      decreasing and ratio < 0.1)


def mgf_near_zero_finite(increment: Distribution, eps: float = 1e-3) -> bool:
    """E exp(eps |X|) < inf, checked through both one-sided transforms."""
    return increment.mgf(eps) < INF and increment.mgf(-eps) < INF


def _heavy_checks(model, strict):
    gate = hazard_gate(model.perturbation)
    a3 = mgf_near_zero_finite(model.increment)
    problems = []
    if not gate.passed:
        problems.append("hazard rate of the perturbation is not decreasing to 0 on the probe grid")
    if not a3:
        problems.append("increment MGF is infinite near 0")
    if problems:
        msg = "; ".join(problems)
        if strict:
            raise ConditionViolatedError(msg)
        warnings.warn(msg, ApplicabilityWarning, stacklevel=4)
    return gate, a3


def heavy_tail_asymptote(model, x, strict: bool = False):
    """R(x)/|E X|; may exceed one for small x (it is an approximation, not a probability)."""
    _heavy_checks(model, strict)
    out = np.asarray(model.perturbation.integrated_tail(np.asarray(x, dtype=float))) / abs(model.drift)
    return float(out) if np.ndim(x) == 0 else out


def heavy_tail_report(model, x: float, strict: bool = False) -> AsymptoteReport:
    gate, a3 = _heavy_checks(model, strict)
    mu = abs(model.drift)
    value = float(model.perturbation.integrated_tail(x)) / mu
    diag = {"hazard_gate": gate.passed, "hazard_decreasing": gate.decreasing,
            "hazard_decay_ratio": gate.decay_ratio, "increment_mgf_near_zero": a3,
            "value_out_of_range": value > 1.0}
    return AsymptoteReport("HeavyTail", model.perturbation.scale_hint, 1.0 / mu, diag, value=value)


# ---------------------------------------------------------------------------
# bounds

def unperturbed_tail(increment: Distribution, sol: LundbergSolution | None, x, r: float | None = None):
    """P(max_n S_n > x) and whether the value is exact.

    Exact for ExpDifference, NegatedExponential and negative constants;
    otherwise the approximation ``min(1, r exp(-theta* x))`` is returned.
    """
    xa = np.asarray(x, dtype=float)
    if isinstance(increment, ExpDifference):
        th = increment.pos_rate - increment.neg_rate
        out = np.where(xa < 0, 1.0, increment.neg_rate / increment.pos_rate * np.exp(-th * np.maximum(xa, 0)))
        exact = True
    elif isinstance(increment, (NegatedExponential, Deterministic)):
        out = np.where(xa < 0, 1.0, 0.0)
        exact = True
    else:
        if sol is None or r is None:
            raise ValueError("theta_star and r are needed for the approximate unperturbed tail")
        out = np.where(xa < 0, 1.0, np.minimum(1.0, r * np.exp(-sol.theta_star * np.maximum(xa, 0))))
        exact = False
    return (float(out) if np.ndim(x) == 0 else out), exact


@dataclass(frozen=True)
class LowerBound:
    value: float
    constant: float
    approximate: bool


def lower_bound(model, sol: LundbergSolution, r: float, x: float) -> LowerBound:
    """E P(max_n S_n > x - xi) and its asymptotic constant r E exp(theta* xi)."""
    model._require_independent("the lower bound")
    xi = model.perturbation
    mgf = xi.mgf(sol.theta_star)
    if mgf == INF:
        raise DivergenceError("E exp(theta_star xi) is infinite")
    _, exact = unperturbed_tail(model.increment, sol, 0.0, r)
    value = xi.expect(lambda y: unperturbed_tail(model.increment, sol, x - y, r)[0], points=(x,))
    return LowerBound(float(value), r * mgf, not exact)


@dataclass(frozen=True)
class UpperBound:
    value: float
    refined: float | None
    first_term: float
    second_term: float


def upper_bound_prop6(model, sol: LundbergSolution, theta: float | None = None,
                      r: float | None = None) -> UpperBound:
    """E[xi exp(theta xi)]/psi'(theta*) + 1 + E exp(theta xi)/(1 - exp(psi(kappa))).

    With theta = theta*, nonnegative xi and the constant r supplied, the
    refined value replaces the second group by r.
    """
    theta = sol.theta_star if theta is None else float(theta)
    xi = model.perturbation
    m = xi.mgf(theta)
    if m == INF:
        raise DivergenceError(f"E exp({theta:g} xi) is infinite")
    mp = xi.mgf_prime(theta)
    if not math.isfinite(mp):
        raise DivergenceError(f"E xi exp({theta:g} xi) is infinite")
    first = mp / sol.psi_prime_at_theta_star
    second = 1.0 + m / (1.0 - math.exp(sol.psi_at_kappa))
    refined = None
    if r is not None and xi.support()[0] >= 0 and theta == sol.theta_star:
        refined = first + r
    return UpperBound(first + second, refined, first, second)


__all__ = ["exact_prop4", "exact_tail", "AsymptoteReport", "cl_constant", "exp_perturbation_constant",
           "exp_perturbation_asymptote", "exp_perturbation_report", "HazardGate", "hazard_gate",
           "mgf_near_zero_finite", "heavy_tail_asymptote", "heavy_tail_report", "unperturbed_tail",
           "LowerBound", "lower_bound", "UpperBound", "upper_bound_prop6"]
