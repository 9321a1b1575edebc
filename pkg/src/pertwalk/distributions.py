"""Parametric one-dimensional laws used as increments and perturbations.

Every family exposes the same primitives: sampling, survival function
(``tail``), density, moment generating function and its derivative, cumulant
generating function, hazard rate, integrated tail ``R(x) = int_x^inf tail``
and the first two moments. All numeric methods accept scalars or arrays.

Families::

    Exponential(rate)                     X >= 0
    NegatedExponential(rate)              X = -E, E ~ Exponential(rate)
    ExpDifference(pos_rate, neg_rate)     X = V - U, V ~ Exp(pos_rate), U ~ Exp(neg_rate)
    Normal(mean, std)
    Pareto(shape, scale)                  tail (1 + x/scale)^(-shape) on x >= 0 (Lomax)
    Weibull(shape, scale)                 tail exp(-(x/scale)^shape) on x >= 0
    Deterministic(value)

An infinite moment generating function is reported as ``math.inf`` rather
than raised, so root finders can probe the divergence boundary.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from typing import ClassVar

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, DivergenceError, UndefinedHazardError, UnsupportedError

INF = math.inf


def _scalar_or_array(x, out):
    if np.ndim(x) == 0:
        return float(out)
    return out


class Distribution:
    """Common behaviour. Subclasses are frozen dataclasses holding the parameters."""

    name: ClassVar[str] = ""
    log_concave: ClassVar[bool] = False

    # -- to override -------------------------------------------------------
    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def _tail(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _pdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _mgf(self, theta: float) -> float:
        return self._mgf_quad(theta, derivative=False)

    def _mgf_prime(self, theta: float) -> float:
        return self._mgf_quad(theta, derivative=True)

    def mean(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        return (-INF, INF)

    @property
    def scale_hint(self) -> float:
        """Natural length scale, used to place probe grids."""
        return 1.0

    # -- public API ----------------------------------------------------------
    def tail(self, x):
        """P(X > x)."""
        xa = np.asarray(x, dtype=float)
        return _scalar_or_array(x, np.clip(self._tail(xa), 0.0, 1.0))

    def cdf(self, x):
        xa = np.asarray(x, dtype=float)
        return _scalar_or_array(x, 1.0 - np.clip(self._tail(xa), 0.0, 1.0))

    def pdf(self, x):
        xa = np.asarray(x, dtype=float)
        return _scalar_or_array(x, self._pdf(xa))

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def mgf(self, theta: float) -> float:
        """E exp(theta X), or ``inf`` when it diverges."""
        theta = float(theta)
        if theta == 0.0:
            return 1.0
        return float(self._mgf(theta))

    def mgf_prime(self, theta: float) -> float:
        """E X exp(theta X), the derivative of the MGF."""
        theta = float(theta)
        if theta == 0.0:
            return self.mean()
        return float(self._mgf_prime(theta))

    def cgf(self, theta: float) -> float:
        m = self.mgf(theta)
        if m == INF:
            return INF
        return math.log(m)

    def cgf_prime(self, theta: float) -> float:
        m = self.mgf(theta)
        if m == INF:
            return INF
        return self.mgf_prime(theta) / m

    def hazard(self, x):
        """Density over survival at ``x``."""
        xa = np.asarray(x, dtype=float)
        t = self._tail(xa)
        if np.any(t <= 0.0):
            raise UndefinedHazardError(f"{self.to_literal()}: tail vanishes, hazard undefined")
        return _scalar_or_array(x, self._pdf(xa) / t)

    def integrated_tail(self, x):
        """R(x) = int_x^inf P(X > y) dy."""
        xa = np.asarray(x, dtype=float)
        return _scalar_or_array(x, self._integrated_tail(xa))

    def _integrated_tail(self, x: np.ndarray) -> np.ndarray:
        hi = self.support()[1]
        out = np.empty_like(x, dtype=float)
        for i, xi in np.ndenumerate(x):
            if xi >= hi:
                out[i] = 0.0
                continue
            val, _ = integrate.quad(lambda y: float(self._tail(np.asarray(y))), xi, hi,
                                    epsabs=0.0, epsrel=1e-10, limit=400)
            out[i] = val
        return out

    def expect(self, fn, points=()) -> float:
        """E fn(X) by adaptive quadrature against the density.

        ``points`` are extra breakpoints where ``fn`` may jump.
        """
        lo, hi = self.support()
        pts = sorted({float(p) for p in (0.0, *points) if lo < p < hi})
        total = 0.0
        edges = [lo, *pts, hi]
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(lambda y: fn(y) * float(self._pdf(np.asarray(y))), a, b,
                                    epsabs=1e-300, epsrel=1e-11, limit=400)
            total += val
        return total

    def _mgf_quad(self, theta, derivative):
        # exp(theta y + log f(y)) stays finite where the density underflows
        lo, hi = self.support()
        pts = [lo, *([0.0] if lo < 0.0 < hi else []), hi]

        def f(y):
            v = math.exp(min(theta * y + float(self.logpdf(y)), 700.0))
            return y * v if derivative else v

        total = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            val, _ = integrate.quad(f, a, b, epsabs=1e-300, epsrel=1e-11, limit=400)
            total += val
        return total

    def positive_part_mean(self) -> float:
        """E max(X, 0) = R(0)."""
        return float(self.integrated_tail(0.0))

    def to_literal(self) -> str:
        args = ", ".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return f"{self.name}({args})"

    def __str__(self):
        return self.to_literal()


def _check_positive(**params):
    for k, v in params.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"parameter {k} must be positive and finite, got {v}")


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float
    name: ClassVar[str] = "exponential"
    log_concave: ClassVar[bool] = True

    def __post_init__(self):
        _check_positive(rate=self.rate)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def _tail(self, x):
        return np.where(x < 0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))

    def _pdf(self, x):
        return np.where(x < 0, 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)))

    def dlogpdf(self, x):
        return np.full_like(np.asarray(x, dtype=float), -self.rate)

    def _mgf(self, theta):
        return self.rate / (self.rate - theta) if theta < self.rate else INF

    def _mgf_prime(self, theta):
        return self.rate / (self.rate - theta) ** 2 if theta < self.rate else INF

    def _integrated_tail(self, x):
        return np.where(x < 0, -x + 1.0 / self.rate,
                        np.exp(-self.rate * np.maximum(x, 0.0)) / self.rate)

    def mean(self):
        return 1.0 / self.rate

    def variance(self):
        return 1.0 / self.rate**2

    def support(self):
        return (0.0, INF)

    @property
    def scale_hint(self):
        return 1.0 / self.rate


@dataclass(frozen=True)
class NegatedExponential(Distribution):
    rate: float
    name: ClassVar[str] = "negatedexponential"
    log_concave: ClassVar[bool] = True

    def __post_init__(self):
        _check_positive(rate=self.rate)

    def sample(self, rng, size=None):
        return -rng.exponential(1.0 / self.rate, size)

    def _tail(self, x):
        return np.where(x >= 0, 0.0, -np.expm1(self.rate * np.minimum(x, 0.0)))

    def _pdf(self, x):
        return np.where(x > 0, 0.0, self.rate * np.exp(self.rate * np.minimum(x, 0.0)))

    def dlogpdf(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.rate)

    def _mgf(self, theta):
        return self.rate / (self.rate + theta) if theta > -self.rate else INF

    def _mgf_prime(self, theta):
        return -self.rate / (self.rate + theta) ** 2 if theta > -self.rate else INF

    def _integrated_tail(self, x):
        xm = np.minimum(x, 0.0)
        return np.where(x >= 0, 0.0, -xm + np.expm1(self.rate * xm) / self.rate)

    def mean(self):
        return -1.0 / self.rate

    def variance(self):
        return 1.0 / self.rate**2

    def support(self):
        return (-INF, 0.0)

    @property
    def scale_hint(self):
        return 1.0 / self.rate


@dataclass(frozen=True)
class ExpDifference(Distribution):
    """X = V - U with V ~ Exponential(pos_rate) and U ~ Exponential(neg_rate)."""

    pos_rate: float
    neg_rate: float
    name: ClassVar[str] = "expdifference"
    log_concave: ClassVar[bool] = True

    def __post_init__(self):
        _check_positive(pos_rate=self.pos_rate, neg_rate=self.neg_rate)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.pos_rate, size) - rng.exponential(1.0 / self.neg_rate, size)

    @property
    def _w(self):
        # P(V > U)
        return self.neg_rate / (self.pos_rate + self.neg_rate)

    def _tail(self, x):
        a, b = self.pos_rate, self.neg_rate
        w = self._w
        return np.where(x >= 0,
                        w * np.exp(-a * np.maximum(x, 0.0)),
                        1.0 - (1.0 - w) * np.exp(b * np.minimum(x, 0.0)))

    def _pdf(self, x):
        a, b = self.pos_rate, self.neg_rate
        k = a * b / (a + b)
        return np.where(x >= 0, k * np.exp(-a * np.maximum(x, 0.0)), k * np.exp(b * np.minimum(x, 0.0)))

    def dlogpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, -self.pos_rate, self.neg_rate)

    def _mgf(self, theta):
        a, b = self.pos_rate, self.neg_rate
        if not (-b < theta < a):
            return INF
        return a / (a - theta) * b / (b + theta)

    def _mgf_prime(self, theta):
        a, b = self.pos_rate, self.neg_rate
        m = self._mgf(theta)
        if m == INF:
            return INF
        return m * (1.0 / (a - theta) - 1.0 / (b + theta))

    def _integrated_tail(self, x):
        a, b = self.pos_rate, self.neg_rate
        w = self._w
        r0 = w / a
        xm = np.minimum(x, 0.0)
        neg = r0 - xm + (1.0 - w) * np.expm1(b * xm) / b
        return np.where(x >= 0, r0 * np.exp(-a * np.maximum(x, 0.0)), neg)

    def mean(self):
        return 1.0 / self.pos_rate - 1.0 / self.neg_rate

    def variance(self):
        return 1.0 / self.pos_rate**2 + 1.0 / self.neg_rate**2

    @property
    def scale_hint(self):
        return max(1.0 / self.pos_rate, 1.0 / self.neg_rate)


@dataclass(frozen=True)
class Normal(Distribution):
    mean_: float
    std: float
    name: ClassVar[str] = "normal"
    log_concave: ClassVar[bool] = True

    def __post_init__(self):
        if not math.isfinite(self.mean_):
            raise ValueError("mean must be finite")
        _check_positive(std=self.std)

    def sample(self, rng, size=None):
        return rng.normal(self.mean_, self.std, size)

    def _z(self, x):
        return (x - self.mean_) / self.std

    def _tail(self, x):
        return special.ndtr(-self._z(x))

    def _pdf(self, x):
        z = self._z(x)
        return np.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi))

    def logpdf(self, x):
        z = self._z(np.asarray(x, dtype=float))
        out = -0.5 * z * z - math.log(self.std * math.sqrt(2.0 * math.pi))
        return _scalar_or_array(x, out)

    def dlogpdf(self, x):
        return -(np.asarray(x, dtype=float) - self.mean_) / self.std**2

    def hazard(self, x):
        xa = np.asarray(x, dtype=float)
        z = self._z(xa)
        logpdf = -0.5 * z * z - math.log(self.std * math.sqrt(2.0 * math.pi))
        return _scalar_or_array(x, np.exp(logpdf - special.log_ndtr(-z)))

    def _mgf(self, theta):
        e = self.mean_ * theta + 0.5 * self.std**2 * theta**2
        return math.exp(e) if e < 700 else INF

    def _mgf_prime(self, theta):
        m = self._mgf(theta)
        return INF if m == INF else (self.mean_ + self.std**2 * theta) * m

    def cgf(self, theta):
        return self.mean_ * theta + 0.5 * self.std**2 * theta**2

    def cgf_prime(self, theta):
        return self.mean_ + self.std**2 * theta

    def _integrated_tail(self, x):
        z = self._z(x)
        phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return self.std * (phi - z * special.ndtr(-z))

    def mean(self):
        return self.mean_

    def variance(self):
        return self.std**2

    @property
    def scale_hint(self):
        return self.std

    def to_literal(self):
        return f"normal(mean={self.mean_!r}, std={self.std!r})"


@dataclass(frozen=True)
class Pareto(Distribution):
    """Lomax law: P(X > x) = (1 + x/scale)^(-shape) for x >= 0."""

    shape: float
    scale: float
    name: ClassVar[str] = "pareto"

    def __post_init__(self):
        _check_positive(shape=self.shape, scale=self.scale)

    def sample(self, rng, size=None):
        return self.scale * rng.pareto(self.shape, size)

    def _tail(self, x):
        return np.where(x < 0, 1.0, (1.0 + np.maximum(x, 0.0) / self.scale) ** (-self.shape))

    def _pdf(self, x):
        xp = np.maximum(x, 0.0)
        return np.where(x < 0, 0.0, self.shape / self.scale * (1.0 + xp / self.scale) ** (-self.shape - 1.0))

    def hazard(self, x):
        xa = np.asarray(x, dtype=float)
        return _scalar_or_array(x, np.where(xa < 0, 0.0, self.shape / (self.scale + np.maximum(xa, 0.0))))

    def _mgf(self, theta):
        if theta > 0:
            return INF
        return self._mgf_quad(theta, derivative=False)

    def _mgf_prime(self, theta):
        if theta > 0:
            return INF
        return self._mgf_quad(theta, derivative=True)

    def _integrated_tail(self, x):
        a, s = self.shape, self.scale
        if a <= 1.0:
            raise DivergenceError(f"integrated tail of {self.to_literal()} is infinite (shape <= 1)")
        xp = np.maximum(x, 0.0)
        r = s / (a - 1.0) * (1.0 + xp / s) ** (1.0 - a)
        return np.where(x < 0, s / (a - 1.0) - x, r)

    def mean(self):
        if self.shape <= 1.0:
            raise DivergenceError(f"{self.to_literal()} has infinite mean")
        return self.scale / (self.shape - 1.0)

    def variance(self):
        a, s = self.shape, self.scale
        if a <= 2.0:
            return INF
        return s * s * a / ((a - 1.0) ** 2 * (a - 2.0))

    def support(self):
        return (0.0, INF)

    @property
    def scale_hint(self):
        return self.scale


@dataclass(frozen=True)
class Weibull(Distribution):
    shape: float
    scale: float
    name: ClassVar[str] = "weibull"

    def __post_init__(self):
        _check_positive(shape=self.shape, scale=self.scale)

    @property
    def log_concave(self):
        return self.shape >= 1.0

    def sample(self, rng, size=None):
        return self.scale * rng.weibull(self.shape, size)

    def _tail(self, x):
        return np.where(x < 0, 1.0, np.exp(-(np.maximum(x, 0.0) / self.scale) ** self.shape))

    def _pdf(self, x):
        k, s = self.shape, self.scale
        xp = np.maximum(x, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = k / s * (xp / s) ** (k - 1.0) * np.exp(-(xp / s) ** k)
        return np.where(x < 0, 0.0, d)

    def dlogpdf(self, x):
        k, s = self.shape, self.scale
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return (k - 1.0) / x - k / s * (x / s) ** (k - 1.0)

    def hazard(self, x):
        k, s = self.shape, self.scale
        xa = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            h = k / s * (np.maximum(xa, 0.0) / s) ** (k - 1.0)
        return _scalar_or_array(x, np.where(xa < 0, 0.0, h))

    def _mgf(self, theta):
        k, s = self.shape, self.scale
        if theta > 0:
            if k < 1.0:
                return INF
            if k == 1.0:
                return 1.0 / (1.0 - s * theta) if s * theta < 1.0 else INF
        return self._mgf_quad(theta, derivative=False)

    def _mgf_prime(self, theta):
        if self._mgf(theta) == INF:
            return INF
        return self._mgf_quad(theta, derivative=True)

    def _integrated_tail(self, x):
        k, s = self.shape, self.scale
        xp = np.maximum(x, 0.0)
        r = s / k * special.gamma(1.0 / k) * special.gammaincc(1.0 / k, (xp / s) ** k)
        return np.where(x < 0, s * special.gamma(1.0 + 1.0 / k) - x, r)

    def mean(self):
        return self.scale * special.gamma(1.0 + 1.0 / self.shape)

    def variance(self):
        k, s = self.shape, self.scale
        return s * s * (special.gamma(1.0 + 2.0 / k) - special.gamma(1.0 + 1.0 / k) ** 2)

    def support(self):
        return (0.0, INF)

    @property
    def scale_hint(self):
        return self.scale


@dataclass(frozen=True)
class Deterministic(Distribution):
    value: float
    name: ClassVar[str] = "deterministic"

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("value must be finite")

    def sample(self, rng, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    def _tail(self, x):
        return np.where(x < self.value, 1.0, 0.0)

    def _pdf(self, x):
        raise UnsupportedError("deterministic law has no density")

    def hazard(self, x):
        raise UndefinedHazardError("deterministic law has no hazard rate")

    def _mgf(self, theta):
        e = theta * self.value
        return math.exp(e) if e < 700 else INF

    def _mgf_prime(self, theta):
        m = self._mgf(theta)
        return INF if m == INF else self.value * m

    def cgf(self, theta):
        return float(theta) * self.value

    def cgf_prime(self, theta):
        return float(self.value)

    def _integrated_tail(self, x):
        return np.maximum(self.value - x, 0.0)

    def expect(self, fn, points=()):
        return float(fn(self.value))

    def mean(self):
        return float(self.value)

    def variance(self):
        return 0.0

    def support(self):
        return (float(self.value), float(self.value))


FAMILIES = {
    "exponential": Exponential,
    "negatedexponential": NegatedExponential,
    "expdifference": ExpDifference,
    "normal": Normal,
    "pareto": Pareto,
    "weibull": Weibull,
    "deterministic": Deterministic,
}

_ALIASES = {
    "exp": "exponential",
    "negexp": "negatedexponential",
    "negexponential": "negatedexponential",
    "expdiff": "expdifference",
    "gaussian": "normal",
    "lomax": "pareto",
    "constant": "deterministic",
    "const": "deterministic",
}

# public keyword names accepted in literals, in positional order
_PARAMS = {
    "exponential": ("rate",),
    "negatedexponential": ("rate",),
    "expdifference": ("pos_rate", "neg_rate"),
    "normal": ("mean", "std"),
    "pareto": ("shape", "scale"),
    "weibull": ("shape", "scale"),
    "deterministic": ("value",),
}

_LITERAL = re.compile(r"^\s*([A-Za-z_][A-Za-z_0-9]*)\s*\((.*)\)\s*$")


def split_literal(text: str) -> tuple[str, list[str]]:
    """``name(a, b=c)`` -> ("name", ["a", "b=c"]). Name is lower-cased."""
    m = _LITERAL.match(text)
    if not m:
        raise ConfigError(f"malformed literal {text!r}: expected name(arg, ...)")
    body = m.group(2).strip()
    args = [a.strip() for a in body.split(",")] if body else []
    if any(a == "" for a in args):
        raise ConfigError(f"malformed literal {text!r}: empty argument")
    return m.group(1).lower(), args


def _number(token: str, text: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ConfigError(f"malformed literal {text!r}: {token!r} is not a number") from None
    if not math.isfinite(v):
        raise ConfigError(f"malformed literal {text!r}: {token!r} is not finite")
    return v


def parse_distribution(text: str) -> Distribution:
    """Parse ``exponential(1)``, ``Pareto(shape=2, scale=1)`` or
    ``family(pareto, shape=2, scale=1)`` (case-insensitive)."""
    name, args = split_literal(text)
    if name == "family":
        if not args:
            raise ConfigError(f"malformed literal {text!r}: family() needs a name")
        name, args = args[0].lower(), args[1:]
    name = _ALIASES.get(name, name)
    if name not in FAMILIES:
        raise ConfigError(f"unknown distribution family {name!r} in {text!r}")
    keys = _PARAMS[name]
    values: dict[str, float] = {}
    positional = True
    for i, a in enumerate(args):
        if "=" in a:
            positional = False
            k, v = (s.strip() for s in a.split("=", 1))
            k = k.lower()
            if k not in keys:
                raise ConfigError(f"{name}: unknown parameter {k!r} in {text!r}")
            if k in values:
                raise ConfigError(f"{name}: parameter {k!r} given twice in {text!r}")
            values[k] = _number(v, text)
        else:
            if not positional:
                raise ConfigError(f"{name}: positional argument after keyword in {text!r}")
            if i >= len(keys):
                raise ConfigError(f"{name}: too many arguments in {text!r}")
            values[keys[i]] = _number(a, text)
    missing = [k for k in keys if k not in values]
    if missing:
        raise ConfigError(f"{name}: missing parameter(s) {', '.join(missing)} in {text!r}")
    ordered = [values[k] for k in keys]
    try:
        return FAMILIES[name](*ordered)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def sample(dist: Distribution, stream, size=None):
    """Draw from ``dist`` using the generator carried by ``stream``."""
    return dist.sample(stream.rng, size)


@dataclass(frozen=True)
class ExpTailFit:
    """Exact exponential right tail: P(X > x) = d exp(-nu x) for x >= threshold."""

    d: float
    nu: float
    threshold: float = 0.0

    def __post_init__(self):
        _check_positive(d=self.d, nu=self.nu)


def exp_tail_fit(dist: Distribution) -> ExpTailFit:
    if isinstance(dist, Exponential):
        return ExpTailFit(1.0, dist.rate, 0.0)
    if isinstance(dist, ExpDifference):
        return ExpTailFit(dist.neg_rate / (dist.pos_rate + dist.neg_rate), dist.pos_rate, 0.0)
    raise UnsupportedError(f"{dist.to_literal()} has no exact exponential tail")


def mgf_boundary(dist: Distribution, upper: float = 1e6) -> float:
    """sup{theta >= 0 : mgf(theta) < inf}, located by doubling then bisection."""
    if dist.cgf(upper) < INF:
        return INF
    lo, hi = 0.0, 1e-8
    while dist.cgf(hi) < INF:
        lo, hi = hi, hi * 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if dist.cgf(mid) < INF:
            lo = mid
        else:
            hi = mid
    return lo
