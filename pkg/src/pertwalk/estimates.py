"""Monte Carlo result records and replication plumbing."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

Z95 = 1.959963984540054

# Replications are simulated in fixed-size blocks; block i always draws from
# substream i, so results do not depend on the worker count.
BLOCK = 10_000


@dataclass(frozen=True)
class Moments:
    """Count, mean and centred sum of squares; merged with Chan's update."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values) -> "Moments":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls()
        mu = float(v.mean())
        return cls(int(v.size), mu, float(((v - mu) ** 2).sum()))

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


def merge_all(parts) -> Moments:
    total = Moments()
    for p in parts:
        total = total.merge(p)
    return total


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    std_error: float
    ci_lo: float
    ci_hi: float
    reps: int
    seed: int
    method: str
    biased_low: bool = False
    sample_variance: float = float("nan")
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def rel_error(self) -> float:
        return self.std_error / abs(self.estimate) if self.estimate else math.inf

    def scaled(self, factor: float) -> "EstimateResult":
        """Same result for the quantity ``factor * estimate`` (factor > 0)."""
        return replace(self, estimate=self.estimate * factor, std_error=self.std_error * factor,
                       ci_lo=self.ci_lo * factor, ci_hi=self.ci_hi * factor,
                       sample_variance=self.sample_variance * factor * factor)


def normal_interval(mean: float, se: float) -> tuple[float, float]:
    return mean - Z95 * se, mean + Z95 * se


def wilson_interval(p: float, n: int) -> tuple[float, float]:
    z2 = Z95 * Z95
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = Z95 * math.sqrt(p * (1.0 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def result_from_moments(m: Moments, seed: int, method: str, *, indicator: bool = False,
                        biased_low: bool = False, extra=None) -> EstimateResult:
    se = math.sqrt(m.variance / m.n) if m.n > 0 else math.inf
    if indicator:
        lo, hi = wilson_interval(min(max(m.mean, 0.0), 1.0), m.n)
    else:
        lo, hi = normal_interval(m.mean, se)
    return EstimateResult(m.mean, se, lo, hi, m.n, seed, method, biased_low, m.variance, extra or {})


def blocks(reps: int, block: int = BLOCK):
    """(index, size) pairs covering ``reps`` replications."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    out = []
    i = 0
    start = 0
    while start < reps:
        size = min(block, reps - start)
        out.append((i, size))
        i += 1
        start += size
    return out


def run_blocks(fn, reps: int, stream, workers: int = 1, block: int = BLOCK):
    """Evaluate ``fn(rng, size)`` on each block's substream, in block order."""
    jobs = [(stream.substream(i).rng, size) for i, size in blocks(reps, block)]
    if workers <= 1 or len(jobs) == 1:
        return [fn(rng, size) for rng, size in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
