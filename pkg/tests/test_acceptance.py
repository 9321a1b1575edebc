"""Acceptance suite: one PASS/FAIL line per criterion, printed in the terminal summary."""
import io
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from pertwalk.analytic import cl_constant, exact_prop4, heavy_tail_asymptote, lower_bound, upper_bound_prop6
from pertwalk.cli import run
from pertwalk.distributions import Deterministic, ExpDifference, Exponential, NegatedExponential, Normal, Pareto
from pertwalk.integral_eq import Grid, residual, solve_u
from pertwalk.streams import RandomStream
from pertwalk.tilt import estimate_r_ladder, solve_theta_star
from pertwalk.walk_sim import WalkModel, conditional_tail, counterexample_decay, crude_tail, is_tail

WORKERS = os.cpu_count() or 1
TESTS = Path(__file__).parent
REPS = 100_000

pytestmark = pytest.mark.slow


def within(r, truth, k=3.0):
    return abs(r.estimate - truth) <= k * r.std_error


def test_criterion_1_closed_form_oracle(verdict):
    t0 = time.perf_counter()
    model = WalkModel(NegatedExponential(1.0), Exponential(1.0))
    xs = [0.5, math.log(2.0), 1.0, 2.0, 3.0]
    truth = [1.0 - exact_prop4(1.0, model.perturbation, x) for x in xs]
    crude = crude_tail(model, xs, reps=REPS, stream=RandomStream(101), workers=WORKERS)
    cond = [conditional_tail(model, x, REPS, stream=RandomStream(102).substream(i), workers=WORKERS)
            for i, x in enumerate(xs)]
    dt = time.perf_counter() - t0
    z = [max(abs(c.estimate - t) / c.std_error, abs(d.estimate - t) / d.std_error)
         for c, d, t in zip(crude, cond, truth)]
    ok = all(within(c, t) and within(d, t) for c, d, t in zip(crude, cond, truth)) and dt < 60
    verdict(1, ok, f"max |z| {max(z):.2f} (limit 3), {dt:.1f} s (limit 60)")
    assert ok


def test_criterion_2_integral_equation(verdict):
    t0 = time.perf_counter()
    model = WalkModel(NegatedExponential(1.0), Exponential(1.0))
    grid = Grid(-5.0, 10.0, 4001)
    u = solve_u(model, grid, 1e-6)
    err = float(np.max(np.abs(u.values - (1.0 - exact_prop4(1.0, model.perturbation, grid.points)))))
    res = residual(u, model)
    dt = time.perf_counter() - t0
    ok = err <= 1e-3 and res <= 1e-4 and dt < 120
    verdict(2, ok, f"sup error {err:.2e} (limit 1e-3), residual {res:.2e} (limit 1e-4), {dt:.1f} s")
    assert ok


def test_criterion_3_lundberg_roots(verdict):
    t0 = time.perf_counter()
    a = solve_theta_star(ExpDifference(2.0, 1.0))
    b = solve_theta_star(Normal(-1.0, 1.0))
    dt = time.perf_counter() - t0
    errs = (abs(a.theta_star - 1.0), abs(b.theta_star - 2.0), abs(b.kappa - 1.0))
    ok = max(errs) <= 1e-10 and dt < 1.0
    verdict(3, ok, f"max root error {max(errs):.1e} (limit 1e-10), {dt:.3f} s")
    assert ok


def test_criterion_4_unperturbed(verdict):
    t0 = time.perf_counter()
    model = WalkModel(ExpDifference(2.0, 1.0), Deterministic(0.0))
    sol = solve_theta_star(model.increment)
    xs = (3.0, 5.0, 8.0)
    res = [is_tail(model, sol, x, REPS, RandomStream(401).substream(i), WORKERS) for i, x in enumerate(xs)]
    r = estimate_r_ladder(model.increment, sol, REPS, RandomStream(402), workers=WORKERS)
    dt = time.perf_counter() - t0
    zs = [abs(e.estimate - 0.5 * math.exp(-x)) / e.std_error for e, x in zip(res, xs)]
    zr = abs(r.estimate - 0.5) / r.std_error
    ok = max(zs) <= 3 and zr <= 3 and dt < 60
    verdict(4, ok, f"max |z| tail {max(zs):.2f}, r = {r.estimate:.4f} |z| {zr:.2f} (limit 3), {dt:.1f} s")
    assert ok


def test_criterion_5_light_tail_constant(verdict):
    t0 = time.perf_counter()
    model = WalkModel(ExpDifference(2.0, 1.0), Exponential(3.0))
    sol = solve_theta_star(model.increment)
    xs = [6.0, 8.0, 10.0, 12.0]
    res = [is_tail(model, sol, x, REPS, RandomStream(501).substream(i), WORKERS) for i, x in enumerate(xs)]
    stat = np.array([math.exp(sol.theta_star * x) * e.estimate for x, e in zip(xs, res)])
    se = np.array([math.exp(sol.theta_star * x) * e.std_error for x, e in zip(xs, res)])
    i, j = int(stat.argmax()), int(stat.argmin())
    spread = (stat[i] - stat[j]) / math.hypot(se[i], se[j])
    rep = cl_constant(model, sol, xs, res)
    low = lower_bound(model, sol, 0.5, xs[0]).constant
    high = upper_bound_prop6(model, sol).value
    dt = time.perf_counter() - t0
    ok = spread < 3 and low <= rep.constant <= high and dt < 300
    verdict(5, ok, f"spread {spread:.2f} pooled SE (limit 3), c = {rep.constant:.4f} +- {rep.constant_se:.4f} "
                   f"in [{low:.2f}, {high:.2f}], {dt:.1f} s")
    assert ok


def test_criterion_6_exponential_perturbation(verdict):
    t0 = time.perf_counter()
    model = WalkModel(Normal(-1.0, 0.5), Exponential(1.0))
    r = conditional_tail(model, 12.0, REPS, stream=RandomStream(601), workers=WORKERS)
    ratio = r.estimate / (1.7152 * math.exp(-12.0))
    dt = time.perf_counter() - t0
    ok = 0.9 <= ratio <= 1.1 and dt < 300
    verdict(6, ok, f"ratio {ratio:.4f} (range [0.9, 1.1]), {dt:.1f} s")
    assert ok


def test_criterion_7_heavy_tail(verdict):
    t0 = time.perf_counter()
    model = WalkModel(Normal(-0.5, 0.5), Pareto(2.0, 1.0))
    r = conditional_tail(model, 40.0, REPS, stream=RandomStream(701), workers=WORKERS)
    ratio = r.estimate / heavy_tail_asymptote(model, 40.0)
    dt = time.perf_counter() - t0
    ok = 0.85 <= ratio <= 1.15 and dt < 300
    verdict(7, ok, f"ratio {ratio:.4f} (range [0.85, 1.15]), {dt:.1f} s")
    assert ok


def test_criterion_8_counterexample(verdict):
    t0 = time.perf_counter()
    xs = [2.0, 3.0, 4.0, 5.0]
    corr = counterexample_decay(2.0, xs, REPS, RandomStream(801), workers=WORKERS)
    ind = counterexample_decay(2.0, xs, REPS, RandomStream(802), independent=True, workers=WORKERS)
    dt = time.perf_counter() - t0
    ok = abs(corr.rate - 1.0) <= 0.15 and abs(ind.rate - 1.5) <= 0.15 and dt < 300
    verdict(8, ok, f"correlated rate {corr.rate:.3f} (1.0 +- 0.15), independent rate {ind.rate:.3f} "
                   f"(1.5 +- 0.15), {dt:.1f} s")
    assert ok


PROPERTY_TESTS = [
    "test_walk_sim.py::test_lindley_max_representation_exact_on_dyadic_paths",
    "test_walk_sim.py::test_estimator_agreement",
    "test_walk_sim.py::test_monotone_in_level",
    "test_walk_sim.py::test_dominates_perturbation_tail",
    "test_walk_sim.py::test_is_weight_bound_for_bounded_perturbations",
    "test_walk_sim.py::test_conditioning_reduces_variance",
    "test_walk_sim.py::test_reproducible_and_worker_independent",
    "test_integral_eq.py::test_neumann_partial_sums_increase",
    "test_integral_eq.py::test_output_is_a_tail_function",
    "test_analytic.py::test_exact_prop4_is_a_cdf",
]


def _cli_bytes(tmp_path):
    cfg = tmp_path / "m.cfg"
    cfg.write_text("increment=expdifference(2,1)\nperturbation=exponential(1)\n", encoding="utf-8")
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        code = run(["estimate", "--model", str(cfg), "--method", "is", "--x", "5", "--reps", "100000",
                    "--seed", "7"], buf, io.StringIO())
        outs.append((code, buf.getvalue().encode()))
    return outs[0][0] == 0 and outs[0] == outs[1]


def test_criterion_9_property_suites(verdict, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / t) for t in PROPERTY_TESTS]],
                          capture_output=True, text=True, cwd=TESTS.parent)
    same = _cli_bytes(tmp_path)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    ok = proc.returncode == 0 and same
    verdict(9, ok, f"property suites: {summary}; byte-identical CLI output: {same}")
    assert ok, proc.stdout[-3000:]
