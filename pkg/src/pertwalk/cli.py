"""Command-line front end.

Every subcommand writes CSV to standard output, preceded by ``#`` manifest
lines (command, seed, model hash, version, diagnostics). Wall-clock time goes
to standard error so that a fixed seed reproduces stdout byte for byte.

Exit codes: 0 success, 1 usage or configuration error, 2 the model violates a
mathematical condition the computation needs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .analytic import (cl_constant, exact_prop4, exp_perturbation_report, heavy_tail_asymptote,
                       heavy_tail_report, lower_bound, upper_bound_prop6)
from .distributions import (Distribution, ExpDifference, Exponential, NegatedExponential, exp_tail_fit,
                            parse_distribution, split_literal)
from .errors import (ApplicabilityError, ConditionViolatedError, ConfigError, InapplicableModelError,
                     PertWalkError, UnsupportedError)
from .integral_eq import Grid, default_grid, residual, solve_u
from .streams import RandomStream
from .tilt import estimate_r_ladder, solve_theta_star
from .walk_sim import (CorrelatedExample, Independent, WalkModel, conditional_tail, counterexample_decay,
                       crude_tail, is_tail, lindley_path, production_model)

SEED_ENV = "PERTWALK_SEED"
CONFIG_KEYS = ("increment", "perturbation", "dependence", "interarrival", "service", "delay")


# ---------------------------------------------------------------------------
# configuration

def parse_dependence(text: str):
    t = text.strip()
    if t.lower() == "independent":
        return Independent()
    name, args = split_literal(t)
    if name != "correlated" or len(args) != 2:
        raise ConfigError(f"malformed dependence {text!r}: expected independent or correlated(l1, l2)")
    try:
        l1, l2 = (float(a.split("=", 1)[-1]) for a in args)
    except ValueError:
        raise ConfigError(f"malformed dependence {text!r}: rates must be numbers") from None
    if not (l1 > 0 and l2 > 0):
        raise ConfigError(f"malformed dependence {text!r}: rates must be positive")
    return CorrelatedExample(l1, l2)


@dataclass(frozen=True)
class ModelConfig:
    increment: Distribution | None = None
    perturbation: Distribution | None = None
    dependence: Independent | CorrelatedExample = field(default_factory=Independent)
    interarrival: Distribution | None = None
    service: Distribution | None = None
    delay: Distribution | None = None

    def to_model(self) -> WalkModel:
        if isinstance(self.dependence, CorrelatedExample):
            d = self.dependence
            inc = self.increment or ExpDifference(d.lambda1, d.lambda2)
            pert = self.perturbation or Exponential(d.lambda1)
            return WalkModel(inc, pert, d)
        if self.interarrival is not None or self.service is not None:
            return production_model(self.interarrival, self.service, self.delay or self.perturbation)
        return WalkModel(self.increment, self.perturbation, self.dependence)

    def serialize(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or (f.name == "dependence" and isinstance(v, Independent)):
                continue
            lines.append(f"{f.name}={v.to_literal()}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]


def parse_config(text: str, build: bool = True) -> ModelConfig:
    """Parse ``key=value`` lines. All syntax problems are reported together.

    With ``build`` the model is constructed, so drift and moment violations
    raise their applicability errors.
    """
    errors = []
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key=value, got {raw.strip()!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in CONFIG_KEYS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[key] = parse_dependence(val) if key == "dependence" else parse_distribution(val)
        except ConfigError as exc:
            errors.extend(f"line {lineno}: {e}" for e in exc.errors)
        except ApplicabilityError as exc:
            errors.append(f"line {lineno}: {exc}")
    production = "interarrival" in values or "service" in values
    correlated = isinstance(values.get("dependence"), CorrelatedExample)
    if production:
        for k in ("interarrival", "service"):
            if k not in values:
                errors.append(f"production model needs {k!r}")
        if "increment" in values:
            errors.append("give either increment or interarrival/service, not both")
        if "delay" not in values and "perturbation" not in values:
            errors.append("production model needs 'delay'")
    elif not correlated:
        for k in ("increment", "perturbation"):
            if k not in values:
                errors.append(f"missing key {k!r}")
    if errors:
        raise ConfigError(errors)
    cfg = ModelConfig(**values)
    if build:
        try:
            cfg.to_model()
        except ApplicabilityError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def load_config(path: str) -> ModelConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read model file: {exc}") from None
    return parse_config(text)


# ---------------------------------------------------------------------------
# output

@dataclass
class RunManifest:
    command: str
    seed: int
    seed_source: str
    model_hash: str = "-"
    version: str = __version__
    diagnostics: list = field(default_factory=list)

    def header(self) -> str:
        lines = [f"# pertwalk {self.version}",
                 f"# command: {self.command}",
                 f"# seed: {self.seed} ({self.seed_source})",
                 f"# model_hash: {self.model_hash}"]
        lines += [f"# {d}" for d in self.diagnostics]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _floats(text: str | None, default=None):
    if text is None:
        return default
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--x expects a comma-separated list of numbers, got {text!r}") from None


EST_COLUMNS = ["x", "estimate", "std_error", "ci_lo", "ci_hi", "method", "reps", "seed"]


def _est_row(x, r):
    return [x, r.estimate, r.std_error, r.ci_lo, r.ci_hi, r.method, r.reps, r.seed]


# ---------------------------------------------------------------------------
# subcommands; each returns (csv text, diagnostics)

def _need_model(args):
    if not args.model:
        raise ConfigError("--model is required")
    return load_config(args.model)


def cmd_exact(args, man):
    cfg = _need_model(args)
    model = cfg.to_model()
    if not isinstance(model.increment, NegatedExponential) or not model.independent:
        raise InapplicableModelError("the closed form needs negatedexponential increments "
                                     "and independent perturbations")
    man.model_hash = cfg.digest()
    xs = _floats(args.x, [0.0])
    lam = model.increment.rate
    rows = []
    for x in xs:
        cdf = exact_prop4(lam, model.perturbation, x)
        rows.append([x, cdf, 1.0 - cdf, "exact_prop4"])
    return _csv(["x", "cdf", "tail", "method"], rows)


def cmd_theta(args, man):
    cfg = _need_model(args)
    model = cfg.to_model()
    man.model_hash = cfg.digest()
    sol = solve_theta_star(model.increment)
    r = estimate_r_ladder(model.increment, sol, args.reps, RandomStream(man.seed), workers=args.workers)
    row = [sol.theta_star, sol.kappa, sol.psi_prime_at_theta_star, sol.psi_at_kappa, sol.bracket[0],
           sol.bracket[1], r.estimate, r.std_error, r.reps, r.seed]
    return _csv(["theta_star", "kappa", "psi_prime_at_theta_star", "psi_at_kappa", "bracket_lo",
                 "bracket_hi", "r", "r_std_error", "reps", "seed"], [row])


def cmd_estimate(args, man):
    cfg = _need_model(args)
    model = cfg.to_model()
    man.model_hash = cfg.digest()
    xs = _floats(args.x)
    if not xs:
        raise ConfigError("--x is required")
    stream = RandomStream(man.seed)
    method = args.method
    if method == "crude":
        results = crude_tail(model, xs, horizon=args.horizon, reps=args.reps, stream=stream,
                             workers=args.workers)
        man.diagnostics.append(f"crude horizon {results[0].extra['horizon']} (biased low)")
    elif method == "is":
        sol = solve_theta_star(model.increment)
        results = [is_tail(model, sol, x, args.reps, stream.substream(i), args.workers)
                   for i, x in enumerate(xs)]
    elif method == "cond":
        results = [conditional_tail(model, x, args.reps, args.eps, stream.substream(i), args.workers)
                   for i, x in enumerate(xs)]
    else:
        raise ConfigError(f"unknown method {method!r}")
    return _csv(EST_COLUMNS, [_est_row(x, r) for x, r in zip(xs, results)])


def cmd_solve_ie(args, man):
    cfg = _need_model(args)
    model = cfg.to_model()
    man.model_hash = cfg.digest()
    points = args.points or 4001
    if args.xmin is not None and args.xmax is not None:
        grid = Grid(args.xmin, args.xmax, points)
    else:
        xs = _floats(args.x, [10.0])
        g = default_grid(model, max(xs), points)
        grid = Grid(g.x_min if args.xmin is None else args.xmin, g.x_max if args.xmax is None else args.xmax,
                    points)
    u = solve_u(model, grid, args.tol)
    man.diagnostics.append(f"neumann terms {u.terms}, last term norm {u.last_norm!r}")
    man.diagnostics.append(f"residual {residual(u, model)!r}")
    return _csv(["x", "u"], [[x, v] for x, v in zip(grid.points, u.values)])


def cmd_asymptote(args, man):
    cfg = _need_model(args)
    model = cfg.to_model()
    man.model_hash = cfg.digest()
    xs = _floats(args.x)
    if not xs:
        raise ConfigError("--x is required")
    regime = args.regime
    cols = ["x", "approximation", "constant", "regime", "in_unit_interval", "method"]
    rows = []
    if regime == "cl":
        sol = solve_theta_star(model.increment)
        stream = RandomStream(man.seed)
        res = [is_tail(model, sol, x, args.reps, stream.substream(i), args.workers) for i, x in enumerate(xs)]
        rep = cl_constant(model, sol, xs, res)
        for x in xs:
            v = rep.constant * math.exp(-sol.theta_star * x)
            rows.append([x, v, rep.constant, rep.regime, v <= 1.0, "cl_constant"])
    elif regime == "exp":
        try:
            fit = exp_tail_fit(model.perturbation)
        except UnsupportedError as exc:
            raise ConditionViolatedError(f"perturbation tail is not exactly exponential: {exc}") from None
        for x in xs:
            rep = exp_perturbation_report(model, fit, x)
            rows.append([x, rep.value, rep.constant, rep.regime, rep.value <= 1.0, "exp_perturbation_asymptote"])
    elif regime == "heavy":
        rep = heavy_tail_report(model, max(xs), strict=False)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for x in xs:
                v = heavy_tail_asymptote(model, x)
                rows.append([x, v, rep.constant, rep.regime, v <= 1.0, "heavy_tail_asymptote"])
    else:
        raise ConfigError(f"unknown regime {regime!r}")
    diag = {k: v for k, v in rep.applicability.items() if k != "value_out_of_range"}
    man.diagnostics.append("applicability: " + ", ".join(f"{k}={_fmt(v)}" for k, v in diag.items()))
    if regime == "cl":
        man.diagnostics.append(f"constant std_error {rep.constant_se!r}")
    return _csv(cols, rows)


def cmd_bounds(args, man):
    cfg = _need_model(args)
    model = cfg.to_model()
    man.model_hash = cfg.digest()
    xs = _floats(args.x, [0.0])
    sol = solve_theta_star(model.increment)
    if isinstance(model.increment, ExpDifference):
        r = model.increment.neg_rate / model.increment.pos_rate
        man.diagnostics.append("r exact (exponential ladder heights)")
    else:
        est = estimate_r_ladder(model.increment, sol, args.reps, RandomStream(man.seed), workers=args.workers)
        r = est.estimate
        man.diagnostics.append(f"r estimated by ladder heights: {r!r} +- {est.std_error!r}")
    up = upper_bound_prop6(model, sol, r=r)
    rows = []
    for x in xs:
        lb = lower_bound(model, sol, r, x)
        rows.append([x, lb.value, lb.constant, up.value, "" if up.refined is None else up.refined,
                     "lower_bound;upper_bound_prop6"])
    if rows and lower_bound(model, sol, r, xs[0]).approximate:
        man.diagnostics.append("lower bound uses the approximate unperturbed tail r exp(-theta_star x)")
    return _csv(["x", "lower_bound", "lower_constant", "upper_constant", "upper_refined", "method"], rows)


def cmd_scenario(args, man):
    name = args.name
    if name == "counterexample":
        l1 = args.lambda1
        xs = _floats(args.x) or [2.0 * k / l1 for k in (2.0, 3.0, 4.0, 5.0)]
        stream = RandomStream(man.seed)
        rows = []
        for i, independent in enumerate((False, True)):
            fit = counterexample_decay(l1, xs, args.reps, stream.substream(i), independent=independent,
                                       horizon=args.horizon, workers=args.workers)
            rows.append([l1, "independent" if independent else "correlated", fit.rate, fit.rate_se,
                         0.75 * l1, 0.75 * l1 if independent else 0.5 * l1, "counterexample_decay"])
        man.diagnostics.append("levels " + ",".join(_fmt(x) for x in xs))
        return _csv(["lambda1", "mode", "fitted_rate", "rate_std_error", "theta_star", "predicted_rate",
                     "method"], rows)
    if name == "production":
        arrivals, services, delays = Exponential(1.0), Exponential(1.25), Exponential(2.0)
        model = production_model(arrivals, services, delays)
        man.diagnostics.append(f"interarrival={arrivals.to_literal()} service={services.to_literal()} "
                               f"delay={delays.to_literal()}")
        xs = _floats(args.x) or [2.0, 5.0, 10.0, 20.0]
        stream = RandomStream(man.seed)
        sol = solve_theta_star(model.increment)
        n = args.horizon or 10**6
        path = lindley_path(arrivals, services, delays, n, stream.substream(0))
        burn = n // 10
        rows = []
        for i, x in enumerate(xs):
            r = is_tail(model, sol, x, args.reps, stream.substream(i + 1), args.workers)
            rows.append(_est_row(x, r))
            frac = float(np.mean(path.total[burn:] > x))
            rows.append([x, frac, "", "", "", "lindley_time_average", n - burn, man.seed])
        return _csv(EST_COLUMNS, rows)
    raise ConfigError(f"unknown scenario {name!r}")


# ---------------------------------------------------------------------------
# argument parsing

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pertwalk", description="Tail of the maximum of a perturbed random walk.")
    p.add_argument("--version", action="version", version=f"pertwalk {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", help="model file with key=value lines")
        sp.add_argument("--x", help="comma-separated levels")
        sp.add_argument("--reps", type=int, default=10**5)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        return sp

    common(sub.add_parser("exact", help="closed form for negated exponential increments"))
    common(sub.add_parser("theta", help="Lundberg root, kappa and the ladder constant r"))
    est = common(sub.add_parser("estimate", help="Monte Carlo estimate of P(M > x)"))
    est.add_argument("--method", choices=("crude", "is", "cond"), default="is")
    est.add_argument("--eps", type=float, default=1e-4)
    est.add_argument("--horizon", type=int)
    ie = common(sub.add_parser("solve-ie", help="Neumann series solution on a grid"))
    ie.add_argument("--xmin", type=float)
    ie.add_argument("--xmax", type=float)
    ie.add_argument("--points", type=int)
    ie.add_argument("--tol", type=float, default=1e-6)
    asy = common(sub.add_parser("asymptote", help="asymptotic approximations"))
    asy.add_argument("--regime", choices=("cl", "exp", "heavy"), required=True)
    common(sub.add_parser("bounds", help="lower bound and upper constants"))
    sc = common(sub.add_parser("scenario", help="canned models"), model=False)
    sc.add_argument("name", choices=("production", "counterexample"))
    sc.add_argument("--lambda1", type=float, default=2.0)
    sc.add_argument("--horizon", type=int)
    return p


COMMANDS = {"exact": cmd_exact, "theta": cmd_theta, "estimate": cmd_estimate, "solve-ie": cmd_solve_ie,
            "asymptote": cmd_asymptote, "bounds": cmd_bounds, "scenario": cmd_scenario}


def _resolve_seed(flag):
    if flag is not None:
        return flag, "flag"
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env), f"env {SEED_ENV}"
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0, "default"


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    t0 = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("pertwalk: error: a subcommand is required")
        if args.reps < 1:
            raise UsageError("--reps must be at least 1")
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        seed, source = _resolve_seed(args.seed)
        man = RunManifest("pertwalk " + " ".join(argv), seed, source)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            body = COMMANDS[args.command](args, man)
        for w in caught:
            man.diagnostics.append(f"warning: {w.message}")
    except UsageError as exc:
        print(str(exc), file=stderr)
        return 1
    except ApplicabilityError as exc:
        print(f"pertwalk: not applicable: {exc}", file=stderr)
        return 2
    except (ConfigError, PertWalkError, ValueError) as exc:
        print(f"pertwalk: error: {exc}", file=stderr)
        return 1
    stdout.write(man.header() + body)
    print(f"# wall_clock_s: {time.perf_counter() - t0:.3f}", file=stderr)
    return 0


def main(argv=None) -> int:
    code = run(argv)
    sys.exit(code)
