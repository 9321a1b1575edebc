"""Tail probabilities for the maximum of a random walk with negative drift
plus an i.i.d. perturbation: closed forms, a Neumann-series solver,
Monte Carlo estimators, asymptotics and bounds."""

__version__ = "0.1.0"

from .analytic import (AsymptoteReport, cl_constant, exact_prop4, exact_tail, exp_perturbation_asymptote,
                       heavy_tail_asymptote, lower_bound, unperturbed_tail, upper_bound_prop6)
from .distributions import (Deterministic, Distribution, ExpDifference, Exponential, ExpTailFit,
                            NegatedExponential, Normal, Pareto, Weibull, exp_tail_fit, parse_distribution,
                            sample)
from .estimates import EstimateResult
from .integral_eq import Grid, TabulatedFn, apply_T, default_grid, residual, solve_u
from .streams import RandomStream
from .tilt import LundbergSolution, TiltedIncrement, estimate_r_ladder, solve_theta_star, tilt
from .walk_sim import (CorrelatedExample, HittingRecord, Independent, WalkModel, conditional_tail,
                       counterexample_decay, crude_tail, is_tail, lindley_path, lindley_recursion,
                       max_representation)

__all__ = [
    "AsymptoteReport", "cl_constant", "exact_prop4", "exact_tail", "exp_perturbation_asymptote",
    "heavy_tail_asymptote", "lower_bound", "unperturbed_tail", "upper_bound_prop6", "Deterministic",
    "Distribution", "ExpDifference", "Exponential", "ExpTailFit", "NegatedExponential", "Normal",
    "Pareto", "Weibull", "exp_tail_fit", "parse_distribution", "sample", "EstimateResult", "Grid",
    "TabulatedFn", "apply_T", "default_grid", "residual", "solve_u", "RandomStream",
    "LundbergSolution", "TiltedIncrement", "estimate_r_ladder", "solve_theta_star", "tilt",
    "CorrelatedExample", "HittingRecord", "Independent", "WalkModel", "conditional_tail",
    "counterexample_decay", "crude_tail", "is_tail", "lindley_path", "lindley_recursion",
    "max_representation", "__version__",
]
