"""Erosion-based verification of signal temporal logic for stochastic systems.

The deviation of a noisy closed loop from its noise-free twin is bounded by a
probabilistic reachable set; eroding every predicate of a formula by that set
turns a deterministic verification result into a probabilistic guarantee.
"""
from .stl import (
    FormulaSyntaxError,
    eval_bool,
    horizon,
    parse_formula,
    print_formula,
    robustness,
    to_nnf,
)
from .deviation import optimize_epsilon, prs_radius, worst_case_radius
from .erosion import ErodedSpec, erode_formula, erosion_pipeline
from .scenario import Scenario, load_scenario
from .verify import Verdict, monte_carlo_estimate, verify_deterministic

__all__ = [
    "ErodedSpec", "FormulaSyntaxError", "Scenario", "Verdict", "erode_formula", "erosion_pipeline",
    "eval_bool", "horizon", "load_scenario", "monte_carlo_estimate", "optimize_epsilon", "parse_formula",
    "print_formula", "prs_radius", "robustness", "to_nnf", "verify_deterministic", "worst_case_radius",
]
