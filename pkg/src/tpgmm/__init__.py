"""Two-phase logistic regression via generalized method of moments."""
__version__ = "0.1.0"

from .baselines import fit_oracle, fit_wl
from .design import (
    PhaseTwoSample,
    TwoPhaseDesign,
    empirical_pi,
    sample_balanced,
    sample_case_control,
)
from .gmm import GmmFit, WeightingMatrix, eval_qn, iterated_gmm, minimize_qn, optimal_c
from .logistic import LogisticFit, expit, expit_prime, fit_logistic
from .moments import MomentContext, eval_jacobians, eval_u1, eval_u2, moment_f
from .variance import influence_pieces, sandwich_cov, wald_ci

__all__ = [
    "PhaseTwoSample", "TwoPhaseDesign", "empirical_pi", "sample_balanced",
    "sample_case_control", "GmmFit", "WeightingMatrix", "eval_qn",
    "iterated_gmm", "minimize_qn", "optimal_c", "LogisticFit", "expit",
    "expit_prime", "fit_logistic", "MomentContext", "eval_jacobians",
    "eval_u1", "eval_u2", "moment_f", "influence_pieces", "sandwich_cov",
    "wald_ci", "fit_oracle", "fit_wl",
]
