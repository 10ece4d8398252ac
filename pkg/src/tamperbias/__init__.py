"""Online tampering attacks that bias Boolean objectives over product spaces.

Exact and Monte Carlo gain oracles, the attack itself, evasion and
clean-label poisoning harnesses, and the closed-form bounds they are
compared against.
"""

from .attack import AttackParams, measure, run_attack, schedule_params, tamper_step
from .bounds import (
    azuma_approx_bound,
    bias_lower_bound,
    budget_upper_bound,
    ideal_bias_bound,
    ideal_budget_bound,
    theorem_budget,
)
from .estimator import EstimatorParams, estimate_gain, estimate_max_gain, k_gain, k_max
from .objective import ExactOracle, Objective, enumerate_attack, exact_avg, exact_gain, exact_max_gain
from .space import ProductSpace, explicit, hamming, uniform_bits, uniform_ints

__version__ = "0.1.0"
