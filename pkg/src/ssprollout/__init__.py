"""Rollout and certainty-equivalent rollout for finite stochastic shortest path
problems, with exact hitting-time performance certificates."""

from .certificates import (CertificateReport, ce_certificate, epsilon_sup, local_error_bound,
                           lyapunov_check, min_time_certificate, one_step_checks,
                           performance_difference, rollout_certificate)
from .errors import (DriftViolatedError, FactorTooLargeError, ImproperCEError,
                     ImproperPolicyError, ImproperRolloutError, InvalidModelError,
                     NoProperPolicyError, NotConvergedError, SingularSystemError, SSPError)
from .exact_solver import (advantage, bellman_apply, hitting_time_exact, occupation_measure,
                           policy_evaluation_exact, properness_check, value_iteration)
from .model import DisturbanceSsp, KernelSsp, induce_kernel, unit_cost, validate
from .montecarlo import estimate, simulate
from .rollout import ce_policy, eta_inexactness, greedy_policy, mismatch_delta
from .scenarios import (GridworldSpec, corridor, gridworld_nav, random_disturbance_ssp,
                        random_proper_ssp, sharpness_chain)

__version__ = "0.1.0"
