"""Periodic solutions of periodically perturbed planar autonomous systems.

Given an autonomous planar field with an attracting or repelling limit
cycle and a time-periodic perturbation, this package locates the cycle,
verifies the topological conditions under which periodic solutions of the
perturbed system persist, computes an explicit admissible bound on the
perturbation size, and finds/validates the predicted periodic solutions
numerically.
"""

__version__ = "0.1.0"

from .system import (SystemDef, ConfigError, make_system, load_config,
                     example_system, irrational_example_system)
from .odeflow import (IntegratorConfig, BlowUpError, integrate, flow,
                      flow_variational, flow_second_variational,
                      flow_perturbed, flow_perturbed_variational)
from .cycle import (LimitCycle, CycleError, HypothesisError, RatioResult,
                    find_cycle, floquet_companion, check_A1)
from .geom import TubeSets, OffsetError, build_tubes, hausdorff
from .degree import (DegenerateFieldError, winding_degree, circle_map_degree,
                     sign_change_degree, brute_force_degree)
from .conditions import (ConditionsReport, SingularVariationalError,
                         compute_Phi, compute_eta, check_A2_A3, kernel_F,
                         N_map, default_f, theorem3_check, lemma3_pair)
from .bounds import (BoundsReport, estimate_constants, k_gamma,
                     time_map_degree, find_gamma0, epsilon_star)
from .solver import (OrbitResult, ContinuationResult, find_periodic,
                     continuation, least_period_check, irrational_scan,
                     default_guesses)

__all__ = [
    "__version__",
    "SystemDef", "ConfigError", "make_system", "load_config",
    "example_system", "irrational_example_system",
    "IntegratorConfig", "BlowUpError", "integrate", "flow",
    "flow_variational", "flow_second_variational", "flow_perturbed",
    "flow_perturbed_variational",
    "LimitCycle", "CycleError", "HypothesisError", "RatioResult",
    "find_cycle", "floquet_companion", "check_A1",
    "TubeSets", "OffsetError", "build_tubes", "hausdorff",
    "DegenerateFieldError", "winding_degree", "circle_map_degree",
    "sign_change_degree", "brute_force_degree",
    "ConditionsReport", "SingularVariationalError", "compute_Phi",
    "compute_eta", "check_A2_A3", "kernel_F", "N_map", "default_f",
    "theorem3_check", "lemma3_pair",
    "BoundsReport", "estimate_constants", "k_gamma", "time_map_degree",
    "find_gamma0", "epsilon_star",
    "OrbitResult", "ContinuationResult", "find_periodic", "continuation",
    "least_period_check", "irrational_scan", "default_guesses",
]
