"""Single-loop fictitious play for entropy-regularised stationary mean-field games."""

from ._accel import backend
from .embedding import GramMatrix, Kernel, embed, gram, rkhs_distance
from .errors import MFGError
from .generators import generate_instance, load_instance, save_instance, shipped_instance
from .mdp import (evaluate_policy_exact, expected_value, optimality_gap_check,
                  performance_difference_residual, soft_value_iteration,
                  value_iteration_unregularized, visitation)
from .model import InstantiatedMDP, MFGModel, gamma2, instantiate, mean_field_step

__version__ = "0.1.0"
