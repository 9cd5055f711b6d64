"""Off-policy linear value estimation with eligibility traces."""
from .exceptions import ChainError, CoverageError, HypothesisUnmet, SingularUpdateError
from .garnet import FeatureMap, GarnetSpec, generate_garnet, random_policy, uniform_policy
from .learners import ALGORITHMS, Hyper, make_learner
from .mdp import InducedChain, Mdp, Policy, exact_value, induce_chain, stationary_distribution
from .sampling import Trajectory, sample_trajectory

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "ChainError", "CoverageError", "FeatureMap", "GarnetSpec", "Hyper",
    "HypothesisUnmet", "InducedChain", "Mdp", "Policy", "SingularUpdateError", "Trajectory",
    "exact_value", "generate_garnet", "induce_chain", "make_learner", "random_policy",
    "sample_trajectory", "stationary_distribution", "uniform_policy",
]
