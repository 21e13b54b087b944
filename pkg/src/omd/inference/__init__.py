"""Posterior inference over reparameterised model parameters."""

from .align import align_states, permute_states
from .models import DptModel, GaussianTarget, HmmModel
from .samplers import ChainTrace, SamplerConfig, posterior_mean, run_chain
from .transforms import ParameterLayout, StickMatrix, UnconstrainedState

__all__ = [
    "ChainTrace",
    "DptModel",
    "GaussianTarget",
    "HmmModel",
    "ParameterLayout",
    "SamplerConfig",
    "StickMatrix",
    "UnconstrainedState",
    "align_states",
    "permute_states",
    "posterior_mean",
    "run_chain",
]
