"""Ordered matrix Dirichlet priors and the state-space models built on them."""

from .errors import InvalidArgumentError, InvalidParameterError, SamplerError
from .priors import (
    BandSpec,
    PriorConfig,
    check_well_ordered,
    prior_summary,
    row_cdf,
    sample_bmd,
    sample_omd,
    sample_smd,
)

__version__ = "0.1.0"

__all__ = [
    "BandSpec",
    "InvalidArgumentError",
    "InvalidParameterError",
    "PriorConfig",
    "SamplerError",
    "check_well_ordered",
    "prior_summary",
    "row_cdf",
    "sample_bmd",
    "sample_omd",
    "sample_smd",
]
