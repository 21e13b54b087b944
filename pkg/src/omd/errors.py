"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A distribution or model parameter is outside its support."""


class InvalidArgumentError(ValueError):
    """An argument is malformed, empty or inconsistent with other inputs."""


class SamplerError(RuntimeError):
    """MCMC could not make progress (e.g. no accepted proposals)."""
