"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """An argument is outside the operation's domain."""


class ShapeError(ValueError):
    """Vector or matrix dimensions do not line up."""


class UnderQuorumError(RuntimeError):
    """Fewer active participants than the aggregation threshold k."""


class ConfigError(ValueError):
    """An experiment configuration could not be parsed or validated."""
