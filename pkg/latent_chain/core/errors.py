class LatentChainError(Exception):
    """Base class for all errors raised by latent_chain."""


class InvalidArgumentError(LatentChainError, ValueError):
    """An argument violates the documented preconditions of an operation."""


class NonUniqueStationaryError(LatentChainError):
    """The stationary distribution of a chain is not unique."""


class ZeroLikelihoodError(LatentChainError):
    """
    The forward recursion reached a step with zero probability mass.

    Attributes:
        tau (int):
            The 1-based observation index at which the mass vanished.

    """

    def __init__(self, tau: int, message: str | None = None) -> None:
        self.tau = tau
        super().__init__(
            message or f"Zero likelihood at observation {tau}: the observation is "
            "impossible under the model."
        )


class FitError(LatentChainError):
    """The maximum-likelihood fit cannot proceed."""


class ConfigError(LatentChainError):
    """
    A run configuration could not be parsed or validated.

    Attributes:
        path (str):
            The configuration file.
        line (int | None):
            The 1-based line of the offending entry, if known.
        field (str | None):
            The dotted name of the offending field, if known.

    """

    def __init__(
        self,
        message: str,
        path: str = "<config>",
        line: int | None = None,
        field: str | None = None,
    ) -> None:
        self.path = path
        self.line = line
        self.field = field
        self.message = message
        location = f"{path}:{line}" if line is not None else path
        prefix = f"{field}: " if field else ""
        super().__init__(f"{location}: {prefix}{message}")


class DataError(LatentChainError):
    """
    A dataset could not be ingested.

    Attributes:
        line (int | None):
            The 1-based CSV line (header is line 1) of the offending row.

    """

    def __init__(self, message: str, path: str = "<data>", line: int | None = None):
        self.path = path
        self.line = line
        location = f"{path}:{line}" if line is not None else path
        super().__init__(f"{location}: {message}")
