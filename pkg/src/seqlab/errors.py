"""Exception hierarchy shared by all seqlab modules."""


class SeqlabError(Exception):
    """Base class for seqlab errors."""


class DomainError(SeqlabError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(SeqlabError, ValueError):
    """Inconsistent or infeasible configuration."""


class NonConvergenceError(SeqlabError, RuntimeError):
    """A numerical procedure failed to converge."""


class GridError(NonConvergenceError):
    """The state grid of a continuous model is too coarse or too narrow."""


class ExhaustionError(SeqlabError, RuntimeError):
    """A finite truth source ran out before a discovery was made.

    The records produced before exhaustion are kept on ``records``.
    """

    def __init__(self, message, records=()):
        super().__init__(message)
        self.records = list(records)
