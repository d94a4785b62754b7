"""Exception hierarchy shared by every stage of the pipeline.

Each class carries the process exit code the command-line front end uses
when the error escapes a subcommand.
"""


class RaceProxyError(Exception):
    exit_code = 1


class ConfigurationError(RaceProxyError):
    """Bad or inconsistent configuration (missing column, layout mismatch, ...)."""

    exit_code = 2


class DataError(RaceProxyError):
    """Input data violates a documented contract."""

    exit_code = 3


class LeakageError(RaceProxyError):
    """Held-out records reached a training input."""

    exit_code = 4


class DivergenceError(RaceProxyError):
    """An iterative fit produced non-finite values."""

    exit_code = 5


class UndefinedMetricError(RaceProxyError, ValueError):
    """A metric is undefined for the supplied labels."""

    exit_code = 3
