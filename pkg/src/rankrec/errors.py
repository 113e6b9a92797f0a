"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: input/configuration problems exit
with 2, numeric failures (divergence) with 3.
"""


class RankrecError(Exception):
    """Base class for all toolkit errors."""


class DataFormatError(RankrecError):
    """Malformed or inconsistent input data (parse failures, duplicates)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDatasetError(RankrecError):
    """A filtering or splitting step left no usable data."""


class ProtocolError(RankrecError):
    """A user or partition violates the experimental protocol."""


class SamplingInfeasibleError(ProtocolError):
    """The negative-item pool cannot supply the requested sample."""


class UndefinedMetricError(RankrecError):
    """Metric value is undefined for the given input (e.g. no positives)."""


class ConfigurationError(RankrecError):
    """Invalid metric/loss/profile configuration."""


class BinningError(RankrecError):
    """Too few users for the requested grouping scheme."""


class DivergenceError(RankrecError):
    """Training produced a non-finite loss; carries the failing epoch."""

    def __init__(self, message, epoch):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch
