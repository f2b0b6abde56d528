"""Exception hierarchy shared by every module."""


class LeakageError(Exception):
    """Base class for simulator errors."""


class ConfigError(LeakageError):
    """Scenario or settings validation failed."""


class ShapeError(LeakageError, ValueError):
    """Array or parameter shapes do not line up."""


class NumericError(LeakageError, ArithmeticError):
    """A computation produced NaN or Inf."""


class DatasetError(LeakageError, ValueError):
    """A dataset is empty, inconsistent or too small for the requested operation."""


class DatasetFormatError(DatasetError):
    """An IDX or CSV file could not be parsed."""


class PartitionError(DatasetError):
    """Partitioning could not produce nonempty, disjoint client sets."""


class SwarmError(LeakageError, ValueError):
    """Clients, weights or models do not form a valid swarm."""


class AttackError(LeakageError, ValueError):
    """Attack inputs are missing or inconsistent."""


class DefenseError(LeakageError, ValueError):
    """A defense spec does not fit the model it is applied to."""
