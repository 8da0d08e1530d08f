"""Exception types raised across the package."""


class HyperBayesError(Exception):
    """Base class for all package errors."""


class ShapeError(HyperBayesError, ValueError):
    """Operand extents are incompatible."""


class DomainError(HyperBayesError, ValueError):
    """An operation was applied outside its mathematical domain."""


class NumericError(HyperBayesError, FloatingPointError):
    """A NaN (or otherwise unusable value) reached an operation that forbids it."""


class ContractError(HyperBayesError, ValueError):
    """A precondition on arguments or model layouts was violated."""


class IngestionError(HyperBayesError, ValueError):
    """External data could not be parsed."""


class MetricError(HyperBayesError, ValueError):
    """A metric is undefined for the supplied targets."""


class TrainingDivergedError(HyperBayesError, RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")


class ConfigError(HyperBayesError, ValueError):
    """An experiment configuration failed validation; ``issues`` lists every problem."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {i}" for i in self.issues))
