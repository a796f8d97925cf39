"""Exception types shared across the package."""


class DmiaError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(DmiaError, ValueError):
    """An argument violated a documented precondition."""


class NumericDegenerateError(DmiaError, ArithmeticError):
    """A computation entered a numerically degenerate regime."""


class TrainingDivergedError(DmiaError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class CheckpointCorruptError(DmiaError, ValueError):
    """A checkpoint file failed structural validation."""

    def __init__(self, message: str, offset: int = 0):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class DatasetCorruptError(DmiaError, ValueError):
    """A dataset file failed structural validation."""


class EvalDegenerateError(DmiaError, ValueError):
    """Evaluation input cannot support the requested metric."""
