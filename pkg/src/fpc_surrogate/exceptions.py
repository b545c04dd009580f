from typing import ClassVar


class FpcError(Exception):
    """Base class for every error raised by the toolkit.

    Attributes:
        exit_code: Process exit code used by the command-line surface.
    """

    exit_code: ClassVar[int] = 1


class UsageError(FpcError):
    """Raised when a command receives inconsistent options."""

    exit_code = 1


class DesignError(FpcError, ValueError):
    """Raised for an invalid geometry, design or design vector."""

    exit_code = 1


class StorageError(FpcError):
    """Raised when a file is missing, malformed or fails its checksum."""

    exit_code = 2


class NumericalError(FpcError, ArithmeticError):
    """Raised when training produces a non-finite loss.

    Attributes:
        iteration: Training iteration at which the loss diverged.
        batch_seed: Seed of the batch that produced the loss.
    """

    exit_code = 3

    def __init__(self, message: str, iteration: int, batch_seed: int) -> None:
        """Initializes the error with its diagnostic context.

        Args:
            message: Description of the failing quantity.
            iteration: Training iteration at which the loss diverged.
            batch_seed: Seed of the batch that produced the loss.
        """
        super().__init__(
            f"{message} (iteration={iteration}, batch_seed={batch_seed})",
        )
        self.iteration = iteration
        self.batch_seed = batch_seed


class VersionMismatchError(FpcError):
    """Raised when a file was produced by another oracle or architecture."""

    exit_code = 4
