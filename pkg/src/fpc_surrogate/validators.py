import logging
from collections.abc import Collection
from pathlib import Path
from typing import Any

from fpc_surrogate.exceptions import (
    StorageError,
    UsageError,
    VersionMismatchError,
)
from fpc_surrogate.nn.base import ArchitectureDescriptor

logger = logging.getLogger(__name__)


def check_positive_count(
    value: int,
    name: str,
    detail: Any = "{} must be a positive integer, got {}",
) -> int:
    """Check that a count given on the command line is positive.

    Args:
        value: Count to check.
        name: Option name used in the message.
        detail: Message template filled with the name and the value.

    Raises:
        UsageError: If the count is zero or negative.

    Returns:
        The count.
    """
    if value < 1:
        logger.warning("Rejected %s=%d", name, value)
        raise UsageError(detail.format(name, value))
    return value


def check_file_exists(
    path: Path,
    detail: Any = "File not found: {}",
) -> Path:
    """Check that an input file exists before any work starts.

    Args:
        path: Input file.
        detail: Message template filled with the path.

    Raises:
        StorageError: If the path is not an existing file.

    Returns:
        The path.
    """
    if not path.is_file():
        logger.warning("Missing input file %s", path)
        raise StorageError(detail.format(path))
    return path


def check_oracle_version(
    found: str,
    expected: str,
    what: str = "file",
    detail: Any = "{} was labelled by {}, this run pins {}",
) -> None:
    """Check that an artifact comes from the pinned oracle.

    Args:
        found: Oracle version recorded in the artifact.
        expected: Pinned oracle version.
        what: Artifact description used in the message.
        detail: Message template filled with the artifact, found and
            expected versions.

    Raises:
        VersionMismatchError: If the versions differ.
    """
    if found != expected:
        logger.warning("Rejected %s from oracle %s", what, found)
        raise VersionMismatchError(detail.format(what, found, expected))


def check_architecture(
    found: ArchitectureDescriptor,
    expected: ArchitectureDescriptor,
    detail: Any = "checkpoint holds a {} {}, expected {}",
) -> None:
    """Check that a checkpoint holds the layer layout this build uses.

    Only the block shapes are compared; activation slopes and batch-norm
    constants travel with the checkpoint.

    Args:
        found: Descriptor read from the checkpoint.
        expected: Descriptor of a freshly built model of the same kind.
        detail: Message template filled with kind, found and expected
            widths.

    Raises:
        VersionMismatchError: If kinds or block shapes differ.
    """
    if (found.kind, found.dense, found.conv) != (
        expected.kind,
        expected.dense,
        expected.conv,
    ):
        logger.warning("Rejected %s architecture %s", found.kind, found.dims)
        raise VersionMismatchError(
            detail.format(found.kind, found.dims, expected.dims),
        )


def check_checkpoint_kind(
    arch: ArchitectureDescriptor,
    kinds: Collection[str],
    detail: Any = "checkpoint holds a {} model, this command needs {}",
) -> None:
    """Check that a checkpoint holds a model the command can use.

    Args:
        arch: Descriptor read from the checkpoint.
        kinds: Accepted model kinds.
        detail: Message template filled with found and accepted kinds.

    Raises:
        UsageError: If the kind is not accepted.
    """
    if arch.kind not in kinds:
        logger.warning("Rejected %s checkpoint", arch.kind)
        raise UsageError(detail.format(arch.kind, " or ".join(sorted(kinds))))
