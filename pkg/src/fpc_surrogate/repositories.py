import csv
import io
import logging
from abc import ABC, abstractmethod
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ValidationError

from fpc_surrogate.exceptions import StorageError
from fpc_surrogate.formats import (
    CheckpointPayload,
    decode_checkpoint,
    decode_dataset,
    decode_dataset_csv,
    encode_checkpoint,
    encode_dataset,
    encode_dataset_csv,
    fnv1a_64,
)
from fpc_surrogate.oracle import Dataset

logger = logging.getLogger(__name__)


class BaseRepository[T](ABC):
    """Base repository for storing one kind of artifact in files."""

    def read(self, path: Path) -> T:
        """Reads and decodes an artifact.

        Args:
            path: File to read.

        Raises:
            StorageError: If the file cannot be read or decoded.

        Returns:
            The decoded artifact.
        """
        try:
            data = path.read_bytes()
        except FileNotFoundError as error:
            msg = f"File not found: {path}"
            raise StorageError(msg) from error
        except OSError as error:
            msg = f"Cannot read {path}: {error.strerror}"
            raise StorageError(msg) from error
        logger.debug("Read %d bytes from %s", len(data), path)
        return self.decode(data, path)

    def write(self, obj: T, path: Path) -> Path:
        """Encodes and writes an artifact, creating parent directories.

        Args:
            obj: Artifact to write.
            path: Destination file.

        Raises:
            StorageError: If the file cannot be written.

        Returns:
            The written path.
        """
        data = self.encode(obj, path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        except OSError as error:
            msg = f"Cannot write {path}: {error.strerror}"
            raise StorageError(msg) from error
        logger.debug("Wrote %d bytes to %s", len(data), path)
        return path

    @abstractmethod
    def encode(self, obj: T, path: Path) -> bytes:
        """Serializes an artifact.

        This method must be implemented by subclasses.

        Args:
            obj: Artifact to serialize.
            path: Destination, whose suffix may select the format.

        Returns:
            File bytes.
        """

    @abstractmethod
    def decode(self, data: bytes, path: Path) -> T:
        """Deserializes an artifact.

        This method must be implemented by subclasses.

        Args:
            data: File bytes.
            path: Source, whose suffix may select the format.

        Returns:
            The artifact.
        """


class DatasetRepository(BaseRepository[Dataset]):
    """FPCD v1 datasets; ``.csv`` files use the text form."""

    def encode(self, obj: Dataset, path: Path) -> bytes:
        """Serializes a dataset in the form chosen by the suffix."""
        if path.suffix == ".csv":
            return encode_dataset_csv(obj.payload()).encode()
        return encode_dataset(obj.payload())

    def decode(self, data: bytes, path: Path) -> Dataset:
        """Deserializes a dataset in the form chosen by the suffix."""
        if path.suffix == ".csv":
            try:
                text = data.decode()
            except UnicodeDecodeError as error:
                msg = f"{path} is not a text dataset"
                raise StorageError(msg) from error
            return Dataset.from_payload(decode_dataset_csv(text))
        return Dataset.from_payload(decode_dataset(data))


class CheckpointRepository(BaseRepository[CheckpointPayload]):
    """FPCM v1 model files."""

    def encode(
        self,
        obj: CheckpointPayload,
        path: Path,  # noqa: ARG002
    ) -> bytes:
        """Serializes a checkpoint."""
        return encode_checkpoint(obj)

    def decode(
        self,
        data: bytes,
        path: Path,  # noqa: ARG002
    ) -> CheckpointPayload:
        """Deserializes a checkpoint after verifying its checksum."""
        return decode_checkpoint(data)

    def fingerprint(self, path: Path) -> str:
        """FNV-1a 64 of a checkpoint file, in hex."""
        try:
            return f"{fnv1a_64(path.read_bytes()):016x}"
        except OSError as error:
            msg = f"Cannot read {path}: {error.strerror}"
            raise StorageError(msg) from error


class ReportRepository[M: BaseModel](BaseRepository[M]):
    """Pydantic reports stored as indented JSON."""

    def __init__(self, schema: type[M]) -> None:
        """Initializes the repository for one report model.

        Args:
            schema: Model used to validate reports on reading.
        """
        self.schema = schema

    def encode(self, obj: M, path: Path) -> bytes:  # noqa: ARG002
        """Serializes a report."""
        return (obj.model_dump_json(indent=2) + "\n").encode()

    def decode(self, data: bytes, path: Path) -> M:
        """Validates a report against the schema."""
        try:
            return self.schema.model_validate_json(data)
        except ValidationError as error:
            msg = f"{path} is not a valid {self.schema.__name__}"
            raise StorageError(msg) from error


class CsvRepository(BaseRepository[list[dict[str, Any]]]):
    """Tables with a header row, for plotting tools."""

    def __init__(self, columns: Sequence[str]) -> None:
        """Initializes the repository for one table layout.

        Args:
            columns: Column names in file order.
        """
        self.columns = list(columns)

    def encode(
        self,
        obj: list[dict[str, Any]],
        path: Path,  # noqa: ARG002
    ) -> bytes:
        """Writes rows; missing and ``None`` cells stay empty."""
        buffer = io.StringIO()
        writer = csv.DictWriter(
            buffer,
            fieldnames=self.columns,
            lineterminator="\n",
        )
        writer.writeheader()
        writer.writerows(_cells(obj))
        return buffer.getvalue().encode()

    def decode(self, data: bytes, path: Path) -> list[dict[str, Any]]:
        """Reads rows as strings keyed by column."""
        reader = csv.DictReader(io.StringIO(data.decode()))
        if reader.fieldnames != self.columns:
            msg = f"{path} does not have columns {self.columns}"
            raise StorageError(msg)
        return list(reader)


def _cells(rows: Iterable[Mapping[str, Any]]) -> Iterable[dict[str, Any]]:
    for row in rows:
        yield {
            key: "" if value is None else value for key, value in row.items()
        }
