"""Binary and text codecs of the FPCD v1 dataset and FPCM v1 model files.

All multi-byte integers and floats are little-endian. Both binary formats
end with a trailer that the reader checks before trusting the payload.
"""

import csv
import io
import json
import struct
from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from fpc_surrogate.exceptions import StorageError
from fpc_surrogate.nn.base import (
    ActivationKind,
    Array,
    ArchitectureDescriptor,
    ConvSpec,
    DenseSpec,
)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK_64 = 0xFFFFFFFFFFFFFFFF

DATASET_MAGIC = b"FPCD"
MODEL_MAGIC = b"FPCM"
FORMAT_VERSION = 1
DESIGN_DIM = 72
RESPONSE_DIM = 303
SEGMENT = 101
LE_FLOAT = np.dtype("<f8")


def fnv1a_64(data: bytes) -> int:
    """Computes the 64-bit FNV-1a hash.

    Args:
        data: Bytes to hash.

    Returns:
        The hash as an unsigned integer.
    """
    value = FNV_OFFSET
    for byte in data:
        value = ((value ^ byte) * FNV_PRIME) & MASK_64
    return value


def csv_header() -> list[str]:
    """Column names of the FPCD v1 CSV form."""
    return [
        *(f"x{i}" for i in range(DESIGN_DIM)),
        *(f"ar{i}" for i in range(SEGMENT)),
        *(f"rl{i}" for i in range(SEGMENT)),
        *(f"g{i}" for i in range(SEGMENT)),
    ]


@dataclass(frozen=True, slots=True)
class DatasetPayload:
    """Decoded content of a dataset file.

    Attributes:
        designs: Design vectors, one row per entry, in millimetres.
        responses: Response vectors, one row per entry.
        oracle_version: Version of the oracle that labelled the entries.
        seed: Master seed of the dataset.
        cell_side_mm: Unit-cell side of the geometry.
        loop_inset_mm: Loop inset of the geometry.
    """

    designs: Array
    responses: Array
    oracle_version: str
    seed: int
    cell_side_mm: float
    loop_inset_mm: float

    def records(self) -> bytes:
        """Record section of the binary form."""
        rows = np.hstack([self.designs, self.responses]).astype(LE_FLOAT)
        return rows.tobytes()

    def fingerprint(self) -> str:
        """FNV-1a 64 of the record section, in hex."""
        return f"{fnv1a_64(self.records()):016x}"


class _Reader:
    def __init__(self, data: bytes, what: str) -> None:
        self.data = data
        self.offset = 0
        self.what = what

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            msg = f"Truncated {self.what} file"
            raise StorageError(msg)
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def u32(self) -> int:
        return int(self.unpack("<I")[0])

    def u64(self) -> int:
        return int(self.unpack("<Q")[0])

    def text(self) -> str:
        return self.take(self.u32()).decode()

    def floats(self, count: int) -> Array:
        raw = self.take(count * LE_FLOAT.itemsize)
        return np.frombuffer(raw, dtype=LE_FLOAT).astype(np.float64)


def _text(value: str) -> bytes:
    raw = value.encode()
    return struct.pack("<I", len(raw)) + raw


def _check_magic(reader: _Reader, magic: bytes) -> None:
    if reader.take(len(magic)) != magic:
        msg = f"Not a {magic.decode()} file"
        raise StorageError(msg)
    version = reader.u32()
    if version != FORMAT_VERSION:
        msg = f"Unsupported {magic.decode()} version {version}"
        raise StorageError(msg)


def encode_dataset(payload: DatasetPayload) -> bytes:
    """Serializes a dataset to the FPCD v1 binary form.

    Args:
        payload: Dataset content.

    Returns:
        File bytes.
    """
    header = DATASET_MAGIC + struct.pack(
        "<IIII",
        FORMAT_VERSION,
        len(payload.designs),
        DESIGN_DIM,
        RESPONSE_DIM,
    )
    footer = _text(payload.oracle_version) + struct.pack(
        "<qdd",
        payload.seed,
        payload.cell_side_mm,
        payload.loop_inset_mm,
    )
    return header + payload.records() + footer


def decode_dataset(data: bytes) -> DatasetPayload:
    """Parses the FPCD v1 binary form.

    Args:
        data: File bytes.

    Raises:
        StorageError: If the magic, version or dimensions are wrong or the
            file is truncated.

    Returns:
        Dataset content.
    """
    reader = _Reader(data, "dataset")
    _check_magic(reader, DATASET_MAGIC)
    count, design_dim, response_dim = reader.unpack("<III")
    if (design_dim, response_dim) != (DESIGN_DIM, RESPONSE_DIM):
        msg = f"Unexpected record shape {design_dim}+{response_dim}"
        raise StorageError(msg)
    rows = reader.floats(count * (DESIGN_DIM + RESPONSE_DIM))
    rows = rows.reshape(count, DESIGN_DIM + RESPONSE_DIM)
    oracle_version = reader.text()
    seed, side, inset = reader.unpack("<qdd")
    return DatasetPayload(
        designs=rows[:, :DESIGN_DIM].copy(),
        responses=rows[:, DESIGN_DIM:].copy(),
        oracle_version=oracle_version,
        seed=int(seed),
        cell_side_mm=float(side),
        loop_inset_mm=float(inset),
    )


def encode_dataset_csv(payload: DatasetPayload) -> str:
    """Serializes a dataset to the FPCD v1 CSV form.

    Provenance lines start with ``#`` and precede the header. Values are
    written with `repr`, which round-trips every float exactly.

    Args:
        payload: Dataset content.

    Returns:
        CSV text.
    """
    buffer = io.StringIO()
    buffer.write(f"# oracle_version={payload.oracle_version}\n")
    buffer.write(f"# seed={payload.seed}\n")
    buffer.write(f"# cell_side_mm={payload.cell_side_mm!r}\n")
    buffer.write(f"# loop_inset_mm={payload.loop_inset_mm!r}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(csv_header())
    for design, response in zip(
        payload.designs,
        payload.responses,
        strict=True,
    ):
        writer.writerow([repr(float(v)) for v in (*design, *response)])
    return buffer.getvalue()


def _split_comments(text: str) -> tuple[dict[str, str], Iterator[str]]:
    lines = text.splitlines()
    meta: dict[str, str] = {}
    start = 0
    for start, line in enumerate(lines):
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition("=")
        meta[key] = value
    return meta, iter(lines[start:])


def decode_dataset_csv(text: str) -> DatasetPayload:
    """Parses the FPCD v1 CSV form.

    Args:
        text: CSV text.

    Raises:
        StorageError: If the header or provenance lines are missing.

    Returns:
        Dataset content.
    """
    meta, lines = _split_comments(text)
    reader = csv.reader(lines)
    if next(reader, None) != csv_header():
        msg = "Dataset CSV header does not match FPCD v1"
        raise StorageError(msg)
    rows = np.array([[float(v) for v in row] for row in reader if row])
    rows = rows.reshape(-1, DESIGN_DIM + RESPONSE_DIM)
    try:
        return DatasetPayload(
            designs=rows[:, :DESIGN_DIM].copy(),
            responses=rows[:, DESIGN_DIM:].copy(),
            oracle_version=meta["oracle_version"],
            seed=int(meta["seed"]),
            cell_side_mm=float(meta["cell_side_mm"]),
            loop_inset_mm=float(meta["loop_inset_mm"]),
        )
    except KeyError as error:
        msg = f"Dataset CSV lacks provenance line {error}"
        raise StorageError(msg) from error


@dataclass(frozen=True, slots=True)
class CheckpointPayload:
    """Decoded content of a model file.

    Attributes:
        architecture: Model descriptor.
        oracle_version: Version of the oracle that labelled the training set.
        parameters: Flat trainable parameters in declaration order.
        buffers: Flat running statistics in declaration order.
        extras: Named auxiliary arrays such as normalization statistics.
        metadata: Provenance (tool version, seeds, dataset fingerprint).
    """

    architecture: ArchitectureDescriptor
    oracle_version: str
    parameters: Array
    buffers: Array
    extras: dict[str, Array] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)


def _encode_architecture(arch: ArchitectureDescriptor) -> bytes:
    parts = [
        _text(arch.kind),
        struct.pack("<II", arch.input_side, len(arch.conv)),
    ]
    parts.extend(
        struct.pack(
            "<IIII",
            spec.in_channels,
            spec.out_channels,
            spec.kernel,
            spec.pool,
        )
        for spec in arch.conv
    )
    parts.append(struct.pack("<I", len(arch.dense)))
    parts.extend(
        struct.pack(
            "<IIBB",
            spec.in_dim,
            spec.out_dim,
            spec.activation,
            spec.batchnorm,
        )
        for spec in arch.dense
    )
    parts.append(
        struct.pack(
            "<ddd",
            arch.leaky_slope,
            arch.bn_momentum,
            arch.bn_epsilon,
        ),
    )
    return b"".join(parts)


def _decode_architecture(reader: _Reader) -> ArchitectureDescriptor:
    kind = reader.text()
    input_side, conv_count = reader.unpack("<II")
    conv = tuple(
        ConvSpec(*reader.unpack("<IIII")) for _ in range(conv_count)
    )
    dense = []
    for _ in range(reader.u32()):
        in_dim, out_dim, activation, batchnorm = reader.unpack("<IIBB")
        dense.append(
            DenseSpec(
                in_dim,
                out_dim,
                ActivationKind(activation),
                bool(batchnorm),
            ),
        )
    slope, momentum, epsilon = reader.unpack("<ddd")
    return ArchitectureDescriptor(
        kind=kind,
        dense=tuple(dense),
        conv=conv,
        input_side=input_side,
        leaky_slope=slope,
        bn_momentum=momentum,
        bn_epsilon=epsilon,
    )


def _floats(values: Array) -> bytes:
    flat = np.ascontiguousarray(values, dtype=LE_FLOAT).ravel()
    return struct.pack("<Q", flat.size) + flat.tobytes()


def encode_checkpoint(payload: CheckpointPayload) -> bytes:
    """Serializes a model to the FPCM v1 binary form.

    Args:
        payload: Model content.

    Returns:
        File bytes, ending with the FNV-1a 64 checksum of all preceding bytes.
    """
    parts = [
        MODEL_MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        _text(payload.oracle_version),
        _encode_architecture(payload.architecture),
        _floats(payload.parameters),
        _floats(payload.buffers),
        _text(json.dumps(payload.metadata, sort_keys=True)),
        struct.pack("<I", len(payload.extras)),
    ]
    for name, values in payload.extras.items():
        parts.extend((_text(name), _floats(values)))
    body = b"".join(parts)
    return body + struct.pack("<Q", fnv1a_64(body))


def decode_checkpoint(data: bytes) -> CheckpointPayload:
    """Parses the FPCM v1 binary form.

    Args:
        data: File bytes.

    Raises:
        StorageError: If the checksum, magic or version is wrong.

    Returns:
        Model content.
    """
    if len(data) < len(MODEL_MAGIC) + 8:
        msg = "Truncated checkpoint file"
        raise StorageError(msg)
    body, (checksum,) = data[:-8], struct.unpack("<Q", data[-8:])
    if fnv1a_64(body) != checksum:
        msg = "Checkpoint checksum mismatch"
        raise StorageError(msg)
    reader = _Reader(body, "checkpoint")
    _check_magic(reader, MODEL_MAGIC)
    oracle_version = reader.text()
    architecture = _decode_architecture(reader)
    parameters = reader.floats(reader.u64())
    buffers = reader.floats(reader.u64())
    metadata = json.loads(reader.text())
    extras = {}
    for _ in range(reader.u32()):
        name = reader.text()
        extras[name] = reader.floats(reader.u64())
    return CheckpointPayload(
        architecture=architecture,
        oracle_version=oracle_version,
        parameters=parameters,
        buffers=buffers,
        extras=extras,
        metadata=metadata,
    )
