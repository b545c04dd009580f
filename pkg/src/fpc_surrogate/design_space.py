"""Brick placements on the periphery of the PRS unit cell.

Coordinates are in millimetres from the lower-left corner of the cell and
name the lower-left corner of each 0.5 mm brick. The loop is a square ring
at ``loop_inset_mm`` from the cell edge; each edge offers
``slots_per_edge`` brick positions and shared corners belong to the first
edge in the order Bottom, Right, Top, Left.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cache
from typing import Self

import numpy as np
from numpy.typing import NDArray

from fpc_surrogate.exceptions import DesignError
from fpc_surrogate.nn.base import Array
from fpc_surrogate.seeding import make_rng

BRICK_SIZE_MM = 0.5
BRICK_COUNT = 36
DESIGN_DIM = 2 * BRICK_COUNT
SNAP_TOLERANCE_MM = 0.25

type DesignVector = Array


class Edge(IntEnum):
    """Loop edges in canonical order."""

    BOTTOM = 0
    RIGHT = 1
    TOP = 2
    LEFT = 3


def _on_grid(value: float) -> bool:
    return float(2 * value).is_integer()


@dataclass(frozen=True, slots=True)
class CellGeometry:
    """Unit-cell dimensions.

    Attributes:
        cell_side_mm: Side of the square unit cell.
        loop_inset_mm: Distance of the loop from the cell edge.
        brick_size_mm: Brick side, always 0.5 mm.
    """

    cell_side_mm: float = 30.0
    loop_inset_mm: float = 2.0
    brick_size_mm: float = field(default=BRICK_SIZE_MM, init=False)

    def __post_init__(self) -> None:
        """Checks that every slot lands inside the cell on the brick grid.

        Raises:
            DesignError: If the geometry cannot hold a brick per edge or is
                not aligned to the 0.5 mm grid.
        """
        if not (_on_grid(self.cell_side_mm) and _on_grid(self.loop_inset_mm)):
            msg = "cell side and loop inset must be multiples of 0.5 mm"
            raise DesignError(msg)
        if self.loop_inset_mm < 0 or self.slots_per_edge < 1:
            msg = (
                f"geometry side={self.cell_side_mm} "
                f"inset={self.loop_inset_mm} leaves no room for bricks"
            )
            raise DesignError(msg)

    @property
    def slots_per_edge(self) -> int:
        """Brick positions along one edge of the loop."""
        span = self.cell_side_mm - 2 * self.loop_inset_mm
        return math.floor(span / self.brick_size_mm)


@dataclass(frozen=True, slots=True, order=True)
class SlotCoordinate:
    """One brick position; ordering is canonical (edge, then offset).

    Attributes:
        edge: Loop edge that owns the slot.
        offset_index: Position along the edge, counted from its start.
        x_mm: Horizontal coordinate of the brick corner.
        y_mm: Vertical coordinate of the brick corner.
    """

    edge: Edge
    offset_index: int
    x_mm: float
    y_mm: float


@dataclass(frozen=True, slots=True)
class UnitCellDesign:
    """A set of brick placements.

    Construction does not validate; see `validate_design`.

    Attributes:
        bricks: Brick slots.
    """

    bricks: tuple[SlotCoordinate, ...]

    @classmethod
    def of(cls, bricks: Sequence[SlotCoordinate]) -> Self:
        """Builds a design with bricks in canonical order.

        Args:
            bricks: Brick slots in any order.

        Returns:
            The canonical design.
        """
        return cls(tuple(sorted(bricks)))


@dataclass(frozen=True, slots=True)
class OccupancyGrid:
    """Pixel map of the bricks.

    Attributes:
        resolution: Pixels per cell side.
        cells: Binary matrix indexed (row from y, column from x).
    """

    resolution: int
    cells: NDArray[np.uint8]


def _edge_slot(
    geometry: CellGeometry,
    edge: Edge,
    offset: int,
) -> tuple[float, float]:
    start = geometry.loop_inset_mm
    end = start + (geometry.slots_per_edge - 1) * geometry.brick_size_mm
    along = start + offset * geometry.brick_size_mm
    match edge:
        case Edge.BOTTOM:
            return along, start
        case Edge.RIGHT:
            return end, along
        case Edge.TOP:
            return along, end
        case Edge.LEFT:
            return start, along


@cache
def enumerate_slots(geometry: CellGeometry) -> tuple[SlotCoordinate, ...]:
    """Lists every brick slot on the loop periphery.

    Args:
        geometry: Unit-cell geometry.

    Returns:
        Slots ordered by edge (Bottom, Right, Top, Left) and offset, with
        each corner listed once under the first edge that reaches it.
    """
    seen: set[tuple[float, float]] = set()
    slots = []
    for edge in Edge:
        for offset in range(geometry.slots_per_edge):
            x_mm, y_mm = _edge_slot(geometry, edge, offset)
            if (x_mm, y_mm) in seen:
                continue
            seen.add((x_mm, y_mm))
            slots.append(SlotCoordinate(edge, offset, x_mm, y_mm))
    return tuple(slots)


@cache
def _slot_table(geometry: CellGeometry) -> Array:
    slots = enumerate_slots(geometry)
    return np.array([(slot.x_mm, slot.y_mm) for slot in slots])


def sample_design(geometry: CellGeometry, seed: int) -> UnitCellDesign:
    """Draws 36 distinct slots uniformly at random.

    Args:
        geometry: Unit-cell geometry.
        seed: Seed; equal seeds give equal designs.

    Raises:
        DesignError: If the geometry has fewer than 36 slots.

    Returns:
        A canonical design.
    """
    slots = enumerate_slots(geometry)
    if len(slots) < BRICK_COUNT:
        msg = f"geometry offers {len(slots)} slots, {BRICK_COUNT} needed"
        raise DesignError(msg)
    picked = make_rng(seed).choice(len(slots), BRICK_COUNT, replace=False)
    return UnitCellDesign.of([slots[i] for i in picked])


def validate_design(
    design: UnitCellDesign,
    geometry: CellGeometry,
) -> list[str]:
    """Lists the ways a design breaks the design invariants.

    Args:
        design: Design to check.
        geometry: Geometry the design is meant for.

    Returns:
        Human-readable violations; empty when the design is valid.
    """
    violations = []
    bricks = design.bricks
    if len(bricks) != BRICK_COUNT:
        violations.append(
            f"expected {BRICK_COUNT} bricks, found {len(bricks)}",
        )
    first_seen: dict[tuple[Edge, int], int] = {}
    for index, brick in enumerate(bricks):
        key = (brick.edge, brick.offset_index)
        if key in first_seen:
            violations.append(
                f"duplicate slot at index {first_seen[key]},{index}",
            )
        else:
            first_seen[key] = index
    valid = set(enumerate_slots(geometry))
    violations.extend(
        f"brick {index} at ({brick.x_mm}, {brick.y_mm}) is not a valid slot"
        for index, brick in enumerate(bricks)
        if brick not in valid
    )
    if list(bricks) != sorted(bricks):
        violations.append("bricks are not in canonical order")
    return violations


def encode_design(design: UnitCellDesign) -> DesignVector:
    """Flattens a design to (x1, y1, ..., x36, y36) in canonical order.

    Args:
        design: Design to encode.

    Returns:
        The design vector in millimetres.
    """
    bricks = sorted(design.bricks)
    return np.array(
        [coord for brick in bricks for coord in (brick.x_mm, brick.y_mm)],
        dtype=np.float64,
    )


def decode_design(
    vector: DesignVector,
    geometry: CellGeometry,
) -> UnitCellDesign:
    """Snaps a design vector back to slots.

    Args:
        vector: 72 coordinates in millimetres.
        geometry: Unit-cell geometry.

    Raises:
        DesignError: If the length is wrong, a coordinate pair is farther
            than 0.25 mm from every slot, or two pairs snap to one slot.

    Returns:
        The canonical design.
    """
    values = np.asarray(vector, dtype=np.float64)
    if values.shape != (DESIGN_DIM,):
        msg = f"expected {DESIGN_DIM} values, found {values.size}"
        raise DesignError(msg)
    table = _slot_table(geometry)
    slots = enumerate_slots(geometry)
    pairs = values.reshape(BRICK_COUNT, 2)
    distance = np.abs(pairs[:, None, :] - table[None, :, :]).max(axis=2)
    nearest = distance.argmin(axis=1)
    for brick, slot in enumerate(nearest):
        if distance[brick, slot] > SNAP_TOLERANCE_MM:
            x_mm, y_mm = pairs[brick]
            msg = (
                f"no slot within tolerance of brick {brick} "
                f"at ({x_mm}, {y_mm})"
            )
            raise DesignError(msg)
    if len(set(nearest.tolist())) != BRICK_COUNT:
        msg = "snapping maps two bricks to the same slot"
        raise DesignError(msg)
    return UnitCellDesign.of([slots[i] for i in nearest])


def normalize_design(
    vector: DesignVector,
    geometry: CellGeometry,
) -> Array:
    """Scales coordinates to [0, 1] by the cell side.

    Args:
        vector: Design vector or a matrix of design vectors.
        geometry: Unit-cell geometry.

    Returns:
        Scaled values.
    """
    return np.asarray(vector, dtype=np.float64) / geometry.cell_side_mm


def denormalize_design(values: Array, geometry: CellGeometry) -> DesignVector:
    """Inverse of `normalize_design`.

    Args:
        values: Scaled values.
        geometry: Unit-cell geometry.

    Returns:
        Coordinates in millimetres.
    """
    return np.asarray(values, dtype=np.float64) * geometry.cell_side_mm


def rasterize_vectors(
    vectors: Array,
    geometry: CellGeometry,
    resolution: int | None = None,
) -> Array:
    """Rasterizes a batch of design vectors.

    Args:
        vectors: Matrix of design vectors, one per row.
        geometry: Unit-cell geometry.
        resolution: Pixels per side; defaults to one pixel per brick.

    Returns:
        Array of shape (batch, resolution, resolution) holding 0 and 1.
    """
    if resolution is None:
        resolution = round(geometry.cell_side_mm / geometry.brick_size_mm)
    pixel = geometry.cell_side_mm / resolution
    coords = np.atleast_2d(vectors).reshape(-1, BRICK_COUNT, 2)
    cols = np.clip(np.floor(coords[..., 0] / pixel), 0, resolution - 1)
    rows = np.clip(np.floor(coords[..., 1] / pixel), 0, resolution - 1)
    grids = np.zeros((len(coords), resolution, resolution))
    batch = np.repeat(np.arange(len(coords)), BRICK_COUNT)
    grids[batch, rows.astype(int).ravel(), cols.astype(int).ravel()] = 1.0
    return grids


def rasterize_design(
    design: UnitCellDesign,
    geometry: CellGeometry,
    resolution: int | None = None,
) -> OccupancyGrid:
    """Maps each brick to the pixel holding its lower-left corner.

    Args:
        design: Design to rasterize.
        geometry: Unit-cell geometry.
        resolution: Pixels per side; defaults to one pixel per brick (60
            for the default cell).

    Returns:
        The occupancy grid.
    """
    if resolution is None:
        resolution = round(geometry.cell_side_mm / geometry.brick_size_mm)
    pixel = geometry.cell_side_mm / resolution
    cells = np.zeros((resolution, resolution), dtype=np.uint8)
    for brick in design.bricks:
        row = min(math.floor(brick.y_mm / pixel), resolution - 1)
        col = min(math.floor(brick.x_mm / pixel), resolution - 1)
        cells[row, col] = 1
    return OccupancyGrid(resolution=resolution, cells=cells)


def format_design_line(vector: DesignVector) -> str:
    """Writes a design vector as one line of space-separated decimals.

    Args:
        vector: Design vector.

    Returns:
        The text line.
    """
    return " ".join(repr(float(value)) for value in vector)


def parse_design_line(line: str) -> DesignVector:
    """Reads a line written by `format_design_line`.

    Args:
        line: Text line.

    Raises:
        DesignError: If the line does not hold 72 decimals.

    Returns:
        The design vector.
    """
    try:
        values = np.array([float(token) for token in line.split()])
    except ValueError as error:
        msg = f"malformed design line: {error}"
        raise DesignError(msg) from error
    if values.shape != (DESIGN_DIM,):
        msg = f"expected {DESIGN_DIM} values, found {values.size}"
        raise DesignError(msg)
    return values
