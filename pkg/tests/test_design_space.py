import numpy as np
import pytest
from numpy.testing import assert_array_equal

from fpc_surrogate.design_space import (
    BRICK_COUNT,
    DESIGN_DIM,
    CellGeometry,
    Edge,
    SlotCoordinate,
    UnitCellDesign,
    decode_design,
    denormalize_design,
    encode_design,
    enumerate_slots,
    format_design_line,
    normalize_design,
    parse_design_line,
    rasterize_design,
    rasterize_vectors,
    sample_design,
    validate_design,
)
from fpc_surrogate.exceptions import DesignError


def test_default_geometry_slot_count(geometry):
    slots = enumerate_slots(geometry)

    assert geometry.slots_per_edge == 52
    assert len(slots) == 4 * 52 - 4
    assert len({(s.x_mm, s.y_mm) for s in slots}) == len(slots)


def test_small_geometry_slot_count():
    geometry = CellGeometry(20.0, 2.0)

    assert geometry.slots_per_edge == 32
    assert len(enumerate_slots(geometry)) == 124


def test_corners_belong_to_first_edge(geometry):
    slots = enumerate_slots(geometry)
    end = 2.0 + 51 * 0.5
    owners = {(s.x_mm, s.y_mm): s.edge for s in slots}

    assert owners[2.0, 2.0] is Edge.BOTTOM
    assert owners[end, 2.0] is Edge.BOTTOM
    assert owners[end, end] is Edge.RIGHT
    assert owners[2.0, end] is Edge.TOP


@pytest.mark.parametrize(
    ("side", "inset"),
    [(30.2, 2.0), (30.0, 2.3), (3.0, 1.5)],
)
def test_invalid_geometry_is_rejected(side, inset):
    with pytest.raises(DesignError):
        CellGeometry(side, inset)


def test_sample_design_is_valid_and_seeded(geometry):
    first = sample_design(geometry, 3)

    assert validate_design(first, geometry) == []
    assert len(first.bricks) == BRICK_COUNT
    assert sample_design(geometry, 3) == first
    assert sample_design(geometry, 4) != first


def test_sampled_designs_hold_across_seeds(geometry):
    for seed in range(1000):
        design = sample_design(geometry, seed)
        vector = encode_design(design)

        assert validate_design(design, geometry) == [], seed
        assert decode_design(vector, geometry) == design, seed
        assert_array_equal(encode_design(sample_design(geometry, seed)), vector)


def test_sample_design_needs_enough_slots():
    with pytest.raises(DesignError):
        sample_design(CellGeometry(5.0, 1.0), 0)


def test_validate_design_reports_violations(geometry):
    design = sample_design(geometry, 1)
    duplicated = UnitCellDesign((*design.bricks[:-1], design.bricks[0]))
    stray = SlotCoordinate(Edge.BOTTOM, 0, 0.0, 0.0)

    assert any("duplicate" in v for v in validate_design(duplicated, geometry))
    assert any(
        "not a valid slot" in v
        for v in validate_design(UnitCellDesign.of([stray]), geometry)
    )
    assert any(
        "expected 36" in v
        for v in validate_design(UnitCellDesign(design.bricks[:5]), geometry)
    )
    reversed_design = UnitCellDesign(tuple(reversed(design.bricks)))
    assert "bricks are not in canonical order" in validate_design(
        reversed_design,
        geometry,
    )


def test_encode_decode_round_trip(geometry):
    design = sample_design(geometry, 11)
    vector = encode_design(design)

    assert vector.shape == (DESIGN_DIM,)
    assert decode_design(vector, geometry) == design


def test_decode_snaps_small_perturbations(geometry):
    design = sample_design(geometry, 12)
    noisy = encode_design(design) + 0.2

    assert decode_design(noisy, geometry) == design


def test_decode_rejects_far_points(geometry):
    vector = encode_design(sample_design(geometry, 13))
    vector[0] = 15.0
    vector[1] = 15.0

    with pytest.raises(DesignError, match="tolerance"):
        decode_design(vector, geometry)


def test_decode_rejects_collisions(geometry):
    vector = encode_design(sample_design(geometry, 14))
    vector[2:4] = vector[0:2]

    with pytest.raises(DesignError, match="same slot"):
        decode_design(vector, geometry)


def test_decode_rejects_wrong_length(geometry):
    with pytest.raises(DesignError):
        decode_design(np.zeros(70), geometry)


def test_normalization_is_invertible(geometry):
    vector = encode_design(sample_design(geometry, 5))
    scaled = normalize_design(vector, geometry)

    assert scaled.min() >= 0.0
    assert scaled.max() <= 1.0
    np.testing.assert_allclose(denormalize_design(scaled, geometry), vector)


def test_rasterize_marks_every_brick(geometry):
    design = sample_design(geometry, 6)
    grid = rasterize_design(design, geometry)

    assert grid.resolution == 60
    assert int(grid.cells.sum()) == BRICK_COUNT
    assert_array_equal(
        rasterize_vectors(encode_design(design), geometry, 60)[0],
        grid.cells,
    )


def test_design_line_round_trip(geometry):
    vector = encode_design(sample_design(geometry, 8))

    assert_array_equal(parse_design_line(format_design_line(vector)), vector)


def test_parse_design_line_rejects_garbage():
    with pytest.raises(DesignError):
        parse_design_line("1.0 2.0 nope")
    with pytest.raises(DesignError):
        parse_design_line("1.0 2.0")
