"""Closed-form stand-in for the full-wave solver.

The oracle maps a design to axial-ratio, return-loss and gain spectra
through five summary features of the brick layout. Its functional forms are
fixed and versioned by `ORACLE_VERSION`; every file labelled by it records
that version.
"""

import logging
from collections.abc import Iterator
from dataclasses import dataclass
from typing import Self

import numpy as np

from fpc_surrogate.config import ORACLE_VERSION
from fpc_surrogate.design_space import (
    BRICK_COUNT,
    CellGeometry,
    DesignVector,
    UnitCellDesign,
    decode_design,
    encode_design,
    sample_design,
)
from fpc_surrogate.formats import (
    RESPONSE_DIM,
    SEGMENT,
    DatasetPayload,
)
from fpc_surrogate.nn.base import Array
from fpc_surrogate.seeding import child_seed

logger = logging.getLogger(__name__)

ZBW_THRESHOLD_DB = -10.0
AR_THRESHOLD_DB = 5.0


@dataclass(frozen=True, slots=True)
class FrequencyGrid:
    """Uniform frequency grid.

    Attributes:
        f_start_ghz: First frequency.
        f_stop_ghz: Last frequency.
        points: Number of samples, both ends included.
    """

    f_start_ghz: float = 2.0
    f_stop_ghz: float = 3.0
    points: int = SEGMENT

    @property
    def frequencies(self) -> Array:
        """Grid frequencies in GHz."""
        return np.linspace(self.f_start_ghz, self.f_stop_ghz, self.points)


@dataclass(frozen=True, slots=True)
class AntennaResponse:
    """Spectra of one antenna over a frequency grid.

    Attributes:
        axial_ratio_db: Axial ratio, non-negative.
        return_loss_db: Return loss, non-positive.
        gain_dbi: Boresight gain.
    """

    axial_ratio_db: Array
    return_loss_db: Array
    gain_dbi: Array

    def to_vector(self) -> Array:
        """Concatenates the spectra in (AR, RL, gain) order."""
        return np.concatenate(
            [self.axial_ratio_db, self.return_loss_db, self.gain_dbi],
        )

    @classmethod
    def from_vector(cls, vector: Array) -> Self:
        """Splits a response vector into its three spectra.

        Args:
            vector: Concatenated spectra.

        Returns:
            The response.
        """
        axial_ratio, return_loss, gain = np.split(np.asarray(vector), 3)
        return cls(axial_ratio, return_loss, gain)

    def is_physical(self) -> bool:
        """Tells whether the spectra are finite and sign-consistent."""
        vector = self.to_vector()
        return bool(
            np.isfinite(vector).all()
            and (self.axial_ratio_db >= 0).all()
            and (self.return_loss_db <= 0).all(),
        )


@dataclass(frozen=True, slots=True)
class OracleFeatures:
    """Summary of a brick layout that drives the oracle.

    Attributes:
        m_x: Mean x coordinate over the cell side.
        m_y: Mean y coordinate over the cell side.
        asym: Imbalance of bricks above and below the diagonal.
        spread: Spread of slot offsets over the slots per edge.
        fine: Mean of sin(4 pi x / side) sin(4 pi y / side).
    """

    m_x: float
    m_y: float
    asym: float
    spread: float
    fine: float


@dataclass(frozen=True, slots=True)
class DerivedMetrics:
    """Scalar figures of merit of a response.

    Attributes:
        f_res_ghz: Grid frequency of the deepest return loss.
        gain_at_res_dbi: Gain at that frequency.
        zbw_mhz: Contiguous return-loss bandwidth around resonance.
        ar5bw_mhz: Contiguous 5 dB AR bandwidth around the AR minimum.
        ar_min_db: Minimum axial ratio.
    """

    f_res_ghz: float
    gain_at_res_dbi: float
    zbw_mhz: float
    ar5bw_mhz: float
    ar_min_db: float


@dataclass(frozen=True, slots=True)
class NormalizationStats:
    """Per-dimension min-max scaling of responses to [-1, 1].

    Attributes:
        low: Per-dimension minimum over the fitted responses.
        high: Per-dimension maximum over the fitted responses.
    """

    low: Array
    high: Array

    @classmethod
    def fit(cls, responses: Array) -> Self:
        """Computes the statistics of a set of responses.

        Args:
            responses: Matrix of response vectors.

        Returns:
            The statistics.
        """
        return cls(responses.min(axis=0), responses.max(axis=0))

    @property
    def span(self) -> Array:
        """Per-dimension range, with constant dimensions mapped to one."""
        span = self.high - self.low
        return np.where(span > 0, span, 1.0)

    def normalize(self, responses: Array) -> Array:
        """Maps physical responses to the normalized space."""
        return 2.0 * (responses - self.low) / self.span - 1.0

    def denormalize(self, values: Array) -> Array:
        """Maps normalized values back to physical units."""
        return (values + 1.0) / 2.0 * self.span + self.low


@dataclass(slots=True)
class Dataset:
    """Labelled design-response pairs.

    Attributes:
        designs: Design vectors in millimetres, one per row.
        responses: Response vectors, one per row.
        geometry: Geometry the designs were sampled for.
        seed: Master seed.
        oracle_version: Version of the oracle that labelled the pairs.
    """

    designs: Array
    responses: Array
    geometry: CellGeometry
    seed: int
    oracle_version: str = ORACLE_VERSION

    def __len__(self) -> int:
        """Number of entries."""
        return len(self.designs)

    def entries(self) -> Iterator[tuple[DesignVector, Array]]:
        """Iterates over (design vector, response vector) pairs."""
        yield from zip(self.designs, self.responses, strict=True)

    def payload(self) -> DatasetPayload:
        """Content for the FPCD v1 codecs."""
        return DatasetPayload(
            designs=self.designs,
            responses=self.responses,
            oracle_version=self.oracle_version,
            seed=self.seed,
            cell_side_mm=self.geometry.cell_side_mm,
            loop_inset_mm=self.geometry.loop_inset_mm,
        )

    @classmethod
    def from_payload(cls, payload: DatasetPayload) -> Self:
        """Rebuilds a dataset read by the FPCD v1 codecs.

        Args:
            payload: Decoded file content.

        Returns:
            The dataset.
        """
        return cls(
            designs=payload.designs,
            responses=payload.responses,
            geometry=CellGeometry(payload.cell_side_mm, payload.loop_inset_mm),
            seed=payload.seed,
            oracle_version=payload.oracle_version,
        )

    def fingerprint(self) -> str:
        """FNV-1a 64 of the record payload, in hex."""
        return self.payload().fingerprint()


def oracle_features(
    design: UnitCellDesign,
    geometry: CellGeometry,
) -> OracleFeatures:
    """Summarizes a brick layout.

    Args:
        design: Design to summarize.
        geometry: Unit-cell geometry.

    Returns:
        The oracle features.
    """
    side = geometry.cell_side_mm
    x = np.array([brick.x_mm for brick in design.bricks])
    y = np.array([brick.y_mm for brick in design.bricks])
    offsets = np.array([brick.offset_index for brick in design.bricks])
    above = int(np.count_nonzero(y > x))
    below = int(np.count_nonzero(y < x))
    fine = np.sin(4 * np.pi * x / side) * np.sin(4 * np.pi * y / side)
    return OracleFeatures(
        m_x=float(x.mean() / side),
        m_y=float(y.mean() / side),
        asym=abs(above - below) / BRICK_COUNT,
        spread=float(np.clip(offsets.std() / geometry.slots_per_edge, 0, 1)),
        fine=float(fine.sum() / BRICK_COUNT),
    )


def response_from_features(
    features: OracleFeatures,
    grid: FrequencyGrid,
) -> AntennaResponse:
    """Evaluates the closed-form spectra for given features.

    Args:
        features: Layout summary.
        grid: Frequency grid.

    Returns:
        The spectra.
    """
    f = grid.frequencies
    f_r = np.clip(
        2.45
        + 0.2 * (features.m_x + features.m_y - 1)
        + 0.005 * features.fine,
        2.1,
        2.9,
    )
    quality = 20 + 30 * features.spread
    depth = 15 + 10 * (1 - features.asym)
    return_loss = -depth / (1 + ((f - f_r) / (f_r / (2 * quality))) ** 2)
    gain = 3.4 + 6 * (1 - 0.3 * features.asym) / (1 + ((f - f_r) / 0.15) ** 2)
    f_ar = f_r + 0.05 * (features.m_x - features.m_y)
    ar_min = 0.3 + 7 * features.asym
    axial_ratio = ar_min + 25 * ((f - f_ar) / 0.2) ** 2
    return AntennaResponse(axial_ratio, return_loss, gain)


def oracle_evaluate(
    design: UnitCellDesign,
    geometry: CellGeometry,
    grid: FrequencyGrid | None = None,
) -> AntennaResponse:
    """Computes the spectra of a design.

    Args:
        design: Valid design.
        geometry: Unit-cell geometry.
        grid: Frequency grid; defaults to 2-3 GHz in 10 MHz steps.

    Returns:
        The spectra.
    """
    features = oracle_features(design, geometry)
    return response_from_features(features, grid or FrequencyGrid())


def evaluate_vectors(
    vectors: Array,
    geometry: CellGeometry,
    grid: FrequencyGrid | None = None,
) -> Array:
    """Computes response vectors for a matrix of design vectors.

    Args:
        vectors: Design vectors, one per row.
        geometry: Unit-cell geometry.
        grid: Frequency grid.

    Returns:
        Response vectors, one per row.
    """
    return np.array([
        oracle_evaluate(decode_design(v, geometry), geometry, grid).to_vector()
        for v in np.atleast_2d(vectors)
    ]).reshape(-1, RESPONSE_DIM)


def _crossing(
    f: Array,
    values: Array,
    threshold: float,
    outside: int,
    inside: int,
) -> float:
    v_out, v_in = values[outside], values[inside]
    fraction = (threshold - v_out) / (v_in - v_out)
    return float(f[outside] + fraction * (f[inside] - f[outside]))


def band_span_mhz(f: Array, values: Array, threshold: float) -> float:
    """Measures the contiguous band where ``values <= threshold``.

    The band is grown from the minimum of ``values`` in both directions;
    edges are located by linear interpolation of the threshold crossing and
    clipped to the grid.

    Args:
        f: Frequencies in GHz.
        values: Spectrum sampled on ``f``.
        threshold: Band level.

    Returns:
        Band width in MHz, zero if the minimum never reaches the threshold.
    """
    center = int(np.argmin(values))
    if values[center] > threshold:
        return 0.0
    inside = values <= threshold
    left = center
    while left > 0 and inside[left - 1]:
        left -= 1
    right = center
    while right < len(f) - 1 and inside[right + 1]:
        right += 1
    low = (
        float(f[0])
        if left == 0
        else _crossing(f, values, threshold, left - 1, left)
    )
    high = (
        float(f[-1])
        if right == len(f) - 1
        else _crossing(f, values, threshold, right + 1, right)
    )
    return (high - low) * 1000.0


def extract_metrics(
    response: AntennaResponse,
    grid: FrequencyGrid | None = None,
    zbw_threshold_db: float = ZBW_THRESHOLD_DB,
    ar_threshold_db: float = AR_THRESHOLD_DB,
) -> DerivedMetrics:
    """Derives the figures of merit used for ranking.

    Args:
        response: Spectra.
        grid: Frequency grid the spectra are sampled on.
        zbw_threshold_db: Return-loss level of the impedance bandwidth.
        ar_threshold_db: Axial-ratio level of the AR bandwidth.

    Returns:
        The metrics.
    """
    f = (grid or FrequencyGrid()).frequencies
    resonance = int(np.argmin(response.return_loss_db))
    return DerivedMetrics(
        f_res_ghz=float(f[resonance]),
        gain_at_res_dbi=float(response.gain_dbi[resonance]),
        zbw_mhz=band_span_mhz(f, response.return_loss_db, zbw_threshold_db),
        ar5bw_mhz=band_span_mhz(f, response.axial_ratio_db, ar_threshold_db),
        ar_min_db=float(response.axial_ratio_db.min()),
    )


def generate_dataset(
    n: int,
    geometry: CellGeometry,
    seed: int,
    grid: FrequencyGrid | None = None,
) -> Dataset:
    """Samples and labels designs.

    Entry ``i`` is drawn from the child seed ``(seed, i)``, so the result
    does not depend on evaluation order.

    Args:
        n: Number of entries.
        geometry: Unit-cell geometry.
        seed: Master seed.
        grid: Frequency grid.

    Returns:
        The dataset.
    """
    designs = [sample_design(geometry, child_seed(seed, i)) for i in range(n)]
    logger.info("Labelling %d designs with %s", n, ORACLE_VERSION)
    return Dataset(
        designs=np.array([encode_design(d) for d in designs]).reshape(n, -1),
        responses=np.array([
            oracle_evaluate(d, geometry, grid).to_vector() for d in designs
        ]).reshape(n, -1),
        geometry=geometry,
        seed=seed,
    )


def reference_profiles(
    grid: FrequencyGrid | None = None,
) -> dict[str, DerivedMetrics]:
    """Metrics of the two comparison structures the oracle can express.

    ``smooth_prs`` is a loop without roughness (fully one-sided diagonal
    balance: high gain, elliptical polarization); ``balanced_roughness``
    is a layout balanced across the diagonal.

    Args:
        grid: Frequency grid.

    Returns:
        Metrics keyed by profile name.
    """
    profiles = {
        "smooth_prs": OracleFeatures(0.5, 0.5, 1.0, 0.0, 0.0),
        "balanced_roughness": OracleFeatures(0.5, 0.5, 0.0, 0.0, 0.0),
    }
    grid = grid or FrequencyGrid()
    return {
        name: extract_metrics(response_from_features(features, grid), grid)
        for name, features in profiles.items()
    }
