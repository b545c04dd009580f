"""Regression baselines and the NMSE benchmark.

The MLP and CNN consume the same split and response statistics as the GAN
and are fitted by minibatch mean-squared-error regression with Adam.
"""

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from fpc_surrogate.config import (
    VALIDATION_FRACTION,
    BaselineTrainingConfig,
    GanTrainingConfig,
)
from fpc_surrogate.design_space import (
    DESIGN_DIM,
    normalize_design,
    rasterize_vectors,
)
from fpc_surrogate.exceptions import NumericalError, UsageError
from fpc_surrogate.formats import RESPONSE_DIM
from fpc_surrogate.gan import (
    BATCH_KEY,
    Split,
    TrainingData,
    check_trainable,
    split_indices,
    train_gan,
)
from fpc_surrogate.metrics import Segment, mean_predictor, segment_nmse
from fpc_surrogate.nn.base import ActivationKind, Array, Mode, Model
from fpc_surrogate.nn.conv import ConvNet, init_convnet
from fpc_surrogate.nn.network import Network, init_network
from fpc_surrogate.nn.optim import AdamState, adam_step
from fpc_surrogate.oracle import Dataset
from fpc_surrogate.schemas import NmseReport, SegmentScores
from fpc_surrogate.seeding import child_seed, make_rng

logger = logging.getLogger(__name__)

MLP_HIDDEN = (256, 256)
CNN_RESOLUTION = 60
CNN_CHANNELS = (8, 16)
CNN_HIDDEN = 256

type BaselineKind = Literal["mlp", "cnn"]


def build_mlp(seed: int, leaky_slope: float = 0.2) -> Network:
    """Builds the 72-256-256-303 MLP."""
    return init_network(
        [DESIGN_DIM, *MLP_HIDDEN, RESPONSE_DIM],
        [ActivationKind.LEAKY_RELU] * len(MLP_HIDDEN)
        + [ActivationKind.IDENTITY],
        [False] * (len(MLP_HIDDEN) + 1),
        seed,
        kind="mlp",
        leaky_slope=leaky_slope,
    )


def build_cnn(seed: int, leaky_slope: float = 0.2) -> ConvNet:
    """Builds the CNN over 60x60 occupancy grids.

    Two 3x3 convolution blocks with 8 and 16 maps, each max-pooled 2x2,
    flatten to 16 * 15 * 15 = 3600 features, then dense 256 and 303.
    """
    return init_convnet(
        CNN_RESOLUTION,
        CNN_CHANNELS,
        (CNN_HIDDEN, RESPONSE_DIM),
        seed,
        leaky_slope=leaky_slope,
    )


@dataclass(slots=True)
class BaselineResult:
    """Trained regression baseline.

    Attributes:
        kind: ``mlp`` or ``cnn``.
        model: Trained model.
        data: Prepared data the model was trained on.
        config: Training configuration.
        train_loss: Mean training MSE of every epoch, normalized units.
    """

    kind: BaselineKind
    model: Network | ConvNet
    data: TrainingData
    config: BaselineTrainingConfig
    train_loss: list[float] = field(default_factory=list)

    def inputs(self, designs: Array) -> Array:
        """Model inputs for design vectors in millimetres."""
        designs = np.atleast_2d(designs)
        if self.kind == "cnn":
            return rasterize_vectors(
                designs,
                self.data.geometry,
                CNN_RESOLUTION,
            )
        return normalize_design(designs, self.data.geometry)

    def predict(self, designs: Array) -> Array:
        """Predicts physical spectra, one row per design."""
        out, _ = self.model.forward(self.inputs(designs), Mode.INFER)
        return self.data.stats.denormalize(out)

    def validation_nmse(self) -> dict[Segment, float]:
        """NMSE of the validation entries by segment."""
        return segment_nmse(
            self.data.val_responses,
            self.predict(self.data.val_designs),
        )


def _fit(
    result: BaselineResult,
    inputs: Array,
    targets: Array,
) -> BaselineResult:
    config = result.config
    model: Model = result.model
    state = AdamState.for_model(model, config.lr, config.weight_decay)
    for epoch in range(1, config.epochs + 1):
        batch_seed = child_seed(config.seed, BATCH_KEY, epoch)
        order = make_rng(batch_seed).permutation(len(inputs))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            rows = order[start : start + config.batch_size]
            out, cache = model.forward(inputs[rows], Mode.TRAIN)
            diff = out - targets[rows]
            loss = float(np.mean(diff * diff))
            if not np.isfinite(loss):
                msg = f"{result.kind} training loss is not finite"
                raise NumericalError(msg, epoch, batch_seed)
            grads, _ = model.backward(cache, 2.0 * diff / diff.size)
            adam_step(model, grads, state)
            total += loss * len(rows)
        result.train_loss.append(total / len(order))
        if epoch % 100 == 0 or epoch == config.epochs:
            logger.info(
                "%s epoch %d: train_mse=%.5f",
                result.kind,
                epoch,
                result.train_loss[-1],
            )
    return result


def _train(
    kind: BaselineKind,
    dataset: Dataset,
    config: BaselineTrainingConfig,
    split: Split | None,
    validation_fraction: float,
) -> BaselineResult:
    check_trainable(dataset, config.batch_size)
    split = split or split_indices(
        len(dataset),
        validation_fraction,
        dataset.seed,
    )
    data = TrainingData.prepare(dataset, split)
    seed = child_seed(config.seed, 1)
    model = build_cnn(seed) if kind == "cnn" else build_mlp(seed)
    result = BaselineResult(kind, model, data, config)
    train_designs = dataset.designs[split.train]
    return _fit(result, result.inputs(train_designs), data.train_targets)


def train_mlp(
    dataset: Dataset,
    config: BaselineTrainingConfig,
    *,
    split: Split | None = None,
    validation_fraction: float = VALIDATION_FRACTION,
) -> BaselineResult:
    """Fits the MLP on scaled design vectors.

    Args:
        dataset: Labelled pairs.
        config: Training configuration.
        split: Partition to use; defaults to a split seeded by the dataset
            seed.
        validation_fraction: Share held out when ``split`` is not given.

    Returns:
        The trained baseline.
    """
    return _train("mlp", dataset, config, split, validation_fraction)


def train_cnn(
    dataset: Dataset,
    config: BaselineTrainingConfig,
    *,
    split: Split | None = None,
    validation_fraction: float = VALIDATION_FRACTION,
) -> BaselineResult:
    """Fits the CNN on 60x60 occupancy grids.

    Args:
        dataset: Labelled pairs.
        config: Training configuration.
        split: Partition to use; defaults to a split seeded by the dataset
            seed.
        validation_fraction: Share held out when ``split`` is not given.

    Returns:
        The trained baseline.
    """
    return _train("cnn", dataset, config, split, validation_fraction)


def benchmark_models(
    dataset: Dataset,
    gan_config: GanTrainingConfig,
    mlp_config: BaselineTrainingConfig,
    cnn_config: BaselineTrainingConfig,
    *,
    validation_fraction: float = VALIDATION_FRACTION,
) -> NmseReport:
    """Trains the GAN, CNN and MLP on one split and compares their NMSE.

    Args:
        dataset: Labelled pairs.
        gan_config: GAN configuration.
        mlp_config: MLP configuration.
        cnn_config: CNN configuration.
        validation_fraction: Share of entries held out.

    Raises:
        UsageError: If the models saw different data pipelines.

    Returns:
        Validation NMSE by model and segment, with the mean predictor as
        reference.
    """
    split = split_indices(len(dataset), validation_fraction, dataset.seed)
    gan = train_gan(dataset, gan_config, split=split)
    cnn = train_cnn(dataset, cnn_config, split=split)
    mlp = train_mlp(dataset, mlp_config, split=split)
    fingerprints = {
        gan.data.fingerprint(),
        cnn.data.fingerprint(),
        mlp.data.fingerprint(),
    }
    if len(fingerprints) != 1:
        msg = "models were trained on different data pipelines"
        raise UsageError(msg)
    baseline = mean_predictor(
        dataset.responses[split.train],
        len(split.validation),
    )
    return NmseReport(
        models={
            "gan": SegmentScores.of(gan.validation_nmse()),
            "cnn": SegmentScores.of(cnn.validation_nmse()),
            "mlp": SegmentScores.of(mlp.validation_nmse()),
        },
        mean_predictor=SegmentScores.of(
            segment_nmse(gan.data.val_responses, baseline),
        ),
        dataset_fingerprint=dataset.fingerprint(),
        pipeline_fingerprint=fingerprints.pop(),
        oracle_version=dataset.oracle_version,
        seeds={
            "dataset": dataset.seed,
            "gan": gan_config.seed,
            "cnn": cnn_config.seed,
            "mlp": mlp_config.seed,
        },
    )
