"""Conditional GAN surrogate of the design-to-spectra map.

The generator maps ``noise || design`` to normalized spectra; the critic
scores ``spectra || design`` pairs (or spectra alone when unconditional).
Responses are min-max scaled to [-1, 1] with training-split statistics and
designs are divided by the cell side.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal, Self

import numpy as np
from numpy.typing import NDArray

from fpc_surrogate.config import VALIDATION_FRACTION, GanTrainingConfig
from fpc_surrogate.design_space import (
    DESIGN_DIM,
    CellGeometry,
    normalize_design,
)
from fpc_surrogate.exceptions import NumericalError, UsageError
from fpc_surrogate.formats import RESPONSE_DIM, fnv1a_64
from fpc_surrogate.metrics import Segment, segment_nmse
from fpc_surrogate.nn.base import ActivationKind, Array, Mode
from fpc_surrogate.nn.network import Network, init_network
from fpc_surrogate.nn.optim import AdamState, adam_step
from fpc_surrogate.oracle import Dataset, NormalizationStats
from fpc_surrogate.seeding import child_seed, make_rng

logger = logging.getLogger(__name__)

NOISE_DIM = 100
GENERATOR_HIDDEN = (128, 256, 512)
CRITIC_HIDDEN = (512, 256)
LOG_FLOOR = 1e-12

GENERATOR_KEY = 1
CRITIC_KEY = 2
BATCH_KEY = 3

type Indices = NDArray[np.int64]
type BatchHook = Callable[[int, Indices], None]


@dataclass(frozen=True, slots=True)
class Split:
    """Partition of dataset indices.

    Attributes:
        train: Sorted training indices.
        validation: Sorted validation indices.
    """

    train: Indices
    validation: Indices

    def fingerprint(self) -> str:
        """FNV-1a 64 of both index lists, in hex."""
        data = self.train.astype("<i8").tobytes() + b"|"
        data += self.validation.astype("<i8").tobytes()
        return f"{fnv1a_64(data):016x}"


def split_indices(n: int, validation_fraction: float, seed: int) -> Split:
    """Draws a seeded train/validation partition.

    Args:
        n: Dataset size.
        validation_fraction: Share of entries held out.
        seed: Permutation seed.

    Raises:
        UsageError: If either side of the split would be empty.

    Returns:
        The split; 300 entries at 0.1 give 270 and 30.
    """
    held_out = round(n * validation_fraction)
    if not 0 < held_out < n:
        msg = f"cannot hold out {validation_fraction:.0%} of {n} entries"
        raise UsageError(msg)
    order = make_rng(seed).permutation(n)
    return Split(np.sort(order[held_out:]), np.sort(order[:held_out]))


def kfold_indices(n: int, folds: int, seed: int) -> list[Split]:
    """Partitions a seeded shuffle into ``folds`` validation folds.

    Args:
        n: Dataset size.
        folds: Number of folds.
        seed: Shuffle seed.

    Raises:
        UsageError: If a fold would be empty.

    Returns:
        One split per fold; every index validates in exactly one fold.
    """
    if not 2 <= folds <= n:  # noqa: PLR2004
        msg = f"cannot cut {n} entries into {folds} folds"
        raise UsageError(msg)
    order = make_rng(seed).permutation(n)
    splits = []
    for chunk in np.array_split(order, folds):
        mask = np.ones(n, dtype=bool)
        mask[chunk] = False
        splits.append(Split(np.flatnonzero(mask), np.sort(chunk)))
    return splits


@dataclass(frozen=True, slots=True)
class TrainingData:
    """Split dataset in the units the networks consume.

    Attributes:
        split: Index partition.
        stats: Response statistics of the training entries.
        geometry: Geometry used to scale designs.
        train_inputs: Scaled training designs.
        train_targets: Normalized training responses.
        val_designs: Validation designs in millimetres.
        val_responses: Validation responses in physical units.
    """

    split: Split
    stats: NormalizationStats
    geometry: CellGeometry
    train_inputs: Array
    train_targets: Array
    val_designs: Array
    val_responses: Array

    @classmethod
    def prepare(cls, dataset: Dataset, split: Split) -> Self:
        """Scales a dataset with statistics of its training entries.

        Args:
            dataset: Labelled pairs.
            split: Partition of ``dataset``.

        Returns:
            The prepared data.
        """
        stats = NormalizationStats.fit(dataset.responses[split.train])
        return cls(
            split=split,
            stats=stats,
            geometry=dataset.geometry,
            train_inputs=normalize_design(
                dataset.designs[split.train],
                dataset.geometry,
            ),
            train_targets=stats.normalize(dataset.responses[split.train]),
            val_designs=dataset.designs[split.validation],
            val_responses=dataset.responses[split.validation],
        )

    def fingerprint(self) -> str:
        """Identifies the split and the statistics together."""
        data = self.split.fingerprint().encode()
        data += self.stats.low.astype("<f8").tobytes()
        data += self.stats.high.astype("<f8").tobytes()
        return f"{fnv1a_64(data):016x}"


@dataclass(frozen=True, slots=True)
class PredictionPolicy:
    """How the generator's noise input is chosen at prediction time.

    Attributes:
        kind: ``fixed_zero`` feeds zeros; ``average`` averages ``draws``
            standard-normal draws from ``seed``.
        draws: Number of averaged draws.
        seed: Seed of the draws.
    """

    kind: Literal["fixed_zero", "average"] = "average"
    draws: int = 8
    seed: int = 0

    @classmethod
    def fixed_zero(cls) -> Self:
        """Zero-noise policy."""
        return cls(kind="fixed_zero", draws=1)

    @classmethod
    def average(cls, draws: int, seed: int) -> Self:
        """Noise-averaging policy."""
        if draws < 1:
            msg = "at least one noise draw is required"
            raise UsageError(msg)
        return cls(kind="average", draws=draws, seed=seed)

    def noise(self) -> Array:
        """Noise rows, one per draw."""
        if self.kind == "fixed_zero":
            return np.zeros((1, NOISE_DIM))
        return make_rng(self.seed).standard_normal((self.draws, NOISE_DIM))


def build_generator(config: GanTrainingConfig, seed: int) -> Network:
    """Builds the 172-128-256-512-303 generator.

    Args:
        config: Training configuration.
        seed: Initialization seed.

    Returns:
        The generator; hidden blocks normalize and use LeakyReLU, the output
        is linear.
    """
    hidden = len(GENERATOR_HIDDEN)
    return init_network(
        [NOISE_DIM + DESIGN_DIM, *GENERATOR_HIDDEN, RESPONSE_DIM],
        [ActivationKind.LEAKY_RELU] * hidden + [ActivationKind.IDENTITY],
        [True] * hidden + [False],
        seed,
        kind="generator",
        leaky_slope=config.leaky_slope,
        bn_momentum=config.bn_momentum,
    )


def build_critic(config: GanTrainingConfig, seed: int) -> Network:
    """Builds the 375-512-256-1 critic (303 wide when unconditional).

    Args:
        config: Training configuration.
        seed: Initialization seed.

    Returns:
        The critic with a sigmoid output and no batch normalization.
    """
    width = RESPONSE_DIM + (DESIGN_DIM if config.conditional_critic else 0)
    hidden = len(CRITIC_HIDDEN)
    return init_network(
        [width, *CRITIC_HIDDEN, 1],
        [ActivationKind.LEAKY_RELU] * hidden + [ActivationKind.SIGMOID],
        [False] * (hidden + 1),
        seed,
        kind="critic",
        leaky_slope=config.leaky_slope,
        bn_momentum=config.bn_momentum,
    )


def _critic_input(critic: Network, responses: Array, designs: Array) -> Array:
    if critic.in_dim == RESPONSE_DIM:
        return responses
    return np.hstack([responses, designs])


def generator_predict(
    generator: Network,
    designs: Array,
    stats: NormalizationStats | None,
    policy: PredictionPolicy,
    geometry: CellGeometry,
) -> Array:
    """Predicts physical spectra with an Infer-mode generator.

    The same noise rows are shared by every design of the batch.

    Args:
        generator: Trained generator.
        designs: Design vector or matrix of design vectors, in millimetres.
        stats: Response statistics of the training data.
        policy: Noise policy.
        geometry: Geometry used to scale designs.

    Raises:
        UsageError: If ``stats`` is missing.

    Returns:
        Response vectors, one row per design.
    """
    if stats is None:
        msg = "normalization statistics are required for prediction"
        raise UsageError(msg)
    inputs = normalize_design(np.atleast_2d(designs), geometry)
    total = np.zeros((len(inputs), RESPONSE_DIM))
    noise = policy.noise()
    for row in noise:
        batch = np.hstack([np.tile(row, (len(inputs), 1)), inputs])
        out, _ = generator.forward(batch, Mode.INFER)
        total += out
    return stats.denormalize(total / len(noise))


def critic_score(critic: Network, response: Array, design: Array) -> float:
    """Scores one normalized (response, scaled design) pair.

    Args:
        critic: Critic network.
        response: Normalized response vector.
        design: Scaled design vector; ignored by an unconditional critic.

    Returns:
        Probability that the pair is real.
    """
    batch = _critic_input(
        critic,
        np.atleast_2d(response),
        np.atleast_2d(design),
    )
    out, _ = critic.forward(batch, Mode.INFER)
    return float(out[0, 0])


def critic_loss(s_real: Array, s_fake: Array) -> float:
    """Mean of ``-log s_real - log(1 - s_fake)``, clamped away from log 0."""
    return float(
        np.mean(
            -np.log(np.maximum(s_real, LOG_FLOOR))
            - np.log(np.maximum(1.0 - s_fake, LOG_FLOOR)),
        ),
    )


@dataclass(slots=True)
class GanState:
    """Networks and optimizer states mutated by training.

    Attributes:
        generator: Generator network.
        critic: Critic network.
        generator_opt: Generator optimizer state.
        critic_opt: Critic optimizer state.
    """

    generator: Network
    critic: Network
    generator_opt: AdamState
    critic_opt: AdamState

    @classmethod
    def initial(cls, config: GanTrainingConfig) -> Self:
        """Builds freshly initialized networks for a configuration."""
        generator = build_generator(
            config,
            child_seed(config.seed, GENERATOR_KEY),
        )
        critic = build_critic(config, child_seed(config.seed, CRITIC_KEY))
        return cls(
            generator=generator,
            critic=critic,
            generator_opt=AdamState.for_model(
                generator,
                config.lr,
                config.weight_decay,
                config.regularization,
            ),
            critic_opt=AdamState.for_model(
                critic,
                config.lr,
                config.weight_decay,
                config.regularization,
            ),
        )


@dataclass(frozen=True, slots=True)
class StepLosses:
    """Losses of one training iteration.

    Attributes:
        generator: Generator loss, with the content term when weighted.
        critic: Critic loss of the last critic update.
    """

    generator: float
    critic: float


def _critic_update(
    state: GanState,
    inputs: Array,
    targets: Array,
    rng: np.random.Generator,
) -> float:
    batch = len(inputs)
    noise = rng.standard_normal((batch, NOISE_DIM))
    fake, _ = state.generator.forward(
        np.hstack([noise, inputs]),
        Mode.TRAIN,
        track_running_stats=False,
    )
    critic = state.critic
    s_real, real_cache = critic.forward(
        _critic_input(critic, targets, inputs),
        Mode.TRAIN,
    )
    s_fake, fake_cache = critic.forward(
        _critic_input(critic, fake, inputs),
        Mode.TRAIN,
    )
    loss = critic_loss(s_real, s_fake)
    grad_real = -1.0 / (batch * np.maximum(s_real, LOG_FLOOR))
    grad_fake = 1.0 / (batch * np.maximum(1.0 - s_fake, LOG_FLOOR))
    real_grads, _ = critic.backward(real_cache, grad_real)
    fake_grads, _ = critic.backward(fake_cache, grad_fake)
    adam_step(
        critic,
        {name: real_grads[name] + fake_grads[name] for name in real_grads},
        state.critic_opt,
    )
    return loss


def _generator_update(
    state: GanState,
    inputs: Array,
    targets: Array,
    rng: np.random.Generator,
    content_weight: float,
) -> float:
    batch = len(inputs)
    noise = rng.standard_normal((batch, NOISE_DIM))
    fake, gen_cache = state.generator.forward(
        np.hstack([noise, inputs]),
        Mode.TRAIN,
    )
    s_fake, critic_cache = state.critic.forward(
        _critic_input(state.critic, fake, inputs),
        Mode.TRAIN,
    )
    diff = fake - targets
    loss = float(np.mean(-np.log(np.maximum(s_fake, LOG_FLOOR))))
    loss += content_weight * float(np.mean(diff * diff))
    grad_score = -1.0 / (batch * np.maximum(s_fake, LOG_FLOOR))
    _, grad_input = state.critic.backward(critic_cache, grad_score)
    grad_fake = grad_input[:, :RESPONSE_DIM]
    grad_fake = grad_fake + 2.0 * content_weight * diff / diff.size
    grads, _ = state.generator.backward(gen_cache, grad_fake)
    adam_step(state.generator, grads, state.generator_opt)
    return loss


def gan_train_step(  # noqa: PLR0913
    state: GanState,
    inputs: Array,
    targets: Array,
    rng: np.random.Generator,
    config: GanTrainingConfig,
    *,
    iteration: int = 0,
    batch_seed: int = 0,
) -> StepLosses:
    """Runs the critic updates, then one generator update.

    Each update holds the other network fixed. The critic maximizes
    ``log C(y|x) + log(1 - C(G(z|x)|x))``; the generator minimizes the
    non-saturating ``-log C(G(z|x)|x)`` plus the optional content term.

    Args:
        state: Networks and optimizer states, updated in place.
        inputs: Scaled designs of the batch.
        targets: Normalized responses of the batch.
        rng: Source of the noise draws.
        config: Training configuration.
        iteration: Iteration number, for diagnostics.
        batch_seed: Seed of the batch, for diagnostics.

    Raises:
        NumericalError: If a loss is not finite.

    Returns:
        The losses.
    """
    c_loss = 0.0
    for _ in range(config.critic_steps_per_gen_step):
        c_loss = _critic_update(state, inputs, targets, rng)
        if not np.isfinite(c_loss):
            msg = "critic loss is not finite"
            raise NumericalError(msg, iteration, batch_seed)
    g_loss = _generator_update(
        state,
        inputs,
        targets,
        rng,
        config.content_weight,
    )
    if not np.isfinite(g_loss):
        msg = "generator loss is not finite"
        raise NumericalError(msg, iteration, batch_seed)
    return StepLosses(generator=g_loss, critic=c_loss)


@dataclass(slots=True)
class TrainingHistory:
    """Losses per iteration and periodic validation snapshots.

    Attributes:
        generator_loss: Generator loss of every iteration.
        critic_loss: Critic loss of every iteration.
        snapshots: Validation NMSE by segment, keyed by iteration number
            (one-based).
    """

    generator_loss: list[float] = field(default_factory=list)
    critic_loss: list[float] = field(default_factory=list)
    snapshots: dict[int, dict[Segment, float]] = field(default_factory=dict)

    def __len__(self) -> int:
        """Number of recorded iterations."""
        return len(self.generator_loss)

    def rows(self) -> list[dict[str, float | None]]:
        """One CSV row per iteration, empty NMSE between snapshots."""
        rows = []
        for index, (g_loss, c_loss) in enumerate(
            zip(self.generator_loss, self.critic_loss, strict=True),
            start=1,
        ):
            snap = self.snapshots.get(index, {})
            rows.append({
                "iter": index,
                "gen_loss": g_loss,
                "critic_loss": c_loss,
                "val_nmse_ar": snap.get(Segment.AR),
                "val_nmse_rl": snap.get(Segment.RL),
                "val_nmse_gain": snap.get(Segment.GAIN),
            })
        return rows


@dataclass(frozen=True, slots=True)
class GanSurrogate:
    """Generator packaged for prediction in physical units.

    Attributes:
        generator: Trained generator.
        stats: Response statistics of its training data.
        geometry: Geometry used to scale designs.
        policy: Noise policy.
    """

    generator: Network
    stats: NormalizationStats
    geometry: CellGeometry
    policy: PredictionPolicy

    def predict(self, designs: Array) -> Array:
        """Predicts physical spectra for design vectors in millimetres."""
        return generator_predict(
            self.generator,
            designs,
            self.stats,
            self.policy,
            self.geometry,
        )


@dataclass(slots=True)
class GanResult:
    """Trained GAN with everything needed to predict.

    Attributes:
        generator: Trained generator.
        critic: Trained critic.
        history: Training history.
        data: Prepared data the networks were trained on.
        config: Training configuration.
    """

    generator: Network
    critic: Network
    history: TrainingHistory
    data: TrainingData
    config: GanTrainingConfig

    def surrogate(self, policy: PredictionPolicy | None = None) -> GanSurrogate:
        """Packages the generator; defaults to the configured noise policy.

        Args:
            policy: Noise policy override.

        Returns:
            The surrogate.
        """
        default = PredictionPolicy.average(
            self.config.prediction_noise_draws,
            self.config.seed,
        )
        return GanSurrogate(
            self.generator,
            self.data.stats,
            self.data.geometry,
            policy or default,
        )

    def predict(self, designs: Array) -> Array:
        """Predicts physical spectra with the configured noise policy."""
        return self.surrogate().predict(designs)

    def validation_nmse(self) -> dict[Segment, float]:
        """NMSE of the validation entries by segment."""
        return segment_nmse(
            self.data.val_responses,
            self.predict(self.data.val_designs),
        )


def check_trainable(dataset: Dataset, batch_size: int) -> None:
    """Rejects datasets too small to draw training batches from.

    Args:
        dataset: Labelled pairs.
        batch_size: Pairs per batch.

    Raises:
        UsageError: If the dataset holds fewer than two batches.
    """
    if len(dataset) < 2 * batch_size:
        msg = (
            f"dataset has {len(dataset)} entries, training needs at least "
            f"{2 * batch_size}"
        )
        raise UsageError(msg)


def train_gan(
    dataset: Dataset,
    config: GanTrainingConfig,
    *,
    split: Split | None = None,
    validation_fraction: float = VALIDATION_FRACTION,
    on_batch: BatchHook | None = None,
) -> GanResult:
    """Trains the generator and critic adversarially.

    Batches are drawn with replacement from the training split; iteration
    ``i`` uses the child seed ``(config.seed, BATCH_KEY, i)`` for both the
    batch choice and the noise, so a run is reproducible from its seed.

    Args:
        dataset: Labelled pairs.
        config: Training configuration.
        split: Partition to use; defaults to a split seeded by the dataset
            seed.
        validation_fraction: Share held out when ``split`` is not given.
        on_batch: Called with the iteration and the dataset indices of every
            batch.

    Returns:
        The trained networks, history and prepared data.
    """
    check_trainable(dataset, config.batch_size)
    split = split or split_indices(
        len(dataset),
        validation_fraction,
        dataset.seed,
    )
    data = TrainingData.prepare(dataset, split)
    state = GanState.initial(config)
    history = TrainingHistory()
    result = GanResult(
        state.generator,
        state.critic,
        history,
        data,
        config,
    )
    for iteration in range(1, config.iterations + 1):
        batch_seed = child_seed(config.seed, BATCH_KEY, iteration)
        rng = make_rng(batch_seed)
        rows = rng.integers(0, len(split.train), size=config.batch_size)
        if on_batch is not None:
            on_batch(iteration, split.train[rows])
        losses = gan_train_step(
            state,
            data.train_inputs[rows],
            data.train_targets[rows],
            rng,
            config,
            iteration=iteration,
            batch_seed=batch_seed,
        )
        history.generator_loss.append(losses.generator)
        history.critic_loss.append(losses.critic)
        if (
            iteration % config.snapshot_every == 0
            or iteration == config.iterations
        ):
            snapshot = result.validation_nmse()
            history.snapshots[iteration] = snapshot
            logger.info(
                "iter %d: gen_loss=%.4f critic_loss=%.4f val_nmse=%.4f",
                iteration,
                losses.generator,
                losses.critic,
                snapshot[Segment.ALL],
            )
    return result


@dataclass(frozen=True, slots=True)
class CrossValidationReport:
    """NMSE of every fold and their mean.

    Attributes:
        folds: Validation NMSE by segment, one mapping per fold.
        mean: Mean over folds by segment.
    """

    folds: list[dict[Segment, float]]
    mean: dict[Segment, float]


def cross_validate(
    dataset: Dataset,
    folds: int,
    config: GanTrainingConfig,
    seed: int | None = None,
) -> CrossValidationReport:
    """Trains one GAN per fold with fold-local normalization.

    Args:
        dataset: Labelled pairs.
        folds: Number of folds.
        config: Training configuration.
        seed: Shuffle seed; defaults to the dataset seed.

    Returns:
        Per-fold and mean NMSE by segment.
    """
    scores = []
    shuffle_seed = dataset.seed if seed is None else seed
    splits = kfold_indices(len(dataset), folds, shuffle_seed)
    for index, split in enumerate(splits):
        result = train_gan(dataset, config, split=split)
        scores.append(result.validation_nmse())
        logger.info(
            "fold %d/%d: nmse=%.4f",
            index + 1,
            folds,
            scores[-1][Segment.ALL],
        )
    mean = {
        segment: float(np.mean([score[segment] for score in scores]))
        for segment in Segment
    }
    return CrossValidationReport(scores, mean)
