from pathlib import Path

import click

from fpc_surrogate.commands.common import (
    config_option,
    dataset_option,
    out_option,
    overrides_of,
    run_settings,
)
from fpc_surrogate.dependencies import (
    get_benchmark_service,
    get_dataset_service,
    get_training_service,
)

steps_option = click.option(
    "--steps",
    type=int,
    default=None,
    help="GAN iterations or baseline epochs; overrides the settings.",
)
seed_option = click.option(
    "--seed",
    type=int,
    default=None,
    help="Training seed; overrides the settings.",
)


@click.command("train", short_help="Train the GAN or a baseline.")
@click.option(
    "--model",
    type=click.Choice(["gan", "mlp", "cnn"]),
    default="gan",
    show_default=True,
)
@dataset_option()
@out_option("Checkpoint; history and summary are written beside it.")
@steps_option
@seed_option
@config_option
def train(  # noqa: PLR0913, PLR0917
    model: str,
    dataset_path: Path,
    out: Path,
    steps: int | None,
    seed: int | None,
    config_file: Path | None,
) -> None:
    """Train one model and write an FPCM v1 checkpoint.

    Args:
        model: ``gan``, ``mlp`` or ``cnn``.
        dataset_path: Training dataset.
        out: Checkpoint path.
        steps: Iteration or epoch override.
        seed: Seed override.
        config_file: Optional TOML settings file.
    """
    length = "iterations" if model == "gan" else "epochs"
    settings = run_settings(
        config_file,
        overrides_of(**{model: {length: steps, "seed": seed}}),
    )
    dataset = get_dataset_service(settings).load(dataset_path)
    summary = get_training_service(model, settings).run(dataset, out)
    click.echo(
        f"{model}: {summary.steps} {length}, "
        f"val_nmse={summary.validation.all:.4f} -> {out}",
    )


@click.command(
    "cross-validate",
    short_help="K-fold cross-validation of the GAN.",
)
@dataset_option()
@click.option("--folds", type=int, default=None, help="Number of folds.")
@out_option("JSON summary of every fold.")
@steps_option
@seed_option
@config_option
def cross_validate(  # noqa: PLR0913, PLR0917
    dataset_path: Path,
    folds: int | None,
    out: Path,
    steps: int | None,
    seed: int | None,
    config_file: Path | None,
) -> None:
    """Train one GAN per fold and write per-fold and mean NMSE.

    Args:
        dataset_path: Dataset to partition.
        folds: Fold count override.
        out: JSON summary path.
        steps: Iteration override.
        seed: Seed override.
        config_file: Optional TOML settings file.
    """
    settings = run_settings(
        config_file,
        overrides_of(
            dataset={"folds": folds},
            gan={"iterations": steps, "seed": seed},
        ),
    )
    dataset = get_dataset_service(settings).load(dataset_path)
    summary = get_benchmark_service(settings).cross_validate(dataset, out)
    for index, fold in enumerate(summary.folds, start=1):
        click.echo(f"fold {index}: nmse={fold.all:.4f}")
    click.echo(f"mean: nmse={summary.mean.all:.4f}")
