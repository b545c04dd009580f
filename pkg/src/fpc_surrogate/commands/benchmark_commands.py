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
)


@click.command("benchmark", short_help="Compare GAN, CNN and MLP NMSE.")
@dataset_option()
@out_option("JSON NMSE report; histogram CSVs are written beside it.")
@click.option(
    "--steps",
    type=int,
    default=None,
    help="GAN iterations and baseline epochs; overrides the settings.",
)
@config_option
def benchmark(
    dataset_path: Path,
    out: Path,
    steps: int | None,
    config_file: Path | None,
) -> None:
    """Train the three models on one split and write their NMSE.

    Args:
        dataset_path: Dataset to split.
        out: JSON report path.
        steps: Length override applied to every model.
        config_file: Optional TOML settings file.
    """
    settings = run_settings(
        config_file,
        overrides_of(
            gan={"iterations": steps},
            mlp={"epochs": steps},
            cnn={"epochs": steps},
        ),
    )
    dataset = get_dataset_service(settings).load(dataset_path)
    report = get_benchmark_service(settings).benchmark(dataset, out)
    click.echo(f"{'model':<16}{'gain':>10}{'axial':>10}{'return':>10}")
    rows = {**report.models, "mean_predictor": report.mean_predictor}
    for name, scores in rows.items():
        click.echo(
            f"{name:<16}{scores.gain:>10.4f}"
            f"{scores.axial_ratio:>10.4f}{scores.return_loss:>10.4f}",
        )
