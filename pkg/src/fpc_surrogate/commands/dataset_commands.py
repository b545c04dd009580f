from pathlib import Path

import click

from fpc_surrogate.commands.common import (
    config_option,
    out_option,
    overrides_of,
    run_settings,
)
from fpc_surrogate.dependencies import get_dataset_service
from fpc_surrogate.design_space import CellGeometry
from fpc_surrogate.exceptions import UsageError


@click.command(
    "gen-dataset",
    short_help="Sample and label designs with the oracle.",
)
@click.option("--n", "n", type=int, default=None, help="Number of entries.")
@click.option("--seed", type=int, default=None, help="Master seed.")
@click.option(
    "--geometry",
    type=(float, float),
    default=None,
    metavar="SIDE INSET",
    help="Cell side and loop inset in millimetres.",
)
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["bin", "csv"]),
    default=None,
    help="File form; defaults to the form implied by the suffix.",
)
@out_option("Dataset file; a .csv suffix selects the text form.")
@config_option
def gen_dataset(  # noqa: PLR0913, PLR0917
    n: int | None,
    seed: int | None,
    geometry: tuple[float, float] | None,
    fmt: str | None,
    out: Path,
    config_file: Path | None,
) -> None:
    """Write an FPCD v1 dataset and print its fingerprint.

    Args:
        n: Number of entries; defaults to the configured size.
        seed: Master seed; defaults to the configured seed.
        geometry: Cell side and loop inset.
        fmt: Requested file form.
        out: Destination file.
        config_file: Optional TOML settings file.

    Raises:
        UsageError: If the requested form contradicts the suffix.
    """
    if fmt is not None and (fmt == "csv") != (out.suffix == ".csv"):
        msg = f"--format {fmt} does not match the suffix of {out}"
        raise UsageError(msg)
    settings = run_settings(
        config_file,
        overrides_of(dataset={"seed": seed}),
    )
    service = get_dataset_service(settings)
    dataset = service.generate(
        settings.dataset.size if n is None else n,
        settings.dataset.seed,
        CellGeometry(*geometry) if geometry else None,
    )
    click.echo(service.save(dataset, out))
