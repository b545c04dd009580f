import click

from fpc_surrogate import __version__
from fpc_surrogate.commands import (
    benchmark,
    cross_validate,
    export_spectra,
    gen_dataset,
    gradcheck,
    schemas,
    screen,
    train,
)

PROG_NAME = "fpc-surrogate"


def cli_factory() -> click.Group:
    """Command-line application factory.

    Returns:
        Click group with every command registered.
    """

    @click.group(
        name=PROG_NAME,
        help="GAN surrogate design screening for FPC antennas.",
    )
    @click.version_option(__version__, prog_name=PROG_NAME)
    @click.option(
        "--log-level",
        type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]),
        default=None,
        help="Overrides the configured logging level.",
    )
    @click.pass_context
    def cli(ctx: click.Context, log_level: str | None) -> None:
        ctx.ensure_object(dict)["log_level"] = log_level

    cli.add_command(gen_dataset)
    cli.add_command(train)
    cli.add_command(cross_validate)
    cli.add_command(benchmark)
    cli.add_command(screen)
    cli.add_command(export_spectra)
    cli.add_command(gradcheck)
    cli.add_command(schemas)

    return cli
