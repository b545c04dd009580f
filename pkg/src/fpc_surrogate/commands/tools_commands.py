import json
from pathlib import Path

import click

from fpc_surrogate.commands.common import config_option, run_settings
from fpc_surrogate.dependencies import (
    get_gradcheck_service,
    get_spectra_service,
)
from fpc_surrogate.repositories import ReportRepository
from fpc_surrogate.schemas import REPORT_SCHEMAS, GradCheckModel
from fpc_surrogate.services import GRADCHECK_ARCHS


@click.command("export-spectra", short_help="Write spectra for plotting.")
@click.option(
    "--checkpoint",
    type=click.Path(path_type=Path, dir_okay=False),
    default=None,
    help="Generator checkpoint for the surrogate curves.",
)
@click.option(
    "--oracle",
    is_flag=True,
    default=False,
    help="Add the oracle curves.",
)
@click.option(
    "--design-file",
    type=click.Path(path_type=Path, dir_okay=False),
    required=True,
    help="One design vector of 72 decimals per line.",
)
@click.option(
    "--out",
    type=click.Path(path_type=Path, dir_okay=False),
    required=True,
    help="CSV with columns freq_ghz,ar_db,rl_db,gain_dbi,source.",
)
@config_option
def export_spectra(
    checkpoint: Path | None,
    oracle: bool,  # noqa: FBT001
    design_file: Path,
    out: Path,
    config_file: Path | None,
) -> None:
    """Write the surrogate and/or oracle spectra of listed designs.

    Args:
        checkpoint: Generator checkpoint.
        oracle: Whether to add the oracle curves.
        design_file: Design vectors, one per line.
        out: CSV path.
        config_file: Optional TOML settings file.
    """
    settings = run_settings(config_file)
    rows = get_spectra_service(settings).export(
        design_file,
        out,
        checkpoint=checkpoint,
        oracle=oracle,
    )
    click.echo(f"wrote {rows} rows to {out}")


@click.command("gradcheck", short_help="Check backpropagation numerically.")
@click.option(
    "--arch",
    type=click.Choice([*GRADCHECK_ARCHS, "all"]),
    default="all",
    show_default=True,
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--corrupt-gradients",
    is_flag=True,
    default=False,
    help="Double the backward gradients; the check must then fail.",
)
@click.option(
    "--out",
    type=click.Path(path_type=Path, dir_okay=False),
    default=None,
    help="Optional JSON report of the last checked architecture.",
)
@config_option
@click.pass_context
def gradcheck(  # noqa: PLR0913, PLR0917
    ctx: click.Context,
    arch: str,
    seed: int,
    corrupt_gradients: bool,  # noqa: FBT001
    out: Path | None,
    config_file: Path | None,
) -> None:
    """Compare analytic and finite-difference gradients.

    Exits with status 1 unless every checked architecture passes.

    Args:
        ctx: Click context.
        arch: Architecture name or ``all``.
        seed: Seed of the weights, the batch and the probes.
        corrupt_gradients: Check a deliberately broken backward pass.
        out: Optional JSON report path.
        config_file: Optional TOML settings file.
    """
    service = get_gradcheck_service(run_settings(config_file))
    archs = GRADCHECK_ARCHS if arch == "all" else (arch,)
    results = [
        service.check(name, seed, corrupt=corrupt_gradients) for name in archs
    ]
    for result in results:
        verdict = "PASS" if result.passed else "FAIL"
        click.echo(
            f"{result.arch:<12}max_rel_error={result.max_rel_error:.3e} "
            f"probed={result.probed} skipped={result.skipped} {verdict}",
        )
    if out is not None:
        ReportRepository(GradCheckModel).write(results[-1], out)
    if not all(result.passed for result in results):
        ctx.exit(1)


@click.command("schemas", short_help="Export JSON schemas of the reports.")
@click.option(
    "--out",
    type=click.Path(path_type=Path, file_okay=False),
    required=True,
    help="Directory receiving one <name>.schema.json per report.",
)
def schemas(out: Path) -> None:
    """Write the JSON schema of every report document.

    Args:
        out: Destination directory.
    """
    out.mkdir(parents=True, exist_ok=True)
    for name, model in REPORT_SCHEMAS.items():
        path = out / f"{name}.schema.json"
        path.write_text(json.dumps(model.model_json_schema(), indent=2) + "\n")
        click.echo(path)
