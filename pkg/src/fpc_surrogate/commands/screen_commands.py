from pathlib import Path

import click

from fpc_surrogate.commands.common import (
    config_option,
    out_option,
    overrides_of,
    run_settings,
)
from fpc_surrogate.config import read_toml
from fpc_surrogate.dependencies import get_screening_service
from fpc_surrogate.schemas import MetricsModel, ScreeningReportModel


def _metrics_line(name: str, metrics: MetricsModel) -> str:
    return (
        f"{name:<20}{metrics.f_res_ghz:>8.2f}{metrics.gain_at_res_dbi:>8.2f}"
        f"{metrics.zbw_mhz:>8.0f}{metrics.ar5bw_mhz:>8.0f}"
        f"{metrics.ar_min_db:>8.2f}"
    )


def echo_summary(document: ScreeningReportModel) -> None:
    """Prints timing, the winner and the comparison rows."""
    click.echo(
        f"screened {document.pool_size} designs in "
        f"{document.timing_ms:.1f} ms "
        f"(full-wave estimate {document.reference_cost_hours:.0f} h), "
        f"{len(document.ranking)} feasible",
    )
    if document.shortfall:
        click.echo(f"selection is {document.shortfall} short of top-k")
    if not document.verification:
        return
    winner = document.verification[0]
    click.echo(
        f"{'':<20}{'f_res':>8}{'gain':>8}{'zbw':>8}{'ar5bw':>8}{'ar_min':>8}",
    )
    click.echo(_metrics_line(f"#{winner.index} predicted", winner.predicted))
    for name, metrics in document.comparison.items():
        click.echo(_metrics_line(name, metrics))


@click.command("screen", short_help="Rank a candidate pool with a generator.")
@click.option(
    "--checkpoint",
    type=click.Path(path_type=Path, dir_okay=False),
    required=True,
    help="Generator checkpoint.",
)
@click.option("--n", "n", type=int, default=None, help="Pool size.")
@click.option("--seed", type=int, default=None, help="Pool seed.")
@click.option("--top-k", type=int, default=None, help="Designs to verify.")
@click.option(
    "--criteria",
    type=click.Path(path_type=Path, dir_okay=False),
    default=None,
    help="TOML file with feasibility gates and score weights.",
)
@out_option("JSON screening report; histogram CSVs are written beside it.")
@config_option
def screen(  # noqa: PLR0913, PLR0917
    checkpoint: Path,
    n: int | None,
    seed: int | None,
    top_k: int | None,
    criteria: Path | None,
    out: Path,
    config_file: Path | None,
) -> None:
    """Screen a pool, select the best designs and verify them.

    Args:
        checkpoint: Generator checkpoint.
        n: Pool size override.
        seed: Pool seed override.
        top_k: Selection size override.
        criteria: TOML file with `ScreeningCriteria` keys.
        out: JSON report path.
        config_file: Optional TOML settings file.
    """
    settings = run_settings(
        config_file,
        overrides_of(
            screening={
                "pool_size": n,
                "seed": seed,
                "top_k": top_k,
                "criteria": read_toml(criteria) if criteria else None,
            },
        ),
    )
    screening = settings.screening
    document = get_screening_service(settings).run(
        checkpoint,
        screening.pool_size,
        screening.seed,
        out,
    )
    echo_summary(document)
