from collections.abc import Callable
from pathlib import Path
from typing import Any

import click

from fpc_surrogate.config import Settings
from fpc_surrogate.dependencies import get_run_settings

type Overrides = dict[str, dict[str, Any]]

config_option = click.option(
    "--config",
    "config_file",
    type=click.Path(path_type=Path, dir_okay=False),
    default=None,
    help="TOML file with settings sections; flags win over it.",
)


def out_option(help_text: str) -> Callable[..., Any]:
    """Required ``--out`` path option."""
    return click.option(
        "--out",
        type=click.Path(path_type=Path, dir_okay=False),
        required=True,
        help=help_text,
    )


def dataset_option() -> Callable[..., Any]:
    """Required ``--dataset`` path option."""
    return click.option(
        "--dataset",
        "dataset_path",
        type=click.Path(path_type=Path, dir_okay=False),
        required=True,
        help="FPCD v1 dataset, binary or .csv.",
    )


def overrides_of(**sections: dict[str, Any]) -> Overrides:
    """Drops flags that were not given, and sections left empty."""
    cleaned = {
        name: {key: value for key, value in values.items() if value is not None}
        for name, values in sections.items()
    }
    return {name: values for name, values in cleaned.items() if values}


def run_settings(
    config_file: Path | None,
    overrides: Overrides | None = None,
) -> Settings:
    """Settings of the running command, honouring the group options."""
    obj = click.get_current_context().find_root().obj or {}
    return get_run_settings(config_file, overrides, obj.get("log_level"))
