import sys
from collections.abc import Sequence

import click

from fpc_surrogate.app import PROG_NAME, cli_factory
from fpc_surrogate.exceptions import FpcError, StorageError, UsageError


def main(argv: Sequence[str] | None = None) -> int:
    """Runs the command line and maps failures to exit codes.

    0 success, 1 usage, 2 I/O, 3 non-finite training loss, 4 version
    mismatch.

    Args:
        argv: Arguments without the program name; defaults to ``sys.argv``.

    Returns:
        The exit code.
    """
    try:
        result = cli_factory().main(
            args=list(argv) if argv is not None else None,
            prog_name=PROG_NAME,
            standalone_mode=False,
        )
    except click.ClickException as error:
        error.show()
        return UsageError.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return UsageError.exit_code
    except FpcError as error:
        click.echo(f"error: {error}", err=True)
        return error.exit_code
    except OSError as error:
        click.echo(f"error: {error}", err=True)
        return StorageError.exit_code
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
