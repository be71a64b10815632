#!/usr/bin/env python3

# flake8: noqa

import sys

import click

import mplab.commands
from mplab.common import commandgroup
from mplab.errors import (
    ConfigError,
    FormatError,
    IncompatibleParametersError,
    InputDomainError,
    MissingInputError,
    StaleTapeError,
    TrainingError,
    WorkdirLockedError,
)

# exception class -> (message category, exit code)
EXIT_CODES = {
    ConfigError: ("Configuration error", 2),
    MissingInputError: ("Missing input", 3),
    TrainingError: ("Training failed", 4),
    StaleTapeError: ("Training failed", 4),
    FormatError: ("Bad file format", 5),
    WorkdirLockedError: ("Workdir locked", 6),
    IncompatibleParametersError: ("Incompatible parameters", 1),
    InputDomainError: ("Invalid input", 1),
}


def main(argv=None):
    try:
        commandgroup(args=argv, obj={}, standalone_mode=False)
    except click.exceptions.Abort:
        click.secho("Aborted.", fg="yellow")
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except tuple(EXIT_CODES) as e:
        category, code = next(v for cls, v in EXIT_CODES.items() if isinstance(e, cls))
        click.secho(f"{category}: {e}", fg="red", bold=True)
        sys.exit(code)
    except ImportError as e:
        click.secho(f"You are missing required dependencies: {e}", fg="red")
        sys.exit(1)


if __name__ == "__main__":
    main()
