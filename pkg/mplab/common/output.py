import os

import click

from mplab.constants import VERBOSITY_ENV


def verbosity():
    try:
        return int(os.environ.get(VERBOSITY_ENV, "1"))
    except ValueError:
        return 1


def echo(message, level=1, **style):
    """Print a styled message when MPLAB_VERBOSITY is at least ``level``."""
    if verbosity() >= level:
        click.secho(message, **style)


def debug(message):
    echo(message, level=2, dim=True)


def warn(message):
    echo(message, level=1, fg="yellow")
