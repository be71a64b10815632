import click
import numpy as np

from mplab.common.aliases import AliasedCommands
from mplab.common.figles import (  # noqa: F401
    process_items,
    read_matrices,
    read_transcripts,
    workdir_lock,
    write_matrices,
    write_transcripts,
)
from mplab.common.output import debug, echo, verbosity, warn  # noqa: F401
from mplab.config import current_version


@click.group(context_settings=dict(help_option_names=["-h", "--help"]), cls=AliasedCommands)
@click.version_option(version=current_version(), prog_name="mplab")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Run-config TOML file.")
@click.option("--set", "overrides", multiple=True, metavar="K=V", help="Override a config value, e.g. train.epochs=5.")
@click.option("--seed", type=int, default=None, help="Override train.seed and datagen.base_seed.")
@click.option("--workdir", type=click.Path(file_okay=False), default=None, help="Override paths.workdir.")
@click.pass_context
def commandgroup(ctx, config_path, overrides, seed, workdir):
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, overrides=list(overrides), seed=seed, workdir=workdir)


def derive_rng(seed, *keys):
    """
    Build an independent generator for a (seed, keys...) stream, e.g.
    ``derive_rng(seed, epoch, sample_id)``. Streams never overlap for distinct keys.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))
