import click

# short name -> full command name
COMMAND_ALIASES = {
    "gen": "gen-data",
    "seed": "train-seed",
    "lm": "lm-train",
    "ppl": "lm-ppl",
    "dec": "decode",
    "exp": "experiment",
}


class AliasedCommands(click.Group):
    """Command group that also accepts the short names in COMMAND_ALIASES and lists them in the help."""

    def get_command(self, ctx, cmd_name):
        return click.Group.get_command(self, ctx, COMMAND_ALIASES.get(cmd_name, cmd_name))

    def resolve_command(self, ctx, args):
        # report the full name so usage errors under an alias name the real command
        _, cmd, args = click.Group.resolve_command(self, ctx, args)
        return (cmd.name if cmd else None), cmd, args

    def format_epilog(self, ctx, formatter):
        with formatter.section("Aliases"):
            formatter.write_dl([(alias, COMMAND_ALIASES[alias]) for alias in sorted(COMMAND_ALIASES)])
        click.Group.format_epilog(self, ctx, formatter)
