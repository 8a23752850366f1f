"""
The gmix CLI runs experiments described by config files.

Commands
~~~~~~~~

* ``gmix run CONFIG`` - Runs an experiment and writes its artifacts
* ``gmix CONFIG`` - Same as ``gmix run CONFIG``
* ``gmix -v`` - Prints the version

Exit statuses are 0 on success, 2 for an invalid config, 3 when a capacity
limit is exceeded, 4 when a ``self_check`` run fails an acceptance flag and 1
for any other gmix error. Errors are reported on stderr as a JSON document
with ``error``, ``message`` and ``origin`` keys.
"""

import json
import logging

import click
from click_default_group import DefaultGroup

import gmix as gmix_module
from gmix import config as gmix_config
from gmix import core, exceptions

EXIT_CONFIG_ERROR = 2
EXIT_CAPACITY_ERROR = 3
EXIT_ACCEPTANCE_FAILURE = 4


def _origin(exc):
    """The module that raised ``exc``"""
    origin = getattr(exc, "origin", None)
    if origin:
        return origin

    tb = exc.__traceback__
    while tb is not None and tb.tb_next is not None:
        tb = tb.tb_next
    return tb.tb_frame.f_globals.get("__name__") if tb else None


def _exit_status(exc):
    if isinstance(exc, exceptions.ConfigError):
        return EXIT_CONFIG_ERROR
    elif isinstance(exc, exceptions.CapacityError):
        return EXIT_CAPACITY_ERROR
    else:
        return 1


@click.group(cls=DefaultGroup, default="run", default_if_no_args=True)
def main():
    pass


@main.command()
@click.argument("config", required=False)
@click.option("--out", help="Output directory. Overrides output_dir of the config.")
@click.option("--threads", type=int, help="Worker threads. Overrides threads of the config.")
@click.option("--verbose", help="Log debug messages.", is_flag=True)
@click.option("-v", "--version", help="Show the version.", is_flag=True)
@click.pass_context
def run(ctx, config, out, threads, verbose, version):
    """
    Run the experiment described by a config file.

    Writes results.csv, summary.json and plotdata/*.tsv to the output
    directory.
    """
    if version:
        click.echo(f"gmix {gmix_module.__version__}")
        return

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if not config:
            raise exceptions.ConfigError("No experiment config given")

        experiment = gmix_config.load_config(config)
        result, path = core.run(experiment, out=out, threads=threads)
    except exceptions.Error as exc:
        error = {"error": type(exc).__name__, "message": str(exc), "origin": _origin(exc)}
        click.echo(json.dumps(error), err=True)
        ctx.exit(_exit_status(exc))

    click.echo(f"Wrote {result.kind} results to {path}")
    if experiment.self_check and not result.passed:
        failed = sorted(name for name, ok in result.flags.items() if not ok)
        err_msg = f"{len(failed)} acceptance flags failed: {', '.join(failed)}"
        click.echo(click.style(err_msg, fg="red"), err=True)
        ctx.exit(EXIT_ACCEPTANCE_FAILURE)
