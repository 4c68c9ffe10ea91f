"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 invariant failure.  Failures print one machine-parsable line to stderr of
the form ``error[kind]: message``.
"""

from __future__ import annotations

import sys

import click

from .config import load_config
from .errors import (
    ConfigError,
    IllConditionedDesignError,
    InvalidInputError,
    NumericalFailureError,
)
from .experiments import run_experiment

_EXIT_CONFIG = 2
_EXIT_NUMERICAL = 3
_EXIT_INVARIANT = 4


def _fail(kind: str, code: int, message: str) -> None:
    line = " ".join(str(message).split()) or "unknown error"
    click.echo(f"error[{kind}]: {line}", err=True)
    sys.exit(code)


def _common(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=False), help="TOML config file")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                      help="override the config seed")(fn)
    fn = click.option("--out", "out_dir", default="rateloss_out", show_default=True,
                      help="output directory")(fn)
    fn = click.option("--threads", type=click.IntRange(1, 256), default=1,
                      show_default=True, help="worker threads")(fn)
    fn = click.option("--plot/--no-plot", default=False, show_default=True,
                      help="emit an SVG plot where supported")(fn)
    return fn


def _run(kind: str, config_path, seed, out_dir, threads, plot) -> None:
    try:
        cfg = load_config(config_path, seed_override=seed)
    except ConfigError as exc:
        _fail("config", _EXIT_CONFIG, str(exc))
    if cfg.kind != kind:
        _fail("config", _EXIT_CONFIG,
              f"experiment.kind is {cfg.kind!r} but the {kind!r} subcommand was invoked")
    try:
        result = run_experiment(cfg, out_dir, threads=threads, plot=plot)
    except (ConfigError, InvalidInputError) as exc:
        _fail("config", _EXIT_CONFIG, str(exc))
    except (NumericalFailureError, IllConditionedDesignError) as exc:
        _fail("numerical", _EXIT_NUMERICAL, str(exc))
    click.echo(f"wrote {result.csv_path}")
    if result.plot_path is not None:
        click.echo(f"wrote {result.plot_path}")
    if result.failed_invariants:
        _fail("invariant", _EXIT_INVARIANT,
              "failed checks: " + ", ".join(result.failed_invariants))
    if result.numerical_failures:
        _fail("numerical", _EXIT_NUMERICAL,
              f"{result.numerical_failures} grid points failed numerically "
              "(rows recorded with rate=nan)")


@click.group()
def main() -> None:
    """Rate vs generalization-error experiments for coded polynomial regression."""


@main.command("asymptotic-sweep")
@_common
def asymptotic_sweep(config_path, seed, out_dir, threads, plot):
    """Replicate-mean generalization error against closed forms."""
    _run("asymptotic-sweep", config_path, seed, out_dir, threads, plot)


@main.command("tradeoff")
@_common
def tradeoff(config_path, seed, out_dir, threads, plot):
    """Reconstruction distortion vs coding rate across a distortion grid."""
    _run("tradeoff", config_path, seed, out_dir, threads, plot)


@main.command("rate-loss-region")
@_common
def rate_loss_region(config_path, seed, out_dir, threads, plot):
    """Finite-blocklength rate vs loss-level frontier."""
    _run("rate-loss-region", config_path, seed, out_dir, threads, plot)


@main.command("property-suite")
@_common
def property_suite(config_path, seed, out_dir, threads, plot):
    """Run every module invariant and report pass/fail per entry."""
    _run("property-suite", config_path, seed, out_dir, threads, plot)


if __name__ == "__main__":
    main()
