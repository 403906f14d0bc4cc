"""Command line for the experiment harness: run, compare, diag, validate.

Exit codes: 0 success, 1 configuration error or mismatched manifests,
2 the ensemble contains failed runs, 3 internal error.
"""
import os
import sys

import click
import structlog
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..'))
from shared.errors import ConfigError, ManifestMismatchError, MLMCError  # noqa: E402
from shared.utils import ensure_directory_exists, setup_logging  # noqa: E402

from harness.config import HarnessSettings, load_config, validate_experiment, with_overrides  # noqa: E402
from harness.runner import compare_algorithms, diagnose, load_manifest, run_experiment  # noqa: E402

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILED_RUNS = 2
EXIT_INTERNAL = 3


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.pass_context
def cli(ctx):
    """Multilevel Monte Carlo experiment harness"""
    settings = HarnessSettings()
    setup_logging("mlmc-harness", settings.log_level)
    ctx.obj = settings


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False), help='Experiment YAML')
@click.option('--seed', type=int, default=None, help='Override base_seed')
@click.option('--out', type=click.Path(file_okay=False), default=None, help='Output directory')
@click.option('--threads', type=click.IntRange(min=1), default=None, help='Parallel runs')
@click.option('--reuse-samples', type=click.BOOL, default=None, help='Keep samples across iterations')
@click.pass_obj
def run(settings, config_path, seed, out, threads, reuse_samples):
    """Execute an experiment config over its tolerance grid"""
    try:
        cfg = with_overrides(load_config(config_path), seed=seed, out=out, reuse_samples=reuse_samples)
        validate_experiment(cfg)
        out_dir = cfg.output_dir or os.path.join(settings.output_root, cfg.name)
        manifest = run_experiment(cfg, threads=threads or settings.threads, out_dir=out_dir)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    except Exception as e:
        logger.exception("run_command_failed")
        _fail(EXIT_INTERNAL, str(e))

    click.echo(f"{manifest.variant}: {len(manifest.runs)} runs, {manifest.failed} failed -> {out_dir}")
    if any(r.status == "internal_error" for r in manifest.runs):
        sys.exit(EXIT_INTERNAL)
    sys.exit(EXIT_FAILED_RUNS if manifest.failed else EXIT_OK)


@cli.command()
@click.argument('manifests', nargs=-1, required=True, type=click.Path(exists=True))
@click.option('--out', type=click.Path(file_okay=False), default=None, help='Directory for comparison.csv')
@click.pass_obj
def compare(settings, manifests, out):
    """Join manifests of several variants into one work comparison table"""
    try:
        table = compare_algorithms([load_manifest(path) for path in manifests])
    except (ConfigError, ManifestMismatchError) as e:
        _fail(EXIT_CONFIG, str(e))
    except MLMCError as e:
        _fail(EXIT_INTERNAL, str(e))

    out_dir = out or os.path.join(settings.output_root, "comparison")
    ensure_directory_exists(out_dir)
    path = os.path.join(out_dir, "comparison.csv")
    table.to_csv(path, index=False)
    click.echo(table.to_string(index=False))
    click.echo(f"written {path}")


@cli.command()
@click.argument('manifest', type=click.Path(exists=True))
@click.option('--out', type=click.Path(file_okay=False), default=None, help='Directory for recomputed diagnostics')
def diag(manifest, out):
    """Recompute ensemble diagnostics from stored run records"""
    try:
        written = diagnose(load_manifest(manifest), out)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        _fail(EXIT_CONFIG, str(e))
    for path in written:
        click.echo(path)


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False), help='Experiment YAML')
def validate(config_path):
    """Schema check only"""
    try:
        cfg = load_config(config_path)
        validate_experiment(cfg)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    click.echo(f"{config_path}: ok ({cfg.variant_label()}, {len(cfg.tolerances)} tolerances)")


def main():
    cli(prog_name="mlmc")


if __name__ == '__main__':
    main()
