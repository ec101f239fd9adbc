"""CLI interface for the giant-atom designer."""

import logging
from pathlib import Path
from typing import Optional

import click

from . import __version__
from .config import ExperimentDoc, load_document, load_settings
from .errors import GiantAtomError
from .runner import SCENARIOS, RunOutcome, run

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


@click.group()
@click.option('--debug', is_flag=True, help='Enable debug logging')
@click.version_option(__version__)
@click.pass_context
def main(ctx: click.Context, debug: bool) -> None:
    """Giant Atom CLI - design coupling sequences and simulate giant atoms on a waveguide."""
    try:
        settings = load_settings()
        logging.getLogger().setLevel(logging.DEBUG if debug else settings.log_level)
    except ValueError as e:
        click.echo(f"Error loading configuration: {e}", err=True)
        ctx.exit(1)
    ctx.ensure_object(dict)
    ctx.obj['settings'] = settings


def _echo_outcome(outcome: RunOutcome) -> None:
    click.echo(f"✅ {outcome.command} finished: {len(outcome.files)} file(s) in {outcome.out_dir}")
    for key, value in outcome.summary.items():
        click.echo(f"  {key}: {value}")
    click.echo(f"📄 Manifest: {outcome.manifest}")


def _execute(
    ctx: click.Context,
    doc: ExperimentDoc,
    out: Optional[Path],
    seed: Optional[int],
    threads: Optional[int],
) -> None:
    try:
        outcome = run(doc, ctx.obj['settings'], out_dir=out, seed=seed, threads=threads)
    except (GiantAtomError, ValueError) as e:
        click.echo(f"❌ Error: {e}", err=True)
        ctx.exit(1)
    _echo_outcome(outcome)


def _command(name: str, help_text: str) -> None:
    """Register a document-driven command that must match the document's 'command' field."""

    @main.command(name=name, help=help_text)
    @click.option('--config', 'config_path', required=True, type=click.Path(path_type=Path), help='Experiment document (JSON)')
    @click.option('--out', type=click.Path(path_type=Path), help='Output directory')
    @click.option('--seed', type=click.IntRange(min=0), help='Override the run and disorder seeds')
    @click.option('--threads', type=click.IntRange(min=1), help='Worker cap')
    @click.pass_context
    def command(
        ctx: click.Context,
        config_path: Path,
        out: Optional[Path],
        seed: Optional[int],
        threads: Optional[int],
    ) -> None:
        click.echo(f"🔧 {name}: {config_path}")
        try:
            doc = load_document(config_path)
        except GiantAtomError as e:
            click.echo(f"❌ Error: {e}", err=True)
            ctx.exit(1)
        if doc.command != name:
            click.echo(f"❌ Error: document is for '{doc.command}', not '{name}'", err=True)
            ctx.exit(1)
        _execute(ctx, doc, out, seed, threads)


_command('design', 'Optimize a coupling sequence, or sample the iFT baseline.')
_command('dynamics', 'Simulate single-atom decay and the photon field.')
_command('bound-state', 'Solve the bound-state pole, residue and field.')
_command('chirality', 'Sweep the chiral factor and measure flux chirality.')
_command('dipole', 'Compute dipole-dipole exchange and two-atom Rabi dynamics.')
_command('disorder', 'Average couplings and dynamics over disorder ensembles.')


@main.command()
@click.option('--scenario', type=click.Choice(sorted(SCENARIOS)), help='Built-in scenario name')
@click.option('--config', 'config_path', type=click.Path(path_type=Path), help='Document with run.scenario')
@click.option('--out', type=click.Path(path_type=Path), help='Output directory')
@click.option('--seed', type=click.IntRange(min=0), help='Override the run and disorder seeds')
@click.option('--threads', type=click.IntRange(min=1), help='Worker cap')
@click.pass_context
def reproduce(
    ctx: click.Context,
    scenario: Optional[str],
    config_path: Optional[Path],
    out: Optional[Path],
    seed: Optional[int],
    threads: Optional[int],
) -> None:
    """Run a built-in reproduction scenario from the published sequences."""
    try:
        if config_path is not None:
            doc = load_document(config_path)
            if scenario is not None:
                doc = doc.model_copy(update={"run": doc.run.model_copy(update={"scenario": scenario})})
        elif scenario is not None:
            doc = ExperimentDoc.model_validate({"command": "reproduce", "run": {"scenario": scenario}})
        else:
            raise click.UsageError("give --scenario or --config")
    except GiantAtomError as e:
        click.echo(f"❌ Error: {e}", err=True)
        ctx.exit(1)
    click.echo(f"🔁 Reproducing: {doc.run.scenario}")
    _execute(ctx, doc, out, seed, threads)


@main.command()
@click.pass_context
def scenarios(ctx: click.Context) -> None:
    """List the built-in reproduction scenarios."""
    click.echo("📚 Scenarios:")
    for name, build in SCENARIOS.items():
        doc = build()
        source = doc.sequence.builtin if doc.sequence is not None else "-"
        click.echo(f"  {name}: {doc.command} on {source}")


@main.command()
@click.pass_context
def config_check(ctx: click.Context) -> None:
    """Check configuration status."""
    settings = ctx.obj['settings']
    click.echo("🔧 Configuration Status:")
    click.echo(f"  Threads: {settings.threads}")
    click.echo(f"  Output directory: {settings.output_dir}")
    click.echo(f"  Log level: {settings.log_level}")


if __name__ == '__main__':
    main()
