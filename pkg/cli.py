"""Command-line entry point: solve, oracle, validate, formulate, extract, bench, replay, runs, serve."""
import sys
from pathlib import Path
from typing import Optional

import click
from loguru import logger

import spec_dsl
from bench_harness import BUNDLED_CASES, BenchMatrix, run_matrix
from config import Settings, api_key, load_settings
from cta_pipeline import run_oneshot_formulate, run_oneshot_solve, run_pipeline, verify_transcript
from db import TranscriptStore, get_session_factory, list_runs, load_transcript
from errors import FixtureMissingError, PipelineError, WorkbenchError
from extraction import extract_spec
from llm_transport import LlmTransport, OpenAITransport, ReplayTransport
from search_engine import EvaluationCache, Learning, SearchConfig, format_trace, solve_bfs, solve_iddfs


def configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")


def _settings(ctx: click.Context) -> Settings:
    return ctx.obj["settings"]


def _fail(e: WorkbenchError):
    raise click.ClickException(str(e)) from e


def _transport(settings: Settings, replay: Optional[str], live: bool, stem: str) -> LlmTransport:
    if live:
        return OpenAITransport(api_key(), settings.endpoint, settings.retry_attempts, settings.retry_backoff_seconds)
    source = Path(replay or settings.fixture_dir)
    if source.is_dir():
        source = source / f"{stem}.transcript.json"
    if not source.is_file():
        raise click.ClickException(f"no replay fixture at {source}")
    return ReplayTransport.from_file(source)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Flat key = value configuration file (default: ./psw.conf when present).")
@click.pass_context
def cli(ctx: click.Context, verbose: bool, config_path: Optional[str]):
    """Problem-space workbench."""
    configure_logging(verbose)
    ctx.ensure_object(dict)
    try:
        ctx.obj["settings"] = load_settings(config_path)
    except WorkbenchError as e:
        _fail(e)


@cli.command()
@click.argument("spec_path", type=click.Path())
@click.option("--instance", "instance_key", default=None, help="Instance name or label.")
@click.option("--fd", type=click.Choice(["on", "off"]), default="on", show_default=True)
@click.option("--learning", type=click.Choice([m.value for m in Learning]), default="none", show_default=True)
@click.option("--seed", type=int, default=None, help="Seeded operator ordering (default lexicographic).")
@click.option("--max-depth", type=int, default=None)
@click.option("--no-constraints", is_flag=True, help="Ignore no_undo / no_loop.")
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None,
              help="Evaluation cache file carried across runs (with --learning persist).")
@click.option("--trace", is_flag=True, help="Print the state after every step.")
@click.pass_context
def solve(ctx, spec_path, instance_key, fd, learning, seed, max_depth, no_constraints, cache_path, trace):
    """Iterative-deepening search on one instance."""
    settings = _settings(ctx)
    try:
        instance = spec_dsl.load(spec_path).instance(instance_key)
        config = SearchConfig(failure_detection=fd == "on", learning=Learning(learning),
                              max_depth=max_depth or settings.max_depth, seed=seed,
                              path_constraints_enabled=not no_constraints,
                              max_expansions=settings.expansion_cap)
        cache = None
        if cache_path and Path(cache_path).is_file():
            cache = EvaluationCache.load(cache_path)
        elif config.learning is Learning.PERSIST:
            cache = EvaluationCache()
        solution, stats = solve_iddfs(instance, config, cache)
        if cache_path and cache is not None:
            cache.save(cache_path)
    except WorkbenchError as e:
        _fail(e)
    if solution is not None and trace:
        click.echo(format_trace(instance, solution), nl=False)
    elif solution is not None:
        click.echo(" ".join(step.operator for step in solution.steps))
    click.echo(f"status={stats.status.value} length={stats.solution_length} expansions={stats.expansions} "
               f"generated={stats.generated} cache_hits={stats.cache_hits} new_states={stats.new_states}")
    if solution is None:
        ctx.exit(1)


@cli.command()
@click.argument("spec_path", type=click.Path())
@click.option("--instance", "instance_key", default=None)
@click.pass_context
def oracle(ctx, spec_path, instance_key):
    """Breadth-first shortest solution and reachable state count."""
    try:
        instance = spec_dsl.load(spec_path).instance(instance_key)
        solution, reachable = solve_bfs(instance)
    except WorkbenchError as e:
        _fail(e)
    length = solution.length if solution is not None else "none"
    click.echo(f"{instance.title}: length={length} reachable={reachable}")
    if solution is not None:
        click.echo(" ".join(step.operator for step in solution.steps))


@cli.command()
@click.argument("spec_path", type=click.Path())
@click.pass_context
def validate(ctx, spec_path):
    """Parse and check a specification; exit status 1 on blocking findings."""
    try:
        findings = spec_dsl.validate(spec_dsl.load(spec_path))
    except WorkbenchError as e:
        _fail(e)
    for finding in findings:
        click.echo(str(finding))
    if spec_dsl.blocking(findings):
        ctx.exit(1)
    click.echo("ok")


@cli.command()
@click.argument("problem_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--replay", type=click.Path(exists=True), default=None,
              help="Fixture transcript, or a directory holding <problem stem>.transcript.json.")
@click.option("--live", is_flag=True, help="Call the configured chat endpoint.")
@click.option("--mode", type=click.Choice(["pipeline", "oneshot-formulate", "oneshot-solve"]), default="pipeline",
              show_default=True)
@click.option("--label", default=None, help="Run label (default: problem file stem).")
@click.pass_context
def formulate(ctx, problem_path, replay, live, mode, label):
    """Run the analyst pipeline (or a one-shot baseline) on a problem description."""
    settings = _settings(ctx)
    path = Path(problem_path)
    problem = path.read_text(encoding="utf-8").strip()
    runner = {"pipeline": run_pipeline, "oneshot-formulate": run_oneshot_formulate,
              "oneshot-solve": run_oneshot_solve}[mode]
    store = TranscriptStore(settings.transcript_dir, settings.database_url)
    try:
        transport = _transport(settings, replay, live, path.stem)
        transcript = runner(problem, transport, label=label or path.stem, model_id=settings.model_id,
                            temperature=settings.temperature, store=store)
    except (PipelineError, FixtureMissingError) as e:
        partial = e.transcript
        if partial is not None:
            click.echo(f"partial transcript: {store.path_for(partial.run_id)} ({len(partial.nodes)} nodes)", err=True)
        _fail(e)
    except WorkbenchError as e:
        _fail(e)
    click.echo(str(store.path_for(transcript.run_id)))


@cli.command()
@click.argument("transcript_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--replay", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Fixture with Extract responses (default: the transcript itself).")
@click.option("--live", is_flag=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Where to write <run_id>.extracted.pspace (default: next to the transcript).")
@click.pass_context
def extract(ctx, transcript_path, replay, live, out_dir):
    """Ask for a .pspace specification from an analyst transcript."""
    settings = _settings(ctx)
    try:
        transcript = load_transcript(transcript_path)
        transport = _transport(settings, replay or transcript_path, live, transcript.problem_label)
        result = extract_spec(transcript, transport, model_id=settings.model_id,
                              temperature=settings.temperature,
                              out_dir=out_dir or Path(transcript_path).parent)
    except (WorkbenchError, ValueError) as e:
        raise click.ClickException(str(e)) from e
    for finding in result.findings:
        click.echo(str(finding))
    click.echo(f"{result.path} (attempts={result.attempts})")


@cli.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Write report.csv and report.txt here.")
@click.option("--reps", type=int, default=None, help="Repetitions per cell.")
@click.option("--case", "case_labels", multiple=True, help="Only these case labels (repeatable).")
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.pass_context
def bench(ctx, out_dir, reps, case_labels, seed, workers):
    """Run the case x failure-detection x learning matrix."""
    settings = _settings(ctx)
    cases = [c for c in BUNDLED_CASES if not case_labels or c.label in case_labels]
    try:
        matrix = BenchMatrix(cases=cases, repetitions=reps or settings.repetitions,
                             expansion_cap=settings.expansion_cap, seed=seed, max_depth=settings.max_depth,
                             workers=workers)
    except WorkbenchError as e:
        _fail(e)
    report = run_matrix(matrix)
    text = report.to_text()
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
        (out / "report.txt").write_text(text, encoding="utf-8")
        logger.info(f"report written to {out}")
    click.echo(text, nl=False)


@cli.command()
@click.argument("transcript_path", type=click.Path(exists=True, dir_okay=False))
def replay(transcript_path):
    """Re-render every recorded prompt and report mismatches."""
    try:
        transcript = load_transcript(transcript_path)
    except ValueError as e:
        raise click.ClickException(str(e)) from e
    mismatches = verify_transcript(transcript)
    for line in mismatches:
        click.echo(line)
    if mismatches:
        raise click.ClickException(f"{len(mismatches)} prompt(s) differ")
    checked = sum(1 for n in transcript.nodes if n.prompt)
    click.echo(f"ok: {checked} prompt(s) verified, {len(transcript.nodes) - checked} without recorded prompt")


@cli.command()
@click.pass_context
def runs(ctx):
    """List persisted runs."""
    db = get_session_factory(_settings(ctx).database_url)()
    try:
        for row in list_runs(db):
            click.echo(f"{row.run_id}\t{row.kind}\t{row.status}\t{row.node_count}\t{row.transcript_path}")
    finally:
        db.close()


@cli.command()
@click.option("--host", default="0.0.0.0", show_default=True)
@click.option("--port", default=2500, show_default=True)
def serve(host, port):
    """Run the HTTP API."""
    import uvicorn
    uvicorn.run("backend_main:app", host=host, port=port)


if __name__ == "__main__":
    cli()
