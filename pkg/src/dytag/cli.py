"""Command line interface.

Every subcommand takes ``--config`` pointing at one JSON document that
fully describes the run; nothing else is read from the environment
except the LLM_API_KEY credential. Exit codes: 0 success, 1 hard error,
2 configuration error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import evaluate as ev
from .config import ConfigError, RunConfig, validate_config
from .knowledge import KnowledgeStore
from .pipeline import Pipeline, PipelineError, run_pipeline
from .recall import apply_thresholds, rank_candidates
from .tasks.types import TASK_NR, TASKS

log = logging.getLogger("dytag")


def _fail_config(errors) -> None:
    for message in errors:
        click.echo(f"config error: {message}", err=True)
    sys.exit(2)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail_config(exc.errors)
        except click.ClickException:
            raise
        except Exception as exc:
            log.debug("hard error", exc_info=True)
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


def config_option(fn):
    return click.option(
        "--config", "config_path", required=True,
        type=click.Path(exists=True, dir_okay=False),
        help="Path to the run configuration (JSON).")(fn)


def _load(config_path: str) -> RunConfig:
    return validate_config(config_path)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Temporal graph prediction pipeline."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr)


@main.command()
@config_option
@handle_errors
def ingest(config_path: str) -> None:
    """Load the raw dataset into the binary store cache."""
    pipe = Pipeline(_load(config_path))
    pipe.stage_ingest()
    summary = json.loads(pipe.path("dataset_summary.json").read_text())
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@main.command()
@config_option
@handle_errors
def prep(config_path: str) -> None:
    """Compute the statistics the summary agents consume."""
    pipe = Pipeline(_load(config_path))
    pipe.stage_prep()
    click.echo(f"wrote {pipe.prep_path}")


@main.command("summarize-global")
@config_option
@handle_errors
def summarize_global(config_path: str) -> None:
    """Run the dataset-level summary agents."""
    pipe = Pipeline(_load(config_path))
    pipe.stage_summarize_global()
    click.echo(f"wrote {pipe.knowledge_stage_path('global')}")


@main.command("summarize-local")
@config_option
@handle_errors
def summarize_local(config_path: str) -> None:
    """Profile the most active nodes."""
    pipe = Pipeline(_load(config_path))
    pipe.stage_summarize_local()
    ks = KnowledgeStore.load(pipe.knowledge_stage_path("local"))
    click.echo(f"wrote {pipe.knowledge_stage_path('local')} "
               f"({len(ks.local_profiles)} profiles)")


@main.command()
@config_option
@handle_errors
def reflect(config_path: str) -> None:
    """Audit the link knowledge against surrogate prediction errors."""
    pipe = Pipeline(_load(config_path))
    pipe.stage_reflect()
    click.echo(f"wrote {pipe.knowledge_stage_path('final')}")


def _task_list(config: RunConfig, tasks) -> tuple:
    chosen = tuple(tasks) if tasks else config.tasks
    bad = [t for t in chosen if t not in TASKS]
    if bad:
        raise ConfigError([f"unknown task(s) {bad}; valid: {list(TASKS)}"])
    return chosen


@main.command()
@config_option
@click.option("--task", "tasks", multiple=True,
              help="Task to run (repeatable); defaults to the config's list.")
@handle_errors
def predict(config_path: str, tasks) -> None:
    """Answer the evaluation window's queries, checkpointing per batch."""
    config = _load(config_path)
    pipe = Pipeline(config)
    for task in _task_list(config, tasks):
        pipe.stage_predict(task)
        click.echo(f"wrote {pipe.predictions_path(task)}")


@main.command()
@config_option
@click.option("--task", "tasks", multiple=True,
              help="Task to score (repeatable); defaults to the config's list.")
@handle_errors
def evaluate(config_path: str, tasks) -> None:
    """Score prediction files into reports."""
    config = _load(config_path)
    pipe = Pipeline(config)
    reports = []
    for task in _task_list(config, tasks):
        pipe.stage_evaluate(task)
        reports.append(ev.EvalReport.load(pipe.report_path(task)))
    click.echo(ev.render_report_table(reports))


@main.command("analyze-consistency")
@config_option
@click.option("--directed", is_flag=True,
              help="Keep (u, v) and (v, u) as distinct pairs.")
@click.option("--min-fraction", default=ev.MIN_FRACTION_REPEATED,
              show_default=True,
              help="Repeated-interaction share below which the value is withheld.")
@handle_errors
def analyze_consistency(config_path: str, directed: bool,
                        min_fraction: float) -> None:
    """Label agreement within repeated pairs and repeated edge texts."""
    config = _load(config_path)
    pipe = Pipeline(config)
    report = ev.analyze_consistency(
        pipe.store(), min_fraction_repeated=min_fraction, directed=directed)
    out = pipe.path("consistency.json")
    out.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    click.echo(ev.render_consistency_table({config.dataset_name: report}))
    click.echo(f"wrote {out}")


@main.command("analyze-pareto")
@config_option
@click.option("--fraction", default=0.10, show_default=True,
              help="Share of most-active nodes to select.")
@handle_errors
def analyze_pareto(config_path: str, fraction: float) -> None:
    """Interaction coverage of the most active nodes."""
    config = _load(config_path)
    pipe = Pipeline(config)
    report = ev.pareto_coverage(pipe.split(), fraction=fraction)
    out = pipe.path("pareto.json")
    out.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    click.echo(f"top {report.selected_nodes} of {report.active_nodes} nodes "
               f"({100 * fraction:.0f}%) touch "
               f"{100 * report.coverage_all:.2f}% of all interactions"
               + (f", {100 * report.coverage_test:.2f}% of test interactions"
                  if report.coverage_test is not None else ""))
    click.echo(f"wrote {out}")


@main.command("recall-debug")
@config_option
@click.option("--source", required=True, type=int, help="Source node id.")
@click.option("--t", "cutoff", required=True, type=float, help="Time cutoff.")
@click.option("--pool", default="", help="Comma-separated candidate ids "
              "(default: every eligible destination).")
@handle_errors
def recall_debug(config_path: str, source: int, cutoff: float,
                 pool: str) -> None:
    """Show how candidate filtering and ranking treat one query."""
    config = _load(config_path)
    pipe = Pipeline(config)
    store = pipe.store()
    if pool:
        candidates = [int(p) for p in pool.split(",") if p.strip()]
    else:
        candidates = store.eligible_destinations()
    knowledge = None
    knowledge_path = pipe.knowledge_stage_path("final")
    if knowledge_path.exists():
        knowledge = KnowledgeStore.load(knowledge_path)
    rules = list(knowledge.thresholds.get(TASK_NR, [])) if knowledge else []
    cset = apply_thresholds(source, candidates, cutoff, rules, store=store)
    ranked = rank_candidates(cset, knowledge.global_link if knowledge else None)
    click.echo(f"source {source} at t={cutoff}: pool {len(candidates)}, "
               f"kept {len(ranked.candidates)}, excluded {len(ranked.excluded)}"
               f" (rule set: {'knowledge' if rules else 'default'})")
    for position, (node, evd) in enumerate(ranked.candidates, start=1):
        click.echo(f"  {position:>3}. node {node}  HI={evd.hi} CN={evd.cn} "
                   f"DNF={evd.dst_activity.frequency}")
    for node, rule in ranked.excluded:
        click.echo(f"  excluded node {node}: {rule.describe()}")


@main.command()
@config_option
@click.option("--force", is_flag=True,
              help="Ignore every cached stage and regenerate everything.")
@handle_errors
def run(config_path: str, force: bool) -> None:
    """Full pipeline: ingest, prep, summarize, reflect, predict, evaluate."""
    config = _load(config_path)
    if force:
        config = replace(config, force_regenerate=True)
    result = run_pipeline(config)
    for label, path in result.artifacts.items():
        click.echo(f"{label}: {path}")
    table = Path(config.resolved().out_dir) / "reports.txt"
    if result.status == 0 and table.exists():
        click.echo(table.read_text(encoding="utf-8").rstrip())
    click.echo(f"manifest: {result.manifest_path}")
    sys.exit(result.status)


if __name__ == "__main__":
    main()
