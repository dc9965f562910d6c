"""Command-line entry points for building and evaluating benchmark months."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import evalrun, reports
from .forge import McqItem
from .latexcheck import latex_gate
from .pipeline import PipelineConfig, layout_check, run_pipeline, stage_harvest
from .storage import atomic_write_json, read_json


def _load_config(path: str) -> PipelineConfig:
    return PipelineConfig.from_file(path)


def _months(config: PipelineConfig, month: str | None) -> list[str]:
    if month:
        return [month]
    if not config.months:
        raise click.UsageError("no months in config and none given via --month")
    return config.months


@click.group()
@click.option("--verbose", is_flag=True, help="Log stage progress to stderr.")
def main(verbose: bool) -> None:
    """Build contamination-resistant theorem MCQ benchmarks and evaluate models."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--month", default=None, help="Single month YYYY-MM.")
def harvest(config_path: str, month: str | None) -> None:
    """Run only the paper-retrieval stage."""
    config = _load_config(config_path)
    for target in _months(config, month):
        layout = config.layout(target)
        input_count, output_count = stage_harvest(config, target, layout)
        click.echo(f"{target}: harvested {output_count} papers "
                   f"-> {layout.papers_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--month", default=None)
def build(config_path: str, month: str | None) -> None:
    """Run the full build pipeline (harvest through hard split)."""
    config = _load_config(config_path)
    for target in _months(config, month):
        ledger = run_pipeline(config, target)
        for stage, entry in ledger.stages.items():
            click.echo(f"{target}/{stage}: {entry.get('status')} "
                       f"({entry.get('input_count', '-')} -> "
                       f"{entry.get('output_count', '-')})")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--month", default=None)
def gate(config_path: str, month: str | None) -> None:
    """Re-validate an existing hard split through the LaTeX gate."""
    config = _load_config(config_path)
    for target in _months(config, month):
        layout = config.layout(target)
        if not layout.hard_path.exists():
            raise click.ClickException(f"no hard split at {layout.hard_path}")
        items = [McqItem.from_json(e) for e in read_json(layout.hard_path)]
        kept = []
        for item in items:
            result = latex_gate(item, config.gateway("generator"),
                                engine=config.gate_engine,
                                extra_whitelist=config.gate_extra_whitelist)
            click.echo(f"{item.id}: {result.verdict} ({result.mode})")
            if result.verdict != "rejected":
                kept.append(result.item)
        atomic_write_json(layout.hard_path, [i.to_json() for i in kept])
        click.echo(f"{target}: {len(kept)}/{len(items)} items kept")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--month", "months", multiple=True)
@click.option("--out", "out_dir", default=None, type=click.Path())
def report(config_path: str, months: tuple[str, ...], out_dir: str | None) -> None:
    """Emit composition, category, and results CSVs."""
    config = _load_config(config_path)
    targets = list(months) or config.months
    written = reports.emit_reports(config, targets, out_dir)
    for name, path in written.items():
        click.echo(f"{name}: {path}")


@main.command(name="eval")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--month", required=True)
@click.option("--model", "model_id", default="default")
@click.option("--seed", default=0, type=int)
@click.option("--n", "sample_count", default=1, type=int)
@click.option("--concurrency", default=1, type=int)
@click.option("--resume", is_flag=True)
@click.option("--mode", type=click.Choice(["selection", "sketch_aware"]),
              default="selection")
@click.option("--max-output-tokens", default=8192, type=int)
@click.option("--effort", default=None,
              type=click.Choice(["none", "low", "medium", "high"]))
@click.option("--output", "output_path", default=None, type=click.Path())
@click.option("--backend", "backend_role", default="evaluatee",
              help="Which configured backend role to evaluate.")
@click.option("--temperature", default=None, type=float)
@click.option("--top-p", "top_p", default=None, type=float)
def eval_command(config_path: str, month: str, model_id: str, seed: int,
                 sample_count: int, concurrency: int, resume: bool, mode: str,
                 max_output_tokens: int, effort: str | None,
                 output_path: str | None, backend_role: str,
                 temperature: float | None, top_p: float | None) -> None:
    """Evaluate a model on a month's hard split."""
    config = _load_config(config_path)
    eval_config = evalrun.EvalConfig(
        month=month,
        model_id=model_id,
        reasoning_effort=effort,
        global_seed=seed,
        max_output_tokens=max_output_tokens,
        sample_count=sample_count,
        concurrency=concurrency,
        mode=mode,
        resume=resume,
        temperature=temperature,
        top_p=top_p,
    )
    eval_config.output_path = output_path or evalrun.default_output_path(
        config.results_root, eval_config)
    layout = config.layout(month)
    run = evalrun.run_eval(eval_config, config.gateway(backend_role),
                           hard_split_path=layout.hard_path)
    overall = run["overall"]
    click.echo(f"{month} {model_id} [{mode}]: "
               f"{overall['correct']}/{overall['total']} "
               f"accuracy={overall['accuracy']:.3f}")
    click.echo(f"results: {eval_config.output_path}")


@main.command(name="layout-check")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--month", default=None)
def layout_check_command(config_path: str, month: str | None) -> None:
    """Verify a month's artifact layout is complete and clean."""
    config = _load_config(config_path)
    failed = False
    for target in _months(config, month):
        result = layout_check(config, target)
        click.echo(json.dumps(result, indent=1))
        failed = failed or not result["ok"]
    if failed:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
