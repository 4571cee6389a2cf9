"""Command-line front end: induce | embed | report | selfcheck.

Runs are described by a TOML config (see README); most protocol knobs can
be overridden per invocation. Exit codes: 0 clean, 2 when some cells
failed but the run produced partial results, 1 for config or IO problems.
"""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import click

from .data import CellTypeError, SchemaMismatch, load_csv
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ProviderSpec,
    run_embedding_experiment,
    run_induction_experiment,
    selfcheck_dataset,
)
from .metrics import MetricsReport, emit_table

_CONFIG_ERRORS = (ConfigError, SchemaMismatch, CellTypeError, OSError)


def _overridden(
    config: ExperimentConfig,
    model=None,
    endpoint=None,
    temperature=None,
    depth=None,
    splits=None,
    seed=None,
    cache_dir=None,
    offline=False,
    no_stratify=False,
    mode=None,
    **updates,
) -> ExperimentConfig:
    if splits:
        try:
            updates["split_fractions"] = tuple(float(s) for s in splits.split(","))
        except ValueError:
            raise ConfigError(f"bad --splits value {splits!r}; expected e.g. 0.67,0.5")
    if seed is not None:
        updates["seed"] = seed
    if cache_dir:
        updates["cache_dir"] = Path(cache_dir)
    if offline:
        updates["offline"] = True
    if no_stratify:
        updates["stratify"] = False
    if depth is not None:
        updates["max_depth"] = None if depth == 0 else depth
    if mode:
        updates["embedding_mode"] = mode
    if model or endpoint or temperature is not None:
        if config.providers:
            first = replace(
                config.providers[0],
                **{
                    key: value
                    for key, value in {
                        "model": model,
                        "endpoint": endpoint,
                        "temperature": temperature,
                    }.items()
                    if value is not None
                },
            )
            updates["providers"] = (first,) + config.providers[1:]
        else:
            updates["providers"] = (
                ProviderSpec(
                    kind="http",
                    model=model or "default",
                    endpoint=endpoint or "",
                    temperature=temperature,
                ),
            )
    return replace(config, **updates)


def _write_outputs(result, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(result.report.to_csv(), encoding="utf-8")
    (out / "report_median.csv").write_text(
        result.report.to_csv(aggregated=True), encoding="utf-8"
    )
    table = emit_table(result.report)
    (out / "table.md").write_text(table + "\n", encoding="utf-8")
    click.echo(table)
    for failure in result.failures:
        click.echo(
            f"FAILED {failure.dataset}/{failure.method} "
            f"fraction={failure.split_fraction} repeat={failure.repeat}: {failure.error}",
            err=True,
        )


def _run(runner, config_path, trees_field, trees, out, **overrides):
    try:
        config = ExperimentConfig.from_toml(config_path)
        if trees is not None:
            overrides[trees_field] = trees
        config = _overridden(config, **overrides)
        result = runner(config)
        _write_outputs(result, out or "out")
    except _CONFIG_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if result.failures:
        sys.exit(2)


def _experiment_options(command):
    decorators = [
        click.option("--config", "config_path", required=True, type=click.Path(exists=True)),
        click.option("--model", default=None, help="Override the first provider's model."),
        click.option("--endpoint", default=None, help="Override the first provider's endpoint."),
        click.option("--temperature", type=float, default=None),
        click.option("--splits", default=None, help="Comma-separated train fractions."),
        click.option("--seed", type=int, default=None),
        click.option("--cache-dir", default=None, type=click.Path()),
        click.option("--offline", is_flag=True, help="Fail instead of calling the network."),
        click.option("--no-stratify", is_flag=True, help="Plain random splits."),
        click.option("--out", default="out", type=click.Path(), help="Output directory."),
    ]
    for decorator in reversed(decorators):
        command = decorator(command)
    return command


@click.group()
def main():
    """Zero-shot decision trees from chat models, and their embeddings."""


@main.command()
@_experiment_options
@click.option("--depth", type=int, default=None, help="Max tree depth; 0 = let the model pick.")
@click.option("--trees", type=int, default=None, help="Valid trees per evaluation cell.")
def induce(config_path, trees, out, **overrides):
    """Induce trees from feature names and score them against a greedy baseline."""
    _run(run_induction_experiment, config_path, "trees_per_cell", trees, out, **overrides)


@main.command()
@_experiment_options
@click.option("--trees", type=int, default=None, help="Forest size per embedding.")
@click.option(
    "--mode", type=click.Choice(["extend", "replace"]), default=None,
    help="Append bits to the features or replace them.",
)
def embed(config_path, trees, out, **overrides):
    """Benchmark forest-embedding MLPs against plain and random-trees MLPs."""
    _run(run_embedding_experiment, config_path, "embedding_trees", trees, out, **overrides)


@main.command()
@click.argument("scores_csv", type=click.Path(exists=True))
@click.option("--format", "table_format", type=click.Choice(["markdown", "csv"]), default="markdown")
@click.option("--metric", type=click.Choice(["macro_f1", "balanced_accuracy"]), default="macro_f1")
@click.option("--diff-baseline", default=None, help="Show signed differences against this method.")
@click.option("--out", default="-", help="Output file, - for stdout.")
def report(scores_csv, table_format, metric, diff_baseline, out):
    """Re-render tables from a per-repeat scores CSV."""
    try:
        scores = MetricsReport.from_csv(Path(scores_csv).read_text(encoding="utf-8"))
        table = emit_table(scores, format=table_format, metric=metric, diff_baseline=diff_baseline)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if out == "-":
        click.echo(table)
    else:
        Path(out).write_text(table + "\n", encoding="utf-8")


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.argument("csv_path", required=False, type=click.Path(exists=True))
@click.argument("schema_path", required=False, type=click.Path(exists=True))
def selfcheck(config_path, csv_path, schema_path):
    """Report whether a shallow data-driven tree fits each dataset (advisory)."""
    try:
        targets = []
        if config_path:
            config = ExperimentConfig.from_toml(config_path)
            targets = [(entry.name, entry.load()) for entry in config.datasets]
        elif csv_path and schema_path:
            targets = [(csv_path, load_csv(csv_path, schema_path=schema_path))]
        else:
            raise ConfigError("pass --config, or a CSV path plus a schema path")
        for name, dataset in targets:
            result = selfcheck_dataset(dataset, name=name)
            verdict = "pass" if result.passed else "fail"
            click.echo(
                f"{name}: {verdict} "
                f"(depth {result.best_depth}, training F1 {result.train_f1:.3f})"
            )
    except _CONFIG_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
