"""Command-line surface: evolve, search, compress, emit-embedding, isocheck,
validate, stats-csv.

Exit codes: 0 success, 1 validation failure, 2 runtime error.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import persist
from .dsl import DivergenceError, DslError, Program, SIZE_LIMIT, evaluate, initial_library
from .embedding import EmbeddingSpec, graph_map
from .evolution import (
    EvolutionConfig,
    ExternalJobBackend,
    FitnessUnavailable,
    SurrogateBackend,
    run_evolution,
)
from .graph import FeatureGraph, InvariantViolation, isomorphic_featured, isomorphic_structure
from .search import SearchBudget, heap_search, infer_unigrams, reweight

STATE_DIR_ENV = "GSSNN_STATE_DIR"


def _default_state_dir():
    return os.environ.get(STATE_DIR_ENV, "state")


def _runtime_errors(f):
    """Map engine failures to exit code 2, leaving validation exits alone."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (
            DslError,
            InvariantViolation,
            FitnessUnavailable,
            FileNotFoundError,
            OSError,
            ValueError,
            KeyError,
            json.JSONDecodeError,
        ) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(2)

    return wrapper


@click.group()
def main():
    """Evolve and inspect graph-generating symbolic programs."""


@main.command()
@click.option("--iterations", default=5, show_default=True)
@click.option("--fitness", type=click.Choice(["surrogate", "external"]), default="surrogate", show_default=True)
@click.option("--jobs-dir", type=click.Path(), default="jobs", show_default=True)
@click.option("--pop-cap", default=50, show_default=True)
@click.option("--selection-threshold", default=25, show_default=True)
@click.option("--budget-secs", default=15.0, show_default=True, help="Wall-clock search budget per iteration.")
@click.option("--max-programs", default=None, type=int, help="Deterministic enumeration budget; overrides wall clock.")
@click.option("--max-size", default=SIZE_LIMIT, show_default=True)
@click.option("--compression-rounds", default=3, show_default=True)
@click.option("--max-arity", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--embed-m", default=512, show_default=True)
@click.option("--embed-q", default=512, show_default=True)
@click.option("--job-timeout-secs", default=600.0, show_default=True)
@click.option("--state-dir", type=click.Path(), default=None, help=f"Defaults to ${STATE_DIR_ENV} or ./state.")
@_runtime_errors
def evolve(
    iterations,
    fitness,
    jobs_dir,
    pop_cap,
    selection_threshold,
    budget_secs,
    max_programs,
    max_size,
    compression_rounds,
    max_arity,
    seed,
    embed_m,
    embed_q,
    job_timeout_secs,
    state_dir,
):
    """Run the evolution loop and persist per-iteration state."""
    if pop_cap < selection_threshold or selection_threshold < 1:
        raise ValueError("pop-cap must be >= selection-threshold >= 1")
    config = EvolutionConfig(
        pop_cap=pop_cap,
        selection_threshold=selection_threshold,
        wall_secs=None if max_programs is not None else budget_secs,
        max_programs=max_programs,
        max_size=max_size,
        compression_rounds=compression_rounds,
        max_arity=max_arity,
        iterations=iterations,
        seed=seed,
        embed_m=embed_m,
        embed_q=embed_q,
    )
    if fitness == "surrogate":
        backend = SurrogateBackend()
    else:
        backend = ExternalJobBackend(
            jobs_dir, m=embed_m, q=embed_q, seed=seed, timeout_secs=job_timeout_secs
        )
    state_dir = state_dir or _default_state_dir()

    def log(report):
        parts = [
            f"iteration {report.iteration}:",
            f"population {report.population_before} -> {report.population_after}",
            f"(+{report.novel_added} novel, -{report.selected_out} selected out,",
            f"{report.shortened} shortened, {len(report.abstractions)} abstractions,",
            f"{report.enumerated} enumerated in {report.elapsed_secs:.2f}s)",
        ]
        click.echo(" ".join(parts))

    run_evolution(config, backend=backend, state_dir=state_dir, log=log)
    click.echo(f"state written to {state_dir}")


@main.command()
@click.option("--lib", "lib_path", type=click.Path(exists=True), default=None, help="Library JSON; defaults to the builtins.")
@click.option("--population", "pop_path", type=click.Path(exists=True), default=None, help="pop.json used for seen graphs and the unigram fit.")
@click.option("--budget-secs", default=15.0, show_default=True)
@click.option("--max-programs", default=None, type=int, help="Deterministic enumeration budget; overrides wall clock.")
@click.option("--max-size", default=SIZE_LIMIT, show_default=True)
@click.option("--max-results", default=50, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write JSON lines here instead of stdout.")
@_runtime_errors
def search(lib_path, pop_path, budget_secs, max_programs, max_size, max_results, out):
    """Stream novel programs as JSON lines {program, logp, graph}."""
    lib = initial_library() if lib_path is None else persist.library_from_json(persist.read_json(lib_path))
    population = []
    if pop_path is not None:
        entries = persist.population_from_json(persist.read_json(pop_path))
        population = [(e.program, e.graph) for e in entries]
        model = reweight(infer_unigrams([p for p, _ in population], lib))
        lib = lib.with_weights(model.logp)
    budget = SearchBudget(
        wall_secs=None if max_programs is not None else budget_secs,
        max_programs=max_programs,
        max_size=max_size,
        max_results=max_results,
    )
    result = heap_search(lib, population, budget)
    sink = open(out, "w") if out else sys.stdout
    try:
        for hit in result.novel:
            line = {
                "program": hit.program.serialize(),
                "logp": hit.logp,
                "graph": hit.graph.to_json_dict(),
            }
            sink.write(json.dumps(line) + "\n")
    finally:
        if out:
            sink.close()
    click.echo(
        f"{len(result.novel)} novel, {len(result.shortenings)} shortenings, "
        f"{result.stats.enumerated} enumerated, {result.stats.diverged} diverged",
        err=True,
    )


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True, help="pop.json or a JSON list of program strings.")
@click.option("--lib", "lib_path", type=click.Path(exists=True), default=None)
@click.option("--rounds", default=3, show_default=True)
@click.option("--max-arity", default=2, show_default=True)
@click.option("--out-lib", type=click.Path(), default=None, help="Defaults to --lib (in place).")
@click.option("--out-corpus", type=click.Path(), default=None, help="Defaults to --corpus (in place).")
@_runtime_errors
def compress(corpus_path, lib_path, rounds, max_arity, out_lib, out_corpus):
    """Discover abstractions over a corpus and rewrite it."""
    from .compression import compress as compress_corpus

    lib = initial_library() if lib_path is None else persist.library_from_json(persist.read_json(lib_path))
    data = persist.read_json(corpus_path)
    entries = None
    if isinstance(data, dict) and "entries" in data:
        entries = persist.population_from_json(data)
        corpus = [e.program for e in entries]
    else:
        corpus = [Program.parse(s) for s in data]
    result = compress_corpus(corpus, lib, max_rounds=rounds, max_arity=max_arity)
    out_lib = out_lib or lib_path or "lib.json"
    out_corpus = out_corpus or corpus_path
    persist.write_json(out_lib, persist.library_to_json(result.library))
    if entries is not None:
        from dataclasses import replace

        entries = [replace(e, program=p) for e, p in zip(entries, result.corpus)]
        persist.write_json(out_corpus, persist.population_to_json(entries))
    else:
        persist.write_json(out_corpus, [p.serialize() for p in result.corpus])
    for a in result.abstractions:
        click.echo(f"{a.name} (arity {a.arity}, utility {a.utility}): {a.serialize()}")
    click.echo(f"library -> {out_lib}, corpus -> {out_corpus}")


@main.command(name="emit-embedding")
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--x", "x_path", default="zeros", show_default=True, help="JSON array of m floats, or 'zeros'.")
@click.option("--m", required=True, type=int)
@click.option("--q", required=True, type=int)
@click.option("--pos-normalized", is_flag=True, help="Conventional (i mod q/4)/(q/4) wavelength exponent.")
@click.option("--simple-reorder", is_flag=True, help="Use (id, rank) directly as the position pair.")
@click.option("--out", type=click.Path(), default=None, help="Write here instead of stdout.")
@_runtime_errors
def emit_embedding(graph_path, x_path, m, q, pos_normalized, simple_reorder, out):
    """Embed a graph file into per-element feature vectors."""
    g = FeatureGraph.from_json_dict(persist.read_json(graph_path))
    spec = EmbeddingSpec.for_graph(
        g, m, q, pos_normalized=pos_normalized, simple_reorder=simple_reorder
    )
    if x_path == "zeros":
        x = np.zeros(m)
    else:
        x = np.asarray(persist.read_json(x_path), dtype=float)
    embedded = graph_map(g, x, spec)
    payload = embedded.to_json_dict()
    if out:
        persist.write_json(out, payload)
        click.echo(f"embedding -> {out}")
    else:
        json.dump(payload, sys.stdout)
        sys.stdout.write("\n")


@main.command()
@click.argument("graph1", type=click.Path(exists=True))
@click.argument("graph2", type=click.Path(exists=True))
@click.option("--featured", is_flag=True, help="Require ids/ranks to match, not just structure.")
@_runtime_errors
def isocheck(graph1, graph2, featured):
    """Print whether two graph files are isomorphic; exits 1 when they are not."""
    try:
        g1 = FeatureGraph.from_json_dict(persist.read_json(graph1))
        g2 = FeatureGraph.from_json_dict(persist.read_json(graph2))
    except InvariantViolation as e:
        click.echo(f"invalid graph: {e}", err=True)
        sys.exit(1)
    same = isomorphic_featured(g1, g2) if featured else isomorphic_structure(g1, g2)
    click.echo("true" if same else "false")
    if not same:
        sys.exit(1)


@main.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
def validate(paths):
    """Check graph/population/library files against their invariants."""
    violations = persist.validate_files(paths)
    for v in violations:
        click.echo(v)
    if violations:
        sys.exit(1)
    click.echo(f"{len(paths)} file(s) valid")


@main.command(name="stats-csv")
@click.option("--state-dir", type=click.Path(), default=None, help=f"Defaults to ${STATE_DIR_ENV} or ./state.")
@click.option("--out", type=click.Path(), default=None, help="CSV path; defaults to <state-dir>/stats.csv.")
@click.option("--no-plot", is_flag=True, help="Skip rendering the companion PNG.")
@_runtime_errors
def stats_csv(state_dir, out, no_plot):
    """Export per-entry rank/accuracy rows, with a rendered figure alongside."""
    state_dir = state_dir or _default_state_dir()
    rows = persist.export_stats(state_dir)
    out = Path(out) if out else Path(state_dir) / "stats.csv"
    persist.write_stats_csv(rows, out)
    click.echo(f"{len(rows)} rows -> {out}")
    if not no_plot:
        from .plots import render_stats_figure

        png = out.with_suffix(".png")
        render_stats_figure(rows, png)
        click.echo(f"figure -> {png}")


if __name__ == "__main__":
    main()
