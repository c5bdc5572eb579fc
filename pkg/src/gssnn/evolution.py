"""Evolution loop: evaluate, select, compress, refit, search, extend.

Fitness comes from a pluggable backend: a deterministic surrogate for
offline runs and tests, or an external trainer speaking the filesystem job
protocol (jobs/<id>/job.json written here, fitness.json written by the
trainer).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .compression import compress
from .dsl import SIZE_LIMIT, Library, Program, initial_library
from .embedding import EmbeddingSpec
from .graph import FeatureGraph
from .search import SearchBudget, UnigramModel, heap_search, infer_unigrams, reweight


@dataclass(frozen=True)
class FitnessRecord:
    train_accuracy: float
    validation_accuracy: float | None
    evaluator_id: str

    def to_json_dict(self) -> dict:
        return {
            "train_accuracy": self.train_accuracy,
            "validation_accuracy": self.validation_accuracy,
            "evaluator_id": self.evaluator_id,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "FitnessRecord":
        return cls(
            float(d["train_accuracy"]),
            None if d.get("validation_accuracy") is None else float(d["validation_accuracy"]),
            str(d["evaluator_id"]),
        )


@dataclass(frozen=True)
class PopulationEntry:
    program: Program
    graph: FeatureGraph
    fitness: FitnessRecord | None = None


@dataclass
class EvolutionConfig:
    pop_cap: int = 50
    selection_threshold: int = 25
    wall_secs: float | None = 15.0
    max_programs: int | None = None
    max_size: int = SIZE_LIMIT
    compression_rounds: int = 3
    max_arity: int = 2
    iterations: int = 5
    seed: int = 0
    embed_m: int = 512
    embed_q: int = 512


def substream(seed: int, name: str) -> int:
    """Stable derived seed for a named stochastic site."""
    h = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(h[:4], "big")


def graph_digest(graph: FeatureGraph) -> str:
    return hashlib.sha256(repr(graph.canonical_key()).encode()).hexdigest()


def surrogate_fitness(graph: FeatureGraph) -> FitnessRecord:
    """Deterministic pseudo-accuracy in [0.5, 1.0) from the graph identity.

    Featured-isomorphic graphs share a canonical key and therefore a score.
    """
    digest = hashlib.sha256(repr(graph.canonical_key()).encode()).digest()
    frac = int.from_bytes(digest[:8], "big") / 2.0**64
    return FitnessRecord(0.5 + 0.5 * frac, None, "surrogate")


class SurrogateBackend:
    def evaluate(self, entries):
        return [surrogate_fitness(e.graph) for e in entries]


class FitnessUnavailable(RuntimeError):
    """External fitness could not be obtained; the iteration must abort."""


class ExternalJobBackend:
    """Filesystem job protocol against a separately running trainer.

    For each entry a directory jobs/<id>/ receives job.json with the graph,
    its embedding spec, and a derived seed; the trainer answers with
    fitness.json in the same directory.  Polling past the deadline, or an
    error.json from the trainer, aborts the evaluation.
    """

    def __init__(
        self,
        jobs_dir,
        m: int = 512,
        q: int = 512,
        seed: int = 0,
        timeout_secs: float = 600.0,
        poll_secs: float = 0.5,
    ):
        self.jobs_dir = Path(jobs_dir)
        self.m = m
        self.q = q
        self.seed = seed
        self.timeout_secs = timeout_secs
        self.poll_secs = poll_secs
        self._seq = 0

    def evaluate(self, entries):
        job_dirs = []
        for e in entries:
            digest = graph_digest(e.graph)[:8]
            job_id = f"job-{self._seq:05d}-{digest}"
            self._seq += 1
            d = self.jobs_dir / job_id
            d.mkdir(parents=True, exist_ok=True)
            spec = EmbeddingSpec.for_graph(e.graph, self.m, self.q)
            payload = {
                "graph": e.graph.to_json_dict(),
                "spec": spec.to_json_dict(),
                "seed": substream(self.seed, f"fitness:{digest}"),
            }
            tmp = d / "job.json.tmp"
            tmp.write_text(json.dumps(payload, indent=2))
            tmp.replace(d / "job.json")
            job_dirs.append(d)

        deadline = time.monotonic() + self.timeout_secs
        records: list = [None] * len(job_dirs)
        while any(r is None for r in records):
            for i, d in enumerate(job_dirs):
                if records[i] is not None:
                    continue
                if (d / "error.json").exists():
                    detail = (d / "error.json").read_text()
                    raise FitnessUnavailable(f"trainer reported an error for {d.name}: {detail}")
                f = d / "fitness.json"
                if f.exists():
                    try:
                        records[i] = FitnessRecord.from_json_dict(json.loads(f.read_text()))
                    except (json.JSONDecodeError, KeyError, ValueError):
                        # half-written file; retry on the next poll
                        pass
            if any(r is None for r in records):
                if time.monotonic() > deadline:
                    waiting = [d.name for d, r in zip(job_dirs, records) if r is None]
                    raise FitnessUnavailable(f"timed out waiting for {', '.join(waiting)}")
                time.sleep(self.poll_secs)
        return records


def select_rank_ltp_50(entries):
    """Keep the top half by train accuracy, dropping floor(n/2) entries.

    Rank ties break toward the smaller program, then the lexicographically
    smaller serialization.  Survivors come back in rank order.
    """
    for e in entries:
        if e.fitness is None:
            raise ValueError("selection over unevaluated entries")
    ranked = sorted(
        entries,
        key=lambda e: (-e.fitness.train_accuracy, e.program.size, e.program.serialize()),
    )
    return ranked[: len(entries) - len(entries) // 2]


@dataclass
class IterationReport:
    iteration: int
    population_before: int
    evaluated: int
    selected_out: int
    abstractions: list = field(default_factory=list)
    shortened: int = 0
    novel_added: int = 0
    population_after: int = 0
    library_size: int = 0
    enumerated: int = 0
    diverged: int = 0
    elapsed_secs: float = 0.0

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvolutionState:
    population: list
    library: Library
    iteration: int = 0


def run_iteration(state: EvolutionState, config: EvolutionConfig, backend) -> tuple[EvolutionState, IterationReport]:
    """One evolution step; the input state is left untouched.

    Phase order: fitness for unevaluated entries, selection past the
    threshold, corpus compression, unigram refit with spread clamping,
    best-first search, population extension with shortenings applied.
    """
    t0 = time.monotonic()
    iteration = state.iteration + 1
    pop = list(state.population)
    lib = state.library
    report = IterationReport(
        iteration=iteration,
        population_before=len(pop),
        evaluated=0,
        selected_out=0,
    )

    pending = [i for i, e in enumerate(pop) if e.fitness is None]
    if pending:
        records = backend.evaluate([pop[i] for i in pending])
        for i, rec in zip(pending, records):
            pop[i] = replace(pop[i], fitness=rec)
        report.evaluated = len(pending)

    if len(pop) >= config.selection_threshold:
        survivors = select_rank_ltp_50(pop)
        report.selected_out = len(pop) - len(survivors)
        pop = survivors

    cres = compress(
        [e.program for e in pop],
        lib,
        max_rounds=config.compression_rounds,
        max_arity=config.max_arity,
    )
    lib = cres.library
    # rewriting inlines back to the identical expression, so graphs carry over
    pop = [replace(e, program=q) for e, q in zip(pop, cres.corpus)]
    report.abstractions = [
        {"name": a.name, "body": a.serialize(), "arity": a.arity, "utility": a.utility}
        for a in cres.abstractions
    ]

    model = reweight(infer_unigrams([e.program for e in pop], lib))
    lib = lib.with_weights(model.logp)

    room = config.pop_cap - len(pop)
    if room > 0:
        budget = SearchBudget(
            wall_secs=config.wall_secs,
            max_programs=config.max_programs,
            max_size=config.max_size,
            max_results=room,
        )
        result = heap_search(lib, [(e.program, e.graph) for e in pop], budget)
        for s in result.shortenings:
            pop[s.index] = replace(pop[s.index], program=s.program, graph=s.graph)
        report.shortened = len(result.shortenings)
        pop.extend(PopulationEntry(h.program, h.graph) for h in result.novel)
        report.novel_added = len(result.novel)
        report.enumerated = result.stats.enumerated
        report.diverged = result.stats.diverged

    report.population_after = len(pop)
    report.library_size = len(lib)
    report.elapsed_secs = time.monotonic() - t0
    return EvolutionState(pop, lib, iteration), report


def run_evolution(config: EvolutionConfig, backend=None, state_dir=None, log=None):
    """Run config.iterations steps from an empty population.

    Returns (final state, list of reports).  When state_dir is given each
    completed iteration is persisted under state_dir/iteration_<k>/.
    """
    from . import persist

    backend = backend or SurrogateBackend()
    state = EvolutionState([], initial_library(), 0)
    reports = []
    for _ in range(config.iterations):
        state, report = run_iteration(state, config, backend)
        reports.append(report)
        if state_dir is not None:
            persist.save_iteration(state_dir, state, report)
        if log is not None:
            log(report)
    return state, reports
