"""JSON persistence, schema validation, and statistics export.

File formats:
  graph      {"nodes": [{"id","rank"}...], "edges": [{"id","rank","u","v"}...]}
  pop.json   {"entries": [{"program": str, "graph": graph, "fitness": {...}|null}]}
  lib.json   [{"name": str, "arity": int, "body": "builtin"|s-expr, "logp": float}]
  report.json  one iteration's bookkeeping

State layout: <state_dir>/iteration_<k>/{pop,lib,report}.json, written to a
temporary sibling and swapped in so readers never see a half-written
iteration.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

from .dsl import (
    BUILTIN_TYPES,
    DslError,
    Library,
    Primitive,
    Program,
    SIZE_LIMIT,
    curry_args,
    expr_to_str,
    infer_type,
    make_abstraction,
    parse_expr,
)
from .evolution import EvolutionState, FitnessRecord, IterationReport, PopulationEntry
from .graph import FeatureGraph, InvariantViolation


def write_json(path, obj) -> None:
    """Serialize obj to path atomically (write sibling, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(obj, f, indent=2)
            f.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path):
    with open(path) as f:
        return json.load(f)


def population_to_json(entries) -> dict:
    return {
        "entries": [
            {
                "program": e.program.serialize(),
                "graph": e.graph.to_json_dict(),
                "fitness": None if e.fitness is None else e.fitness.to_json_dict(),
            }
            for e in entries
        ]
    }


def population_from_json(data) -> list:
    out = []
    for row in data["entries"]:
        out.append(
            PopulationEntry(
                program=Program.parse(row["program"]),
                graph=FeatureGraph.from_json_dict(row["graph"]),
                fitness=None
                if row.get("fitness") is None
                else FitnessRecord.from_json_dict(row["fitness"]),
            )
        )
    return out


def library_to_json(lib: Library) -> list:
    rows = []
    for p in lib.primitives:
        rows.append(
            {
                "name": p.name,
                "arity": p.arity,
                "body": "builtin" if p.is_builtin else expr_to_str(p.body),
                "logp": lib.logp[p.name],
            }
        )
    return rows


def library_from_json(rows) -> Library:
    prims: list[Primitive] = []
    logp: dict[str, float] = {}
    for row in rows:
        name = row["name"]
        body = row["body"]
        if body == "builtin":
            if name not in BUILTIN_TYPES:
                raise DslError(f"unknown builtin {name!r}")
            prims.append(Primitive(name, BUILTIN_TYPES[name]))
        else:
            # abstractions may reference anything defined above them
            partial = Library(prims, {p.name: 0.0 for p in prims})
            prims.append(make_abstraction(name, parse_expr(body), partial))
        logp[name] = float(row["logp"])
    return Library(prims, logp)


def save_iteration(state_dir, state: EvolutionState, report: IterationReport) -> Path:
    """Persist one completed iteration under its own directory."""
    state_dir = Path(state_dir)
    final = state_dir / f"iteration_{state.iteration}"
    state_dir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=state_dir, prefix=final.name))
    try:
        write_json(tmp / "pop.json", population_to_json(state.population))
        write_json(tmp / "lib.json", library_to_json(state.library))
        write_json(tmp / "report.json", report.to_json_dict())
        if final.exists():
            import shutil

            shutil.rmtree(final)
        os.replace(tmp, final)
    except BaseException:
        import shutil

        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def iteration_dirs(state_dir) -> list[tuple[int, Path]]:
    state_dir = Path(state_dir)
    out = []
    if not state_dir.is_dir():
        return out
    for child in state_dir.iterdir():
        if child.is_dir() and child.name.startswith("iteration_"):
            try:
                k = int(child.name.split("_", 1)[1])
            except ValueError:
                continue
            out.append((k, child))
    return sorted(out)


STATS_COLUMNS = ["iteration", "population_size", "rank", "train_accuracy", "validation_accuracy"]


def export_stats(state_dir) -> list[dict]:
    """Per-entry rows across all persisted iterations.

    Within an iteration entries are ordered by descending train accuracy,
    unevaluated entries last; accuracies that are absent stay None so the
    CSV writes empty cells rather than zeros.
    """
    dirs = iteration_dirs(state_dir)
    if not dirs:
        raise FileNotFoundError(f"no iterations persisted under {state_dir}")
    rows = []
    for k, d in dirs:
        entries = population_from_json(read_json(d / "pop.json"))
        ordered = sorted(
            entries,
            key=lambda e: (e.fitness is None, -(e.fitness.train_accuracy if e.fitness else 0.0)),
        )
        for rank, e in enumerate(ordered, start=1):
            rows.append(
                {
                    "iteration": k,
                    "population_size": len(entries),
                    "rank": rank,
                    "train_accuracy": None if e.fitness is None else e.fitness.train_accuracy,
                    "validation_accuracy": None
                    if e.fitness is None
                    else e.fitness.validation_accuracy,
                }
            )
    return rows


def write_stats_csv(rows, out_path) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(STATS_COLUMNS)
        for r in rows:
            w.writerow(["" if r[c] is None else r[c] for c in STATS_COLUMNS])


def validate_files(paths) -> list[str]:
    """Check graph/population/library/report files, returning violations.

    Each violation is "<path>: <detail>"; an empty list means every file
    passed.
    """
    violations: list[str] = []
    for path in paths:
        try:
            data = read_json(path)
        except (OSError, json.JSONDecodeError) as e:
            violations.append(f"{path}: unreadable ({e})")
            continue
        violations.extend(f"{path}: {v}" for v in _validate_payload(data))
    return violations


def _validate_payload(data) -> list[str]:
    if isinstance(data, list):
        return _validate_library(data)
    if isinstance(data, dict) and "entries" in data:
        return _validate_population(data)
    if isinstance(data, dict) and "nodes" in data and "edges" in data:
        return _validate_graph(data)
    if isinstance(data, dict) and "iteration" in data:
        return []
    return ["unrecognized file format"]


def _validate_graph(data) -> list[str]:
    try:
        FeatureGraph.from_json_dict(data)
    except InvariantViolation as e:
        return [str(e)]
    except (KeyError, TypeError, ValueError) as e:
        return [f"malformed graph ({e})"]
    return []


def _validate_library(rows) -> list[str]:
    try:
        lib = library_from_json(rows)
    except (DslError, KeyError, TypeError, ValueError) as e:
        return [f"malformed library ({e})"]
    missing = [n for n in BUILTIN_TYPES if n not in lib]
    if missing:
        return [f"missing builtin primitives: {', '.join(missing)}"]
    return []


def _validate_population(data) -> list[str]:
    out = []
    entries = data.get("entries")
    if not isinstance(entries, list):
        return ["entries must be a list"]
    for i, row in enumerate(entries):
        where = f"entry {i}"
        try:
            prog = Program.parse(row["program"])
            if prog.size > SIZE_LIMIT:
                out.append(f"{where}: size limit exceeded ({prog.size} > {SIZE_LIMIT})")
        except (DslError, KeyError, TypeError) as e:
            out.append(f"{where}: bad program ({e})")
        try:
            FeatureGraph.from_json_dict(row["graph"])
        except (InvariantViolation, KeyError, TypeError, ValueError) as e:
            out.append(f"{where}: {e}")
        fit = row.get("fitness")
        if fit is not None:
            try:
                rec = FitnessRecord.from_json_dict(fit)
                for label, v in (
                    ("train_accuracy", rec.train_accuracy),
                    ("validation_accuracy", rec.validation_accuracy),
                ):
                    if v is not None and not (0.0 <= v <= 1.0):
                        out.append(f"{where}: {label} {v} outside [0, 1]")
            except (KeyError, TypeError, ValueError) as e:
                out.append(f"{where}: bad fitness ({e})")
    return out
