"""Distributional program search: best-first enumeration under a unigram model.

The enumerator is an A*-style heap search over partial derivations.  Partial
entries are prioritised by an admissible upper bound (accumulated
log-probability plus, per open request, the log-probability of the best
possible completion), complete entries by their exact log-probability, so
programs pop in non-increasing probability order.  Exact probability ties are
buffered until the heap can no longer produce that level and then emitted in
lexicographic order of the serialized form.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

from .dsl import (
    GRAPH,
    SIZE_LIMIT,
    App,
    DivergenceError,
    Library,
    Prim,
    Program,
    curry_args,
    expr_size,
    expr_to_str,
    evaluate,
)
from .graph import FeatureGraph, isomorphic_featured, isomorphic_structure

ROOT_TYPE = (GRAPH, GRAPH)


def _rebuild(args, base):
    t = base
    for a in reversed(args):
        t = (a, t)
    return t


@dataclass(frozen=True)
class Production:
    prim: str
    arg_types: tuple
    logp: float  # normalized: log P(prim | requested type)


class TypedGrammar:
    """Per-request-type productions with normalized log-probabilities.

    A primitive yields a production for request type T when some curried
    suffix of its signature equals T; the consumed prefix becomes the
    argument requests.  Types with no inhabited production are dropped,
    together with any production mentioning them.
    """

    def __init__(self, lib: Library, logp: dict | None = None):
        weights = dict(lib.logp if logp is None else logp)
        sigs = {p.name: curry_args(p.type) for p in lib.primitives}
        raw: dict = {}
        todo = [ROOT_TYPE]
        while todo:
            t = todo.pop()
            if t in raw:
                continue
            rows = []
            for p in lib.primitives:
                args, base = sigs[p.name]
                for j in range(len(args) + 1):
                    if _rebuild(args[j:], base) == t:
                        rows.append((p.name, args[:j]))
            raw[t] = rows
            for _, argts in rows:
                todo.extend(a for a in argts if a not in raw)

        inhabited: set = set()
        changed = True
        while changed:
            changed = False
            for t, rows in raw.items():
                if t in inhabited:
                    continue
                if any(all(a in inhabited for a in argts) for _, argts in rows):
                    inhabited.add(t)
                    changed = True

        self.productions: dict = {}
        for t, rows in raw.items():
            if t not in inhabited:
                continue
            rows = [r for r in rows if all(a in inhabited for a in r[1])]
            total = _logsumexp([weights[name] for name, _ in rows])
            self.productions[t] = [
                Production(name, argts, weights[name] - total) for name, argts in rows
            ]

        self._min_size = self._fix_min_size()
        self._best = self._fix_best_completion()

    def _fix_min_size(self) -> dict:
        ms = {t: math.inf for t in self.productions}
        changed = True
        while changed:
            changed = False
            for t, rows in self.productions.items():
                for r in rows:
                    cand = 1 + sum(ms[a] for a in r.arg_types)
                    if cand < ms[t]:
                        ms[t] = cand
                        changed = True
        return ms

    def _fix_best_completion(self) -> dict:
        # Iterated from above (0 is a trivial upper bound on any log
        # probability), so every iterate stays admissible; early stopping
        # costs efficiency, never ordering.
        h = {t: 0.0 for t in self.productions}
        for _ in range(1000):
            delta = 0.0
            for t, rows in self.productions.items():
                best = max(r.logp + sum(h[a] for a in r.arg_types) for r in rows)
                delta = max(delta, h[t] - best)
                h[t] = best
            if delta < 1e-12:
                break
        return h

    def min_size(self, t) -> float:
        return self._min_size.get(t, math.inf)

    def best_completion(self, t) -> float:
        return self._best[t]


def _logsumexp(xs):
    m = max(xs)
    return m + math.log(sum(math.exp(x - m) for x in xs))


def _build_expr(derivation):
    """Rebuild the expression from its preorder production choices."""
    it = iter(derivation)

    def go():
        name, n = next(it)
        if n == 0:
            return Prim(name)
        return App(Prim(name), tuple(go() for _ in range(n)))

    e = go()
    return e


def enumerate_programs(grammar: TypedGrammar, max_size: int = SIZE_LIMIT, deadline: float | None = None):
    """Yield (Program, logp) best-first with exact tie ordering.

    Priorities are fsum-rounded over the multiset of chosen production
    log-probabilities plus per-request completion bounds, so states with
    equal multisets get bit-identical priorities regardless of the order
    the derivation visited them.  Equal-priority complete programs are
    buffered and released in serialization order.
    """
    if ROOT_TYPE not in grammar.productions:
        return
    counter = itertools.count()
    # state: (chosen production logps, pending request stack, derivation)
    start = ((), (ROOT_TYPE,), ())
    heap = [(-grammar.best_completion(ROOT_TYPE), next(counter), start)]
    ties: list[tuple[str, Program, float]] = []
    tie_level = None

    def flush():
        ties.sort(key=lambda row: row[0])
        for _, prog, lp in ties:
            yield prog, lp
        ties.clear()

    while heap:
        if deadline is not None and time.monotonic() > deadline:
            break
        neg_ub, _, (terms, pending, deriv) = heapq.heappop(heap)
        if ties and -neg_ub < tie_level:
            yield from flush()
        if not pending:
            # with no open requests the bound is the exact log-probability
            logp = -neg_ub
            prog = Program(_build_expr(deriv))
            if not ties:
                tie_level = logp
            ties.append((prog.serialize(), prog, logp))
            continue
        t = pending[-1]
        rest = pending[:-1]
        for prod in grammar.productions[t]:
            new_pending = rest + tuple(reversed(prod.arg_types))
            new_terms = terms + (prod.logp,)
            if len(new_terms) + sum(grammar.min_size(a) for a in new_pending) > max_size:
                continue
            bound = math.fsum(new_terms + tuple(grammar.best_completion(a) for a in new_pending))
            state = (new_terms, new_pending, deriv + ((prod.prim, len(prod.arg_types)),))
            heapq.heappush(heap, (-bound, next(counter), state))
    yield from flush()


@dataclass
class UnigramModel:
    """Per-primitive log-likelihood weights (unnormalized)."""

    logp: dict[str, float]


def infer_unigrams(programs, lib: Library, alpha: float = 1.0) -> UnigramModel:
    """Laplace-smoothed unigram fit over primitive occurrences.

    An empty corpus degenerates to the uniform model, and primitives with
    zero count keep nonzero mass, so newly adopted abstractions stay
    reachable.
    """
    counts = {name: 0 for name in lib.names()}
    for p in programs:
        for name in _prim_occurrences(p.expr):
            if name not in counts:
                raise ValueError(f"program mentions unknown primitive {name!r}")
            counts[name] += 1
    total = sum(counts.values())
    denom = math.log(total + alpha * len(lib))
    return UnigramModel({n: math.log(c + alpha) - denom for n, c in counts.items()})


def _prim_occurrences(e):
    if isinstance(e, Prim):
        yield e.name
    elif isinstance(e, App):
        yield from _prim_occurrences(e.head)
        for a in e.args:
            yield from _prim_occurrences(a)


def reweight(model: UnigramModel, max_spread: float = 0.5) -> UnigramModel:
    """Clamp the weight spread to max_spread about the (preserved) mean.

    Scaling about the mean keeps the order and exact ties of the weights.
    Applying reweight to its own output is an exact no-op because the loop
    body only runs while the spread exceeds the bound.
    """
    values = dict(model.logp)
    if not values:
        return UnigramModel({})
    names = list(values)
    mean = sum(values[n] for n in names) / len(names)
    guard = 0
    while True:
        lo = min(values[n] for n in names)
        hi = max(values[n] for n in names)
        if hi - lo <= max_spread:
            break
        guard += 1
        # after the first pass only float rounding can leave the spread
        # above the bound, so shave the factor slightly on retries
        scale = max_spread / (hi - lo)
        if guard > 1:
            scale *= 1.0 - 1e-12
        values = {n: mean + (values[n] - mean) * scale for n in names}
    return UnigramModel(values)


@dataclass
class SearchBudget:
    wall_secs: float | None = 15.0
    max_programs: int | None = None  # deterministic alternative to wall time
    max_size: int = SIZE_LIMIT
    max_results: int = 50


@dataclass
class SearchHit:
    program: Program
    graph: FeatureGraph
    logp: float


@dataclass
class Shortening:
    """A strictly smaller program whose graph is featured-equal to a member."""

    index: int
    program: Program
    graph: FeatureGraph
    logp: float


@dataclass
class SearchStats:
    enumerated: int = 0
    diverged: int = 0
    elapsed_secs: float = 0.0


@dataclass
class SearchResult:
    novel: list[SearchHit] = field(default_factory=list)
    shortenings: list[Shortening] = field(default_factory=list)
    stats: SearchStats = field(default_factory=SearchStats)


def heap_search(
    lib: Library,
    population=(),
    budget: SearchBudget | None = None,
    model: UnigramModel | None = None,
) -> SearchResult:
    """Enumerate programs best-first, keeping novel graphs and shortenings.

    population is a sequence of (Program, FeatureGraph) pairs.  A candidate
    whose graph is structure-isomorphic to a seen graph is not novel; if it
    is featured-equal to a member's graph and strictly smaller than that
    member's program it is recorded as a shortening (the smallest wins,
    first found on ties).  Novel hits are pairwise non-isomorphic.
    """
    budget = budget or SearchBudget()
    grammar = TypedGrammar(lib, model.logp if model is not None else None)
    pop = [(p, g) for p, g in population]
    result = SearchResult()
    best_short: dict[int, Shortening] = {}
    t0 = time.monotonic()
    deadline = None if budget.wall_secs is None else t0 + budget.wall_secs
    if budget.max_results <= 0:
        result.stats.elapsed_secs = time.monotonic() - t0
        return result

    for prog, logp in enumerate_programs(grammar, budget.max_size, deadline):
        if budget.max_programs is not None and result.stats.enumerated >= budget.max_programs:
            break
        if deadline is not None and time.monotonic() > deadline:
            break
        result.stats.enumerated += 1
        try:
            graph = evaluate(prog, lib)
        except DivergenceError:
            result.stats.diverged += 1
            continue

        member_idx = None
        for i, (_, g) in enumerate(pop):
            if isomorphic_structure(graph, g):
                member_idx = i
                break
        if member_idx is not None:
            mp, mg = pop[member_idx]
            if isomorphic_featured(graph, mg) and prog.size < mp.size:
                prev = best_short.get(member_idx)
                if prev is None or prog.size < prev.program.size:
                    best_short[member_idx] = Shortening(member_idx, prog, graph, logp)
            continue
        if any(isomorphic_structure(graph, h.graph) for h in result.novel):
            continue
        result.novel.append(SearchHit(prog, graph, logp))
        if len(result.novel) >= budget.max_results:
            break

    result.shortenings = [best_short[i] for i in sorted(best_short)]
    result.stats.elapsed_secs = time.monotonic() - t0
    return result


def sample_program(grammar: TypedGrammar, rng, max_size: int = 12) -> Program:
    """Draw one program from the grammar, respecting a size budget."""
    if ROOT_TYPE not in grammar.productions:
        raise ValueError("grammar generates no programs")

    def go(t, size_budget):
        rows = [
            r
            for r in grammar.productions[t]
            if 1 + sum(grammar.min_size(a) for a in r.arg_types) <= size_budget
        ]
        weights = [math.exp(r.logp) for r in rows]
        pick = rng.random() * sum(weights)
        acc = 0.0
        prod = rows[-1]
        for r, w in zip(rows, weights):
            acc += w
            if pick <= acc:
                prod = r
                break
        used = 1
        args = []
        remaining = size_budget - 1
        argts = prod.arg_types
        for i, a in enumerate(argts):
            reserve = sum(grammar.min_size(x) for x in argts[i + 1 :])
            sub, sub_used = go(a, remaining - reserve)
            args.append(sub)
            remaining -= sub_used
            used += sub_used
        e = App(Prim(prod.prim), tuple(args)) if args else Prim(prod.prim)
        return e, used

    expr, _ = go(ROOT_TYPE, max_size)
    return Program(expr)
