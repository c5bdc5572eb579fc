"""Library learning: abstraction discovery over corpus subtree patterns.

A candidate abstraction body is a corpus subtree with up to two parameter
holes.  Holes form an antichain of positions; positions sharing a hole must
cut equal subtrees (so the template itself stays a match), while equal
subtrees may still occupy distinct holes.  For small subtrees the pattern
space is enumerated exhaustively; oversized subtrees fall back to pairwise
anti-unification, which catches large repeated structure.  A candidate's
utility is the corpus size saved by rewriting minus the size of the body
the library must now carry.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dsl import (
    App,
    Library,
    Prim,
    Program,
    Var,
    expr_size,
    expr_to_str,
    make_abstraction,
    subexpressions,
)

MAX_ARITY = 2
MAX_ROUNDS = 3

# subtrees above this size skip exhaustive holing (anti-unification only)
_EXHAUSTIVE_LIMIT = 20
# cap on hole positions considered for two-way class splits
_SPLIT_LIMIT = 8


def anti_unify(t1, t2):
    """Least general generalization of two expressions, holes as Vars.

    The same pair of mismatching subtrees always maps to the same hole, so
    repeated structure stays shared.
    """
    table: dict = {}

    def go(a, b):
        if a == b:
            return a
        if (
            isinstance(a, App)
            and isinstance(b, App)
            and a.head == b.head
            and len(a.args) == len(b.args)
        ):
            return App(a.head, tuple(go(x, y) for x, y in zip(a.args, b.args)))
        key = (a, b)
        if key not in table:
            table[key] = len(table)
        return Var(table[key])

    return go(t1, t2)


def pattern_arity(pattern) -> int:
    seen = set()

    def go(e):
        if isinstance(e, Var):
            seen.add(e.index)
        elif isinstance(e, App):
            for a in e.args:
                go(a)

    go(pattern)
    return len(seen)


def match(pattern, expr):
    """Binding of pattern holes to subtrees of expr, or None.

    Repeated holes must bind equal subtrees.
    """
    binding: dict = {}

    def go(p, e):
        if isinstance(p, Var):
            if p.index in binding:
                return binding[p.index] == e
            binding[p.index] = e
            return True
        if isinstance(p, Prim):
            return p == e
        return (
            isinstance(e, App)
            and p.head == e.head
            and len(p.args) == len(e.args)
            and all(go(x, y) for x, y in zip(p.args, e.args))
        )

    return binding if go(pattern, expr) else None


def rewrite(expr, pattern, name: str):
    """Replace leftmost-outermost matches of pattern with calls to name.

    Captured hole arguments are rewritten too; the matched spine itself is
    consumed, so matches never overlap.
    """
    arity = pattern_arity(pattern)

    def go(e):
        b = match(pattern, e)
        if b is not None:
            args = tuple(go(b[i]) for i in range(arity))
            return App(Prim(name), args) if args else Prim(name)
        if isinstance(e, App):
            return App(e.head, tuple(go(a) for a in e.args))
        return e

    return go(expr)


@dataclass(frozen=True)
class Abstraction:
    name: str
    body: object
    arity: int
    utility: int

    def serialize(self) -> str:
        return expr_to_str(self.body)


# name used while scoring candidates, before any is adopted
_PLACEHOLDER = "__candidate__"

# marker for a hole position before class assignment
_MARK = Var(-1)


def _hole_variants(t):
    """(template, holed subterms in preorder) for every antichain of hole
    positions in t; the root always stays literal."""

    def go(e, is_root):
        out = []
        if not is_root:
            out.append((_MARK, (e,)))
        if isinstance(e, App):
            acc = [((), ())]
            for a in e.args:
                acc = [
                    (args + (va,), holes + ha)
                    for args, holes in acc
                    for va, ha in go(a, False)
                ]
            out.extend((App(e.head, args), holes) for args, holes in acc)
        else:
            out.append((e, ()))
        return out

    return go(t, True)


def _assign_classes(template, classes):
    """Replace hole markers, in preorder, by Vars numbered per classes."""
    renumber: dict = {}
    it = iter(classes)

    def go(e):
        if e is _MARK:
            c = next(it)
            return Var(renumber.setdefault(c, len(renumber)))
        if isinstance(e, App):
            return App(e.head, tuple(go(a) for a in e.args))
        return e

    return go(template)


def _class_assignments(holes, max_arity):
    """Ways to group hole positions into classes: same class, equal subtree."""
    distinct = []
    for h in holes:
        if h not in distinct:
            distinct.append(h)
    if len(distinct) > max_arity:
        return
    by_value = tuple(distinct.index(h) for h in holes)
    yield by_value
    # equal subtrees may still be split across two holes
    if len(distinct) == 1 and max_arity >= 2 and 2 <= len(holes) <= _SPLIT_LIMIT:
        n = len(holes)
        for bits in range(1, 1 << (n - 1)):
            yield tuple(0 if i == 0 else (bits >> (i - 1)) & 1 for i in range(n))


def _site_saving(template, holes, classes) -> int:
    """Exact corpus-size saving from rewriting one site of this pattern."""
    literal = expr_size(template)
    per_class: dict = {}
    for h, c in zip(holes, classes):
        per_class.setdefault(c, []).append(h)
    shared = sum((len(hs) - 1) * expr_size(hs[0]) for hs in per_class.values())
    return literal - 1 + shared


def _collect_candidates(corpus, max_arity):
    """All candidate patterns with an upper bound on their utility.

    Enumerating holings at every subtree occurrence means each generation
    event is a genuine match site, so summed per-site savings bound the true
    (non-overlapping) utility from above.
    """
    bounds: dict = {}
    big: list = []
    for p in corpus:
        for site in subexpressions(p.expr):
            if not isinstance(site, App):
                continue
            if expr_size(site) > _EXHAUSTIVE_LIMIT:
                big.append(site)
                continue
            for template, holes in _hole_variants(site):
                if expr_size(template) < 2:
                    continue
                for classes in _class_assignments(holes, max_arity):
                    pattern = _assign_classes(template, classes)
                    saving = _site_saving(template, holes, classes)
                    bounds[pattern] = bounds.get(pattern, 0) + saving
    ranked = [
        (total - expr_size(pat), pat) for pat, total in bounds.items()
    ]
    ranked.sort(key=lambda row: (-row[0], expr_size(row[1]), expr_to_str(row[1])))

    extras = []
    if big:
        distinct = sorted(set(big), key=expr_to_str)
        known = set(bounds)
        for i in range(len(distinct)):
            for j in range(i, len(distinct)):
                pat = anti_unify(distinct[i], distinct[j])
                if (
                    pat not in known
                    and expr_size(pat) >= 2
                    and pattern_arity(pat) <= max_arity
                ):
                    known.add(pat)
                    extras.append(pat)
    return ranked, extras


def _utility(pattern, corpus) -> int:
    before = sum(p.size for p in corpus)
    after = sum(expr_size(rewrite(p.expr, pattern, _PLACEHOLDER)) for p in corpus)
    return before - after - expr_size(pattern)


def best_abstraction(corpus, lib: Library, max_arity: int = MAX_ARITY):
    """Highest-utility candidate, or None when nothing saves anything.

    Ties go to the smaller body, then the lexicographically smaller
    serialization.  Candidates are scored in order of their utility upper
    bound so most never need an exact rewrite pass.
    """
    ranked, extras = _collect_candidates(corpus, max_arity)
    best = None
    best_key = None
    for pat in extras:
        u = _utility(pat, corpus)
        key = (-u, expr_size(pat), expr_to_str(pat))
        if u > 0 and (best_key is None or key < best_key):
            best, best_key = (pat, u), key
    for bound, pat in ranked:
        if bound <= 0 or (best is not None and bound < best[1]):
            break
        u = _utility(pat, corpus)
        key = (-u, expr_size(pat), expr_to_str(pat))
        if u > 0 and (best_key is None or key < best_key):
            best, best_key = (pat, u), key
    if best is None:
        return None
    pat, u = best
    return Abstraction(lib.fresh_name(), pat, pattern_arity(pat), u)


@dataclass
class CompressionResult:
    library: Library
    corpus: list
    abstractions: list


def compress(
    corpus,
    lib: Library,
    max_rounds: int = MAX_ROUNDS,
    max_arity: int = MAX_ARITY,
) -> CompressionResult:
    """Iteratively adopt the best abstraction and rewrite the corpus.

    Stops early when no candidate has positive utility.  Rewriting replaces
    a matched region with a call whose inlining reproduces the original
    expression exactly, so semantics are preserved by construction.
    """
    corpus = list(corpus)
    adopted = []
    for _ in range(max_rounds):
        abs_ = best_abstraction(corpus, lib, max_arity)
        if abs_ is None:
            break
        prim = make_abstraction(abs_.name, abs_.body, lib)
        lib = lib.extended(prim)
        corpus = [Program(rewrite(p.expr, abs_.body, abs_.name)) for p in corpus]
        adopted.append(abs_)
    return CompressionResult(lib, corpus, adopted)
