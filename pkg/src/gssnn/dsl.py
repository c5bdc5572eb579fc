"""Typed point-free DSL whose programs build feature graphs.

Programs are expression trees over a library of primitives.  The builtin
primitives construct graphs imperatively through a ``GraphBuilder`` that is
threaded linearly through evaluation; no primitive duplicates its graph
argument, which is what makes in-place mutation safe here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import sexpr
from .graph import FeatureGraph, GraphBuilder

GRAPH = "Graph"
INT = "Int"

# Evaluation budget: every builder-step attempt (node/edge creation, repeat
# iteration) decrements this before running.
STEP_BUDGET = 10_000
REPEAT_CAP = 20
PARALLEL_EDGE_CAP = 20
SIZE_LIMIT = 150


def arrow(*types):
    """Right-nested curried function type, e.g. arrow(INT, GRAPH, GRAPH)."""
    if len(types) < 2:
        raise ValueError("arrow needs at least two types")
    t = types[-1]
    for a in reversed(types[:-1]):
        t = (a, t)
    return t


def curry_args(t):
    """Split a type into (argument types, base return type)."""
    args = []
    while isinstance(t, tuple):
        args.append(t[0])
        t = t[1]
    return tuple(args), t


def type_str(t) -> str:
    if isinstance(t, tuple):
        a, b = t
        left = type_str(a)
        if isinstance(a, tuple):
            left = f"({left})"
        return f"{left} -> {type_str(b)}"
    return t


class DslError(ValueError):
    pass


class DslTypeError(DslError):
    pass


class DivergenceError(DslError):
    """Raised when evaluation exceeds its builder-step budget."""

    def __init__(self):
        super().__init__("diverged")


@dataclass(frozen=True)
class Prim:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Var:
    """De Bruijn parameter reference, only valid inside abstraction bodies."""

    index: int

    def __str__(self):
        return f"${self.index}"


@dataclass(frozen=True)
class App:
    head: Prim
    args: tuple

    def __str__(self):
        return expr_to_str(self)


Expr = object  # Prim | Var | App; kept loose on purpose


def expr_to_str(e) -> str:
    if isinstance(e, App):
        parts = [expr_to_str(e.head)] + [expr_to_str(a) for a in e.args]
        return "(" + " ".join(parts) + ")"
    return str(e)


def _expr_from_tree(tree):
    if isinstance(tree, str):
        if tree.startswith("$"):
            try:
                return Var(int(tree[1:]))
            except ValueError:
                raise DslError(f"bad parameter token {tree!r}")
        return Prim(tree)
    head = _expr_from_tree(tree[0])
    if not isinstance(head, Prim):
        raise DslError("application head must be a primitive")
    if len(tree) == 1:
        return head
    return App(head, tuple(_expr_from_tree(t) for t in tree[1:]))


def parse_expr(text: str):
    return _expr_from_tree(sexpr.parse(text))


def expr_size(e) -> int:
    """Primitive occurrences; an abstraction reference counts as one."""
    if isinstance(e, Prim):
        return 1
    if isinstance(e, Var):
        return 0
    return expr_size(e.head) + sum(expr_size(a) for a in e.args)


def subexpressions(e):
    """All subtrees of e in preorder (parameter leaves excluded)."""
    if isinstance(e, Var):
        return
    yield e
    if isinstance(e, App):
        for a in e.args:
            yield from subexpressions(a)


@dataclass(frozen=True)
class Program:
    expr: object

    @classmethod
    def parse(cls, text: str) -> "Program":
        return cls(parse_expr(text))

    def serialize(self) -> str:
        return expr_to_str(self.expr)

    def __str__(self):
        return self.serialize()

    @property
    def size(self) -> int:
        return expr_size(self.expr)


@dataclass(frozen=True)
class Primitive:
    """Library entry: a builtin (body None) or a learned abstraction."""

    name: str
    type: object
    body: object = None
    param_types: tuple = ()

    @property
    def is_builtin(self) -> bool:
        return self.body is None

    @property
    def arity(self) -> int:
        if self.is_builtin:
            return len(curry_args(self.type)[0])
        return len(self.param_types)


BUILTIN_TYPES = {
    "identity": arrow(GRAPH, GRAPH),
    "compose": arrow(arrow(GRAPH, GRAPH), arrow(GRAPH, GRAPH), GRAPH, GRAPH),
    "add_attached_node": arrow(GRAPH, GRAPH),
    "add_edge": arrow(INT, INT, GRAPH, GRAPH),
    "repeat": arrow(INT, arrow(GRAPH, GRAPH), GRAPH, GRAPH),
    "node_count": arrow(GRAPH, INT),
    "1": INT,
    "2": INT,
    "3": INT,
    "succ": arrow(INT, INT),
}


class Library:
    """Primitive inventory plus per-primitive log-likelihood weights."""

    def __init__(self, primitives, logp=None):
        self.primitives = list(primitives)
        names = [p.name for p in self.primitives]
        if len(set(names)) != len(names):
            raise DslError("duplicate primitive names")
        if logp is None:
            uniform = -math.log(len(self.primitives))
            logp = {n: uniform for n in names}
        missing = set(names) - set(logp)
        if missing:
            raise DslError(f"weights missing for {sorted(missing)}")
        for n in names:
            if not math.isfinite(logp[n]):
                raise DslError(f"non-finite weight for {n}")
        self.logp = {n: float(logp[n]) for n in names}
        self._by_name = {p.name: p for p in self.primitives}

    def __len__(self):
        return len(self.primitives)

    def __contains__(self, name):
        return name in self._by_name

    def names(self):
        return [p.name for p in self.primitives]

    def lookup(self, name: str) -> Primitive:
        try:
            return self._by_name[name]
        except KeyError:
            raise DslError(f"unknown primitive {name!r}")

    def with_weights(self, logp) -> "Library":
        return Library(self.primitives, logp)

    def extended(self, prim: Primitive, logp: float | None = None) -> "Library":
        if prim.name in self._by_name:
            raise DslError(f"primitive {prim.name!r} already defined")
        weights = dict(self.logp)
        # Placeholder until the next unigram fit assigns a smoothed weight.
        weights[prim.name] = logp if logp is not None else -math.log(len(self) + 1)
        return Library(self.primitives + [prim], weights)

    def fresh_name(self) -> str:
        k = 0
        while f"f{k}" in self._by_name:
            k += 1
        return f"f{k}"


def initial_library() -> Library:
    prims = [Primitive(name, t) for name, t in BUILTIN_TYPES.items()]
    return Library(prims)


def infer_type(e, lib: Library, param_types: tuple = ()):
    """Type of an expression, raising DslTypeError on any mismatch."""
    if isinstance(e, Prim):
        return lib.lookup(e.name).type
    if isinstance(e, Var):
        if e.index >= len(param_types):
            raise DslTypeError(f"unbound parameter ${e.index}")
        return param_types[e.index]
    head_t = infer_type(e.head, lib, param_types)
    for a in e.args:
        if not isinstance(head_t, tuple):
            raise DslTypeError(f"over-applied {e.head.name}")
        want, head_t = head_t
        got = infer_type(a, lib, param_types)
        if got != want:
            raise DslTypeError(
                f"argument of {e.head.name}: expected {type_str(want)}, got {type_str(got)}"
            )
    return head_t


def infer_abstraction_signature(body, lib: Library):
    """Parameter types and result type of an abstraction body.

    Parameter types are read off the argument positions the parameters occupy;
    every parameter must occur in the body.
    """
    seen: dict[int, object] = {}

    def walk(e, expected):
        if isinstance(e, Var):
            if expected is None:
                raise DslTypeError("bare parameter body")
            prev = seen.setdefault(e.index, expected)
            if prev != expected:
                raise DslTypeError(f"parameter ${e.index} used at conflicting types")
            return
        if isinstance(e, Prim):
            return
        head_t = lib.lookup(e.head.name).type
        for a in e.args:
            if not isinstance(head_t, tuple):
                raise DslTypeError(f"over-applied {e.head.name}")
            want, head_t = head_t
            walk(a, want)

    walk(body, None)
    if not seen:
        param_types = ()
    else:
        n = max(seen) + 1
        if set(seen) != set(range(n)):
            raise DslTypeError("parameter indices must be contiguous from $0")
        param_types = tuple(seen[i] for i in range(n))
    result = infer_type(body, lib, param_types)
    return param_types, result


def abstraction_type(param_types, result):
    t = result
    for p in reversed(param_types):
        t = (p, t)
    return t


def make_abstraction(name: str, body, lib: Library) -> Primitive:
    param_types, result = infer_abstraction_signature(body, lib)
    return Primitive(name, abstraction_type(param_types, result), body, param_types)


def initial_graph() -> FeatureGraph:
    b = GraphBuilder()
    b.add_node()
    return b.build()


class _EvalContext:
    __slots__ = ("remaining",)

    def __init__(self, budget: int):
        self.remaining = budget

    def spend(self, k: int = 1):
        self.remaining -= k
        if self.remaining < 0:
            raise DivergenceError()


def _clamp_repeat(n: int) -> int:
    return max(0, min(REPEAT_CAP, n))


def _builtin_value(name: str, ctx: _EvalContext):
    if name == "identity":
        return lambda g: g
    if name == "compose":
        return lambda f: lambda g: lambda x: f(g(x))
    if name == "add_attached_node":

        def attach(g: GraphBuilder):
            ctx.spend(2)
            prev = g.last_node_id()
            nid = g.add_node()
            g.add_edge(nid, prev)
            return g

        return attach
    if name == "add_edge":

        def edge(a):
            def edge2(b):
                def run(g: GraphBuilder):
                    ctx.spend(1)
                    n = g.node_count
                    i, j = a % n, b % n
                    if i == j:
                        return g
                    u, v = g.node_id_at(i), g.node_id_at(j)
                    if g.multiplicity(u, v) >= PARALLEL_EDGE_CAP:
                        return g
                    g.add_edge(u, v)
                    return g

                return run

            return edge2

        return edge
    if name == "repeat":

        def rep(n):
            def rep2(f):
                def run(g):
                    for _ in range(_clamp_repeat(n)):
                        ctx.spend(1)
                        g = f(g)
                    return g

                return run

            return rep2

        return rep
    if name == "node_count":
        return lambda g: g.node_count
    if name == "succ":
        return lambda n: n + 1
    if name in ("1", "2", "3"):
        return int(name)
    raise DslError(f"no builtin semantics for {name!r}")


def _eval(e, lib: Library, env: tuple, ctx: _EvalContext):
    if isinstance(e, Var):
        return env[e.index]
    if isinstance(e, Prim):
        prim = lib.lookup(e.name)
        if prim.is_builtin:
            return _builtin_value(prim.name, ctx)
        return _abstraction_value(prim, lib, ctx)
    v = _eval(e.head, lib, env, ctx)
    for a in e.args:
        v = v(_eval(a, lib, env, ctx))
    return v


def _abstraction_value(prim: Primitive, lib: Library, ctx: _EvalContext):
    k = len(prim.param_types)
    if k == 0:
        return _eval(prim.body, lib, (), ctx)

    def collect(acc):
        if len(acc) == k:
            return _eval(prim.body, lib, tuple(acc), ctx)
        return lambda v: collect(acc + [v])

    return collect([])


def evaluate(program: Program, lib: Library, step_budget: int = STEP_BUDGET) -> FeatureGraph:
    """Run a Graph -> Graph program against the single-node initial graph."""
    t = infer_type(program.expr, lib)
    if t != arrow(GRAPH, GRAPH):
        raise DslTypeError(f"program has type {type_str(t)}, expected Graph -> Graph")
    ctx = _EvalContext(step_budget)
    fn = _eval(program.expr, lib, (), ctx)
    builder = GraphBuilder(initial_graph())
    out = fn(builder)
    if not isinstance(out, GraphBuilder):
        raise DslError("program did not return a graph")
    return out.build()


def semantically_equal(p1: Program, p2: Program, lib: Library) -> bool:
    """Whether the two programs build featured-isomorphic graphs.

    Divergence of either side propagates; callers decide how to treat it.
    """
    from .graph import isomorphic_featured

    return isomorphic_featured(evaluate(p1, lib), evaluate(p2, lib))
