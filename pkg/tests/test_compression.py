import random

import pytest

from gssnn.compression import (
    MAX_ARITY,
    MAX_ROUNDS,
    anti_unify,
    best_abstraction,
    compress,
    match,
    pattern_arity,
    rewrite,
)
from gssnn.dsl import (
    App,
    DivergenceError,
    Prim,
    Program,
    Var,
    evaluate,
    expr_to_str,
    initial_library,
)
from gssnn.graph import isomorphic_featured
from gssnn.search import TypedGrammar, sample_program

LIB = initial_library()


def expr(text):
    return Program.parse(text).expr


def progs(*texts):
    return [Program.parse(t) for t in texts]


# Independent scorer: enumerate every hole antichain over every subtree,
# every equality-respecting class assignment, and rescore by a direct
# size-after computation.  Shares nothing with the module under test.


def _oracle_size(e):
    if isinstance(e, App):
        return 1 + sum(_oracle_size(a) for a in e.args)
    return 0 if isinstance(e, Var) else 1


def _oracle_holings(root):
    def go(e, at_root):
        outs = []
        if not at_root:
            outs.append((None, [e]))
        if isinstance(e, App):
            combos = [([], [])]
            for a in e.args:
                combos = [
                    (ts + [ta], cuts + ca)
                    for ts, cuts in combos
                    for ta, ca in go(a, False)
                ]
            outs.extend((("app", e.head, tuple(ts)), cuts) for ts, cuts in combos)
        else:
            outs.append((e, []))
        return outs

    return go(root, True)


def _oracle_partitions(values, max_classes):
    def go(i, classes):
        if i == len(values):
            yield tuple(classes)
            return
        for c in range(len(set(classes)) if classes else 0):
            if values[classes.index(c)] == values[i]:
                yield from go(i + 1, classes + [c])
        if len(set(classes)) < max_classes:
            yield from go(i + 1, classes + [len(set(classes))])

    yield from go(0, [])


def _oracle_build(template, classes):
    it = iter(classes)

    def go(t):
        if t is None:
            return Var(next(it))
        if isinstance(t, tuple) and t and t[0] == "app":
            return App(t[1], tuple(go(x) for x in t[2]))
        return t

    return go(template)


def _oracle_match(pat, e, env):
    if isinstance(pat, Var):
        if pat.index in env:
            return env[pat.index] == e
        env[pat.index] = e
        return True
    if isinstance(pat, Prim):
        return pat == e
    return (
        isinstance(e, App)
        and isinstance(pat, App)
        and e.head == pat.head
        and len(e.args) == len(pat.args)
        and all(_oracle_match(pa, ea, env) for pa, ea in zip(pat.args, e.args))
    )


def _oracle_size_after(e, pat, arity):
    env = {}
    if _oracle_match(pat, e, env):
        return 1 + sum(_oracle_size_after(env[i], pat, arity) for i in range(arity))
    if isinstance(e, App):
        return 1 + sum(_oracle_size_after(a, pat, arity) for a in e.args)
    return _oracle_size(e)


def oracle_best_utility(corpus, max_arity=2):
    exprs = [p.expr for p in corpus]
    before = sum(_oracle_size(e) for e in exprs)
    patterns = set()
    subtrees = []
    for e in exprs:
        stack = [e]
        while stack:
            s = stack.pop()
            if isinstance(s, App):
                subtrees.append(s)
                stack.extend(s.args)
    for s in subtrees:
        for template, cuts in _oracle_holings(s):
            for classes in _oracle_partitions(cuts, max_arity):
                pat = _oracle_build(template, list(classes))
                if _oracle_size(pat) >= 2:
                    patterns.add(pat)
    best = 0
    for pat in patterns:
        arity = len({v.index for v in _collect_vars(pat)})
        after = sum(_oracle_size_after(e, pat, arity) for e in exprs)
        best = max(best, before - after - _oracle_size(pat))
    return best


def _collect_vars(e):
    if isinstance(e, Var):
        yield e
    elif isinstance(e, App):
        for a in e.args:
            yield from _collect_vars(a)


class TestAntiUnify:
    def test_equal_terms(self):
        e = expr("(compose identity add_attached_node)")
        assert anti_unify(e, e) == e

    def test_mismatch_becomes_hole(self):
        out = anti_unify(expr("(repeat 1 identity)"), expr("(repeat 2 identity)"))
        assert expr_to_str(out) == "(repeat $0 identity)"

    def test_repeated_pair_shares_hole(self):
        out = anti_unify(expr("(add_edge 1 1)"), expr("(add_edge 2 2)"))
        assert expr_to_str(out) == "(add_edge $0 $0)"

    def test_distinct_pairs_get_distinct_holes(self):
        out = anti_unify(expr("(add_edge 1 2)"), expr("(add_edge 2 1)"))
        assert expr_to_str(out) == "(add_edge $0 $1)"
        assert pattern_arity(out) == 2

    def test_head_mismatch(self):
        out = anti_unify(expr("(repeat 1 identity)"), expr("identity"))
        assert out == Var(0)


class TestMatch:
    def test_literal_and_binding(self):
        b = match(expr("(repeat $0 identity)"), expr("(repeat 3 identity)"))
        assert b == {0: expr("3")}

    def test_repeated_hole_requires_equality(self):
        pat = expr("(add_edge $0 $0)")
        assert match(pat, expr("(add_edge 2 2)")) == {0: expr("2")}
        assert match(pat, expr("(add_edge 2 3)")) is None

    def test_structure_mismatch(self):
        assert match(expr("(repeat $0 identity)"), expr("(repeat 1 add_attached_node)")) is None
        assert match(expr("(repeat $0 identity)"), expr("identity")) is None


class TestRewrite:
    def test_leftmost_outermost(self):
        pat = expr("(repeat 2 $0)")
        out = rewrite(expr("(repeat 2 (repeat 2 add_attached_node))"), pat, "f0")
        assert expr_to_str(out) == "(f0 (f0 add_attached_node))"

    def test_captured_arguments_rewritten(self):
        pat = expr("(repeat 2 $0)")
        out = rewrite(expr("(compose (repeat 2 identity) (repeat 2 add_attached_node))"), pat, "f0")
        assert expr_to_str(out) == "(compose (f0 identity) (f0 add_attached_node))"

    def test_zero_arity_becomes_name(self):
        out = rewrite(expr("(compose (repeat 2 add_attached_node) identity)"), expr("(repeat 2 add_attached_node)"), "f0")
        assert expr_to_str(out) == "(compose f0 identity)"

    def test_no_occurrence_is_identity(self):
        e = expr("(compose identity identity)")
        assert rewrite(e, expr("(repeat 2 $0)"), "f0") == e


class TestBestAbstraction:
    def test_shared_constant_subterm(self):
        corpus = progs(
            "(compose (repeat 2 add_attached_node) identity)",
            "(compose identity (repeat 2 add_attached_node))",
            "(repeat 2 (repeat 2 add_attached_node))",
        )
        out = best_abstraction(corpus, LIB)
        assert expr_to_str(out.body) == "(repeat 2 add_attached_node)"
        assert out.arity == 0
        assert out.utility == 3
        assert out.name == "f0"

    def test_single_site_repeated_hole(self):
        corpus = progs("(compose (compose add_attached_node add_attached_node) (compose add_attached_node add_attached_node))")
        out = best_abstraction(corpus, LIB)
        assert expr_to_str(out.body) == "(compose (compose $0 $0) (compose $0 $0))"
        assert out.arity == 1
        assert out.utility == 2

    def test_smaller_body_wins_utility_tie(self):
        corpus = progs("(add_edge 1 2)", "(add_edge 1 3)", "(compose (add_edge 1 2) identity)")
        out = best_abstraction(corpus, LIB)
        assert expr_to_str(out.body) == "(add_edge 1 $0)"
        assert out.arity == 1
        assert out.utility == 1

    def test_two_holes_beat_merged_hole(self):
        corpus = progs(
            "(compose (repeat 1 add_attached_node) (repeat 1 add_attached_node))",
            "(compose (repeat (succ 1) add_attached_node) (repeat (succ 1) add_attached_node))",
            "(compose (repeat 1 add_attached_node) (repeat (succ 1) add_attached_node))",
        )
        out = best_abstraction(corpus, LIB)
        assert expr_to_str(out.body) == "(compose (repeat $0 add_attached_node) (repeat $1 add_attached_node))"
        assert out.arity == 2
        assert out.utility == 7

    def test_arity_cap_falls_back_to_merged(self):
        corpus = progs(
            "(compose (repeat 1 add_attached_node) (repeat 1 add_attached_node))",
            "(compose (repeat (succ 1) add_attached_node) (repeat (succ 1) add_attached_node))",
            "(compose (repeat 1 add_attached_node) (repeat (succ 1) add_attached_node))",
        )
        out = best_abstraction(corpus, LIB, max_arity=1)
        assert expr_to_str(out.body) == "(compose (repeat $0 add_attached_node) (repeat $0 add_attached_node))"
        assert out.arity == 1
        assert out.utility == 6

    def test_no_positive_candidate(self):
        assert best_abstraction(progs("identity", "add_attached_node"), LIB) is None
        assert best_abstraction(progs("(compose identity add_attached_node)"), LIB) is None

    def test_empty_corpus(self):
        assert best_abstraction([], LIB) is None


class TestCompress:
    def test_round_trip_example(self):
        corpus = progs(
            "(compose (repeat 2 add_attached_node) identity)",
            "(compose identity (repeat 2 add_attached_node))",
            "(repeat 2 (repeat 2 add_attached_node))",
        )
        out = compress(corpus, LIB)
        assert [a.name for a in out.abstractions] == ["f0"]
        assert out.abstractions[0].utility == 3
        assert [p.serialize() for p in out.corpus] == [
            "(compose f0 identity)",
            "(compose identity f0)",
            "(repeat 2 f0)",
        ]
        assert "f0" in out.library.names()
        assert out.library.lookup("f0").body is not None

    def test_zero_rounds_is_noop(self):
        corpus = progs("(repeat 2 (repeat 2 add_attached_node))", "(repeat 2 (repeat 2 add_attached_node))")
        out = compress(corpus, LIB, max_rounds=0)
        assert out.abstractions == []
        assert out.corpus == corpus
        assert out.library is LIB

    def test_round_cap(self):
        rng = random.Random(11)
        grammar = TypedGrammar(LIB)
        corpus = [sample_program(grammar, rng, max_size=12) for _ in range(6)]
        out = compress(corpus, LIB, max_rounds=2)
        assert len(out.abstractions) <= 2

    def test_rewritten_programs_evaluate_identically(self):
        rng = random.Random(5)
        grammar = TypedGrammar(LIB)
        checked = 0
        for _ in range(12):
            corpus = []
            while len(corpus) < 5:
                p = sample_program(grammar, rng, max_size=12)
                try:
                    evaluate(p, LIB)
                except DivergenceError:
                    continue
                corpus.append(p)
            out = compress(corpus, LIB)
            assert len(out.abstractions) <= MAX_ROUNDS
            for a in out.abstractions:
                assert 0 <= a.arity <= MAX_ARITY
                assert a.utility > 0
            total_before = sum(p.size for p in corpus)
            total_after = sum(p.size for p in out.corpus)
            assert total_after <= total_before
            for before, after in zip(corpus, out.corpus):
                assert isomorphic_featured(evaluate(before, LIB), evaluate(after, out.library))
            checked += len(out.abstractions)
        assert checked > 0

    def test_fresh_names_progress(self):
        corpus = progs(
            "(compose (repeat 2 add_attached_node) identity)",
            "(compose identity (repeat 2 add_attached_node))",
            "(repeat 2 (repeat 2 add_attached_node))",
            "(compose (add_edge 1 2) (add_edge 1 2))",
            "(repeat 3 (add_edge 1 2))",
        )
        out = compress(corpus, LIB)
        names = [a.name for a in out.abstractions]
        assert names == [f"f{i}" for i in range(len(names))]
        assert len(names) >= 2


class TestOracleAgreement:
    def test_first_round_utility_matches_exhaustive_scan(self):
        rng = random.Random(23)
        grammar = TypedGrammar(LIB)
        positives = 0
        for _ in range(20):
            corpus = [sample_program(grammar, rng, max_size=10) for _ in range(4)]
            want = oracle_best_utility(corpus)
            got = best_abstraction(corpus, LIB)
            if got is None:
                assert want <= 0
            else:
                assert got.utility == want
                positives += 1
        assert positives >= 5

    def test_pinned_cases_against_oracle(self):
        cases = [
            progs(
                "(compose (repeat 2 add_attached_node) identity)",
                "(compose identity (repeat 2 add_attached_node))",
                "(repeat 2 (repeat 2 add_attached_node))",
            ),
            progs("(compose (compose add_attached_node add_attached_node) (compose add_attached_node add_attached_node))"),
            progs(
                "(compose (repeat 1 add_attached_node) (repeat 1 add_attached_node))",
                "(compose (repeat (succ 1) add_attached_node) (repeat (succ 1) add_attached_node))",
                "(compose (repeat 1 add_attached_node) (repeat (succ 1) add_attached_node))",
            ),
        ]
        for corpus in cases:
            assert best_abstraction(corpus, LIB).utility == oracle_best_utility(corpus)
