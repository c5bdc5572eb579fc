import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gssnn.dsl import (
    GRAPH,
    INT,
    Library,
    Primitive,
    Program,
    arrow,
    evaluate,
    infer_type,
    initial_library,
)
from gssnn.search import (
    ROOT_TYPE,
    SearchBudget,
    TypedGrammar,
    UnigramModel,
    enumerate_programs,
    heap_search,
    infer_unigrams,
    reweight,
    sample_program,
)

LIB = initial_library()


def toy_library(weights):
    """Library over a subset of builtins with the given probabilities."""
    prims = [Primitive(name, LIB.lookup(name).type) for name in weights]
    return Library(prims, {n: math.log(p) for n, p in weights.items()})


def oracle_programs(grammar, max_size):
    """All complete derivations up to max_size; logp is the fsum-rounded
    total of the production terms, so it is independent of visit order."""
    out = []

    def expand(pending, terms, deriv):
        if not pending:
            out.append((math.fsum(terms), deriv))
            return
        t = pending[-1]
        rest = pending[:-1]
        for prod in grammar.productions[t]:
            new_pending = rest + tuple(reversed(prod.arg_types))
            if len(terms) + 1 + sum(grammar.min_size(a) for a in new_pending) > max_size:
                continue
            expand(new_pending, terms + (prod.logp,), deriv + ((prod.prim, len(prod.arg_types)),))

    expand((ROOT_TYPE,), (), ())
    from gssnn.search import _build_expr

    progs = [(lp, Program(_build_expr(d))) for lp, d in out]
    progs.sort(key=lambda row: (-row[0], row[1].serialize()))
    return progs


class TestTypedGrammar:
    def test_request_types_and_productions(self):
        g = TypedGrammar(LIB)
        assert set(g.productions) == {ROOT_TYPE, INT}
        names = {p.prim for p in g.productions[ROOT_TYPE]}
        assert names == {"identity", "compose", "add_attached_node", "add_edge", "repeat"}
        assert {p.prim for p in g.productions[INT]} == {"1", "2", "3", "succ"}

    def test_uninhabited_requests_dropped(self):
        # node_count would require a bare Graph argument, which nothing produces
        g = TypedGrammar(LIB)
        assert GRAPH not in g.productions
        assert all(p.prim != "node_count" for p in g.productions[ROOT_TYPE])

    def test_normalized_per_request_type(self):
        g = TypedGrammar(LIB)
        for rows in g.productions.values():
            total = sum(math.exp(p.logp) for p in rows)
            assert abs(total - 1.0) < 1e-9

    def test_curried_suffix_argument_types(self):
        g = TypedGrammar(LIB)
        by_name = {p.prim: p for p in g.productions[ROOT_TYPE]}
        assert by_name["add_edge"].arg_types == (INT, INT)
        assert by_name["repeat"].arg_types == (INT, ROOT_TYPE)
        assert by_name["compose"].arg_types == (ROOT_TYPE, ROOT_TYPE)
        assert by_name["identity"].arg_types == ()

    def test_min_size(self):
        g = TypedGrammar(LIB)
        assert g.min_size(ROOT_TYPE) == 1
        assert g.min_size(INT) == 1


class TestEnumerationOrder:
    def test_documented_toy_ordering(self):
        lib = toy_library({"add_attached_node": 0.6, "compose": 0.3, "identity": 0.1})
        stream = enumerate_programs(TypedGrammar(lib))
        first = [(p.serialize(), math.exp(lp)) for p, lp in (next(stream) for _ in range(3))]
        assert first[0][0] == "add_attached_node"
        assert abs(first[0][1] - 0.6) < 1e-9
        assert first[1][0] == "(compose add_attached_node add_attached_node)"
        assert abs(first[1][1] - 0.108) < 1e-9
        assert first[2][0] == "identity"
        assert abs(first[2][1] - 0.1) < 1e-9

    def test_prefix_matches_exhaustive_oracle(self):
        """Sound prefix check: probabilities of the compared prefix exceed the
        best any program beyond the oracle's size bound could reach."""
        lib = toy_library({"add_attached_node": 0.6, "compose": 0.3, "identity": 0.1})
        grammar = TypedGrammar(lib)
        size_bound = 13
        oracle = oracle_programs(grammar, size_bound)
        # Any program larger than the bound has probability below
        # pmax ** (size_bound + 1), so the prefix above that line is exact.
        floor = 0.6 ** (size_bound + 1)
        k = sum(1 for lp, _ in oracle if math.exp(lp) > floor)
        assert k >= 10
        stream = enumerate_programs(grammar)
        got = [next(stream) for _ in range(k)]
        for (glp, gp), (olp, op) in zip([(lp, p) for p, lp in got], oracle[:k]):
            assert gp.serialize() == op.serialize()
            assert glp == olp  # identical preorder summation

    def test_nonincreasing_probabilities(self):
        stream = enumerate_programs(TypedGrammar(LIB))
        logps = [lp for _, lp in (next(stream) for _ in range(200))]
        assert all(a >= b - 1e-15 for a, b in zip(logps, logps[1:]))

    def test_equal_probability_ties_lexicographic(self):
        lib = toy_library({"identity": 0.5, "add_attached_node": 0.5})
        stream = enumerate_programs(TypedGrammar(lib))
        first_two = [p.serialize() for p, _ in (next(stream) for _ in range(2))]
        assert first_two == ["add_attached_node", "identity"]

    def test_max_size_prunes(self):
        lib = toy_library({"add_attached_node": 0.6, "compose": 0.3, "identity": 0.1})
        progs = [p for p, _ in enumerate_programs(TypedGrammar(lib), max_size=3)]
        assert progs  # terminates: the bounded language is finite
        assert all(p.size <= 3 for p in progs)
        assert {p.serialize() for p in progs} == {
            "add_attached_node",
            "identity",
            "(compose add_attached_node add_attached_node)",
            "(compose add_attached_node identity)",
            "(compose identity add_attached_node)",
            "(compose identity identity)",
        }


class TestUnigrams:
    def test_hand_counts(self):
        pop = [Program.parse("add_attached_node"), Program.parse("(compose add_attached_node add_attached_node)")]
        model = infer_unigrams(pop, LIB)
        denom = math.log(4 + len(LIB))
        assert abs(model.logp["add_attached_node"] - (math.log(4) - denom)) < 1e-12
        assert abs(model.logp["compose"] - (math.log(2) - denom)) < 1e-12
        assert abs(model.logp["identity"] - (0.0 - denom)) < 1e-12

    def test_empty_population_uniform(self):
        model = infer_unigrams([], LIB)
        values = set(model.logp.values())
        assert len(values) == 1

    def test_equal_counts_equal_weights(self):
        pop = [Program.parse("(compose identity add_attached_node)")]
        model = infer_unigrams(pop, LIB)
        assert model.logp["identity"] == model.logp["add_attached_node"]

    def test_unknown_primitive_rejected(self):
        with pytest.raises(ValueError, match="unknown primitive"):
            infer_unigrams([Program.parse("mystery")], LIB)


class TestReweight:
    def test_documented_pair(self):
        out = reweight(UnigramModel({"a": -1.0, "b": -2.0})).logp
        assert abs(out["a"] - (-1.25)) < 1e-12
        assert abs(out["b"] - (-1.75)) < 1e-12

    def test_small_spread_untouched(self):
        model = UnigramModel({"a": -1.0, "b": -1.4})
        assert reweight(model).logp == model.logp

    def test_all_equal_untouched(self):
        model = UnigramModel({"a": -2.0, "b": -2.0, "c": -2.0})
        assert reweight(model).logp == model.logp

    @given(
        st.lists(
            st.floats(min_value=-30, max_value=5, allow_nan=False, allow_infinity=False),
            min_size=1,
            max_size=12,
        )
    )
    @settings(max_examples=300, deadline=None)
    def test_contract_on_random_vectors(self, values):
        model = UnigramModel({f"p{i}": v for i, v in enumerate(values)})
        out = reweight(model)
        names = list(model.logp)
        lo = min(out.logp.values())
        hi = max(out.logp.values())
        assert hi - lo <= 0.5 + 1e-12
        mean_in = sum(model.logp.values()) / len(names)
        mean_out = sum(out.logp.values()) / len(names)
        assert abs(mean_in - mean_out) < 1e-9
        for a in names:
            for b in names:
                if model.logp[a] < model.logp[b]:
                    assert out.logp[a] <= out.logp[b]
                elif model.logp[a] == model.logp[b]:
                    assert out.logp[a] == out.logp[b]
        again = reweight(out)
        assert again.logp == out.logp


class TestHeapSearch:
    def test_results_sorted_and_novel(self):
        res = heap_search(LIB, budget=SearchBudget(wall_secs=None, max_programs=300, max_results=10))
        logps = [h.logp for h in res.novel]
        assert logps == sorted(logps, reverse=True)
        from gssnn.graph import isomorphic_structure

        for i in range(len(res.novel)):
            for j in range(i + 1, len(res.novel)):
                assert not isomorphic_structure(res.novel[i].graph, res.novel[j].graph)

    def test_population_graphs_not_rediscovered(self):
        from gssnn.graph import isomorphic_structure

        p = Program.parse("identity")
        pop = [(p, evaluate(p, LIB))]
        res = heap_search(LIB, pop, SearchBudget(wall_secs=None, max_programs=300, max_results=10))
        for h in res.novel:
            assert not isomorphic_structure(h.graph, pop[0][1])

    def test_shortening_reported(self):
        p = Program.parse("(compose identity add_attached_node)")
        pop = [(p, evaluate(p, LIB))]
        res = heap_search(LIB, pop, SearchBudget(wall_secs=None, max_programs=300, max_results=10))
        assert len(res.shortenings) == 1
        s = res.shortenings[0]
        assert s.index == 0
        assert s.program.serialize() == "add_attached_node"
        assert s.program.size < p.size

    def test_max_results_zero(self):
        res = heap_search(LIB, budget=SearchBudget(wall_secs=None, max_programs=50, max_results=0))
        assert res.novel == []

    def test_max_programs_budget(self):
        res = heap_search(LIB, budget=SearchBudget(wall_secs=None, max_programs=25, max_results=50))
        assert res.stats.enumerated <= 25

    def test_deterministic(self):
        budget = SearchBudget(wall_secs=None, max_programs=200, max_results=15)
        a = heap_search(LIB, budget=budget)
        b = heap_search(LIB, budget=budget)
        assert [h.program.serialize() for h in a.novel] == [h.program.serialize() for h in b.novel]
        assert [h.logp for h in a.novel] == [h.logp for h in b.novel]


class TestSampling:
    def test_deterministic_and_typed(self):
        grammar = TypedGrammar(LIB)
        a = [sample_program(grammar, random.Random(7)) for _ in range(20)]
        b = [sample_program(grammar, random.Random(7)) for _ in range(20)]
        assert [p.serialize() for p in a] == [p.serialize() for p in b]
        for p in a:
            assert p.size <= 12
            assert infer_type(p.expr, LIB) == arrow(GRAPH, GRAPH)

    def test_respects_size_budget(self):
        grammar = TypedGrammar(LIB)
        rng = random.Random(3)
        assert all(sample_program(grammar, rng, max_size=4).size <= 4 for _ in range(100))
