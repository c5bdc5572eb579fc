"""Embedding parity against the engine's emit-embedding command.

Graphs are built here from scratch with the creation-order rules (ids
count every element, nodes take rank 0, a new edge takes 1 + the larger
max incident edge rank of its endpoints), so agreement with the engine
is a genuine cross-implementation check.
"""

import json
import math
import random
import shutil
import subprocess

import numpy as np
import pytest
import torch

from graphgen import build_random_graph

from gssnn_trainer.embedding import (
    EmbedSpec,
    element_bias,
    embed_elements,
    parse_graph,
    parse_spec,
    slice_bounds,
)


def emit_embedding(tmp_path, graph, x, m, q):
    gssnn = shutil.which("gssnn")
    assert gssnn, "engine CLI not on PATH"
    tmp_path.mkdir(parents=True, exist_ok=True)
    gpath = tmp_path / "g.json"
    opath = tmp_path / "out.json"
    gpath.write_text(json.dumps(graph))
    cmd = [gssnn, "emit-embedding", "--graph", str(gpath), "--m", str(m), "--q", str(q), "--out", str(opath)]
    if x is not None:
        xpath = tmp_path / "x.json"
        xpath.write_text(json.dumps([float(v) for v in x]))
        cmd += ["--x", str(xpath)]
    subprocess.run(cmd, check=True, capture_output=True)
    return json.loads(opath.read_text())


class TestParse:
    def test_round_trip(self):
        g = parse_graph({"nodes": [{"id": 0, "rank": 0}, {"id": 2, "rank": 0}],
                         "edges": [{"id": 1, "rank": 1, "u": 0, "v": 2}]})
        assert g.node_ids == (0, 2)
        assert g.edge_ids == (1,)
        assert g.edge_endpoints == ((0, 2),)
        assert g.element_count == 3

    def test_rejects_gap_in_ids(self):
        with pytest.raises(ValueError):
            parse_graph({"nodes": [{"id": 0, "rank": 0}, {"id": 3, "rank": 0}],
                         "edges": [{"id": 1, "rank": 1, "u": 0, "v": 3}]})

    def test_rejects_self_edge(self):
        with pytest.raises(ValueError):
            parse_graph({"nodes": [{"id": 0, "rank": 0}],
                         "edges": [{"id": 1, "rank": 1, "u": 0, "v": 0}]})

    def test_rejects_unknown_endpoint(self):
        with pytest.raises(ValueError):
            parse_graph({"nodes": [{"id": 0, "rank": 0}, {"id": 1, "rank": 0}],
                         "edges": [{"id": 2, "rank": 1, "u": 0, "v": 9}]})

    def test_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            parse_spec({"m": 4, "q": 6, "d_star": 2, "r_star": 1})
        with pytest.raises(ValueError):
            parse_spec({"m": 2, "q": 8, "d_star": 4, "r_star": 1})


class TestFormulas:
    def test_slice_bounds_partition(self):
        assert slice_bounds(10, 3) == [0, 4, 7, 10]
        assert slice_bounds(8, 4) == [0, 2, 4, 6, 8]
        for m in range(1, 40):
            for d_star in range(1, m + 1):
                b = slice_bounds(m, d_star)
                assert b[0] == 0 and b[-1] == m
                assert all(hi > lo for lo, hi in zip(b, b[1:]))

    def test_bias_origin(self):
        spec = EmbedSpec(m=4, q=8, d_star=2, r_star=2)
        assert element_bias(0, 0, spec).tolist() == [0, 0, 1, 1, 0, 0, 1, 1]

    def test_bias_pinned(self):
        # k = id * r_star + rank = 1; quarters are sin/cos of k % d_star then k // d_star
        spec = EmbedSpec(m=4, q=8, d_star=2, r_star=1)
        got = element_bias(1, 0, spec, torch.float64)
        want = [math.sin(1.0), math.sin(1e-4), math.cos(1.0), math.cos(1e-4), 0.0, 0.0, 1.0, 1.0]
        assert got.tolist() == pytest.approx(want, abs=1e-15)


class TestParity:
    def test_twenty_random_pairs(self, tmp_path):
        rng = random.Random(2024)
        nprng = np.random.default_rng(2024)
        for i in range(20):
            graph = build_random_graph(rng)
            d_star = max(e["id"] for e in graph["nodes"] + graph["edges"]) + 1
            m = d_star + rng.randrange(48)
            q = 4 * rng.randrange(1, 9)
            x = nprng.standard_normal(m)
            out = emit_embedding(tmp_path / str(i), graph, x, m, q)
            ref = np.asarray(out["features"], dtype=np.float64)
            mine = embed_elements(parse_graph(graph), torch.tensor(x), parse_spec(out["spec"]))
            assert mine.shape == ref.shape
            assert np.abs(mine.numpy() - ref).max() <= 1e-6

    def test_zero_input_matches(self, tmp_path):
        rng = random.Random(7)
        graph = build_random_graph(rng)
        m, q = 24, 12
        out = emit_embedding(tmp_path, graph, None, m, q)
        ref = np.asarray(out["features"], dtype=np.float64)
        spec = parse_spec(out["spec"])
        mine = embed_elements(parse_graph(graph), torch.zeros(m, dtype=torch.float64), spec)
        assert np.abs(mine.numpy() - ref).max() <= 1e-6

    def test_spec_coverage_enforced(self):
        graph = parse_graph({"nodes": [{"id": 0, "rank": 0}, {"id": 2, "rank": 0}],
                             "edges": [{"id": 1, "rank": 1, "u": 0, "v": 2}]})
        with pytest.raises(ValueError):
            embed_elements(graph, torch.zeros(8), EmbedSpec(m=8, q=8, d_star=2, r_star=2))
        with pytest.raises(ValueError):
            embed_elements(graph, torch.zeros(8), EmbedSpec(m=8, q=8, d_star=3, r_star=1))

    def test_batched_matches_single(self):
        rng = random.Random(3)
        graph = parse_graph(build_random_graph(rng))
        r_star = 1 + max(graph.node_ranks + graph.edge_ranks)
        spec = EmbedSpec(m=16, q=8, d_star=graph.element_count, r_star=r_star)
        xs = torch.randn(5, 16, dtype=torch.float64)
        batched = embed_elements(graph, xs, spec)
        for b in range(5):
            assert torch.equal(batched[b], embed_elements(graph, xs[b], spec))
