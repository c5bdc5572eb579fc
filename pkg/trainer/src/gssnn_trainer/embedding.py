"""Differentiable feature-injection embedding over graph JSON.

Reproduces the engine's emit-embedding output from the wire format alone:
an element's id selects a contiguous slice of the input vector, the slice
is tiled out to q entries, and a static sinusoidal bias in (id, rank) is
added.  Tiling is expressed as a gather, so gradients flow from every
feature row back to the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

_LN_BASE = math.log(10000.0)


@dataclass(frozen=True)
class EmbedSpec:
    m: int
    q: int
    d_star: int
    r_star: int


@dataclass(frozen=True)
class FeatureGraphData:
    """Parsed graph JSON: per-element (id, rank) plus edge topology."""

    node_ids: tuple[int, ...]
    node_ranks: tuple[int, ...]
    edge_ids: tuple[int, ...]
    edge_ranks: tuple[int, ...]
    edge_endpoints: tuple[tuple[int, int], ...]  # node ids

    @property
    def element_count(self) -> int:
        return len(self.node_ids) + len(self.edge_ids)


def parse_spec(data: dict) -> EmbedSpec:
    spec = EmbedSpec(int(data["m"]), int(data["q"]), int(data["d_star"]), int(data["r_star"]))
    if spec.d_star < 1 or spec.m < spec.d_star:
        raise ValueError(f"bad spec: m={spec.m}, d_star={spec.d_star}")
    if spec.q < 4 or spec.q % 4 != 0:
        raise ValueError("q must be a positive multiple of 4")
    if spec.r_star < 1:
        raise ValueError("r_star must be >= 1")
    return spec


def parse_graph(data: dict) -> FeatureGraphData:
    nodes = sorted(data["nodes"], key=lambda n: int(n["id"]))
    edges = sorted(data["edges"], key=lambda e: int(e["id"]))
    g = FeatureGraphData(
        node_ids=tuple(int(n["id"]) for n in nodes),
        node_ranks=tuple(int(n["rank"]) for n in nodes),
        edge_ids=tuple(int(e["id"]) for e in edges),
        edge_ranks=tuple(int(e["rank"]) for e in edges),
        edge_endpoints=tuple((int(e["u"]), int(e["v"])) for e in edges),
    )
    ids = sorted(g.node_ids + g.edge_ids)
    if ids != list(range(len(ids))) or not g.node_ids:
        raise ValueError("element ids are not the contiguous range 0..n-1")
    known = set(g.node_ids)
    for u, v in g.edge_endpoints:
        if u == v or u not in known or v not in known:
            raise ValueError(f"bad edge endpoints ({u}, {v})")
    return g


def slice_bounds(m: int, d_star: int) -> list[int]:
    """Boundaries of the d_star input slices; slice 0 absorbs the remainder."""
    l = m // d_star
    off = m - d_star * l
    return [0] + [off + w * l for w in range(1, d_star + 1)]


def element_bias(d: int, r: int, spec: EmbedSpec, dtype=torch.float32) -> torch.Tensor:
    k = d * spec.r_star + r
    p1, p2 = k % spec.d_star, k // spec.d_star
    quarter = spec.q // 4
    scale = torch.exp(-torch.arange(quarter, dtype=torch.float64) * _LN_BASE)
    a1, a2 = p1 * scale, p2 * scale
    return torch.cat([torch.sin(a1), torch.cos(a1), torch.sin(a2), torch.cos(a2)]).to(dtype)


def _gather_index(graph: FeatureGraphData, spec: EmbedSpec) -> torch.Tensor:
    bounds = slice_bounds(spec.m, spec.d_star)
    rows = []
    order = sorted(
        list(zip(graph.node_ids, graph.node_ranks)) + list(zip(graph.edge_ids, graph.edge_ranks))
    )
    for eid, _ in order:
        lo, hi = bounds[eid], bounds[eid + 1]
        rows.append(lo + torch.arange(spec.q) % (hi - lo))
    return torch.stack(rows)


def _bias_matrix(graph: FeatureGraphData, spec: EmbedSpec, dtype) -> torch.Tensor:
    order = sorted(
        list(zip(graph.node_ids, graph.node_ranks)) + list(zip(graph.edge_ids, graph.edge_ranks))
    )
    return torch.stack([element_bias(eid, rank, spec, dtype) for eid, rank in order])


def embed_elements(graph: FeatureGraphData, x: torch.Tensor, spec: EmbedSpec) -> torch.Tensor:
    """Feature rows for every element in id order; x is (m,) or (batch, m)."""
    if max(eid for eid in graph.node_ids + graph.edge_ids) >= spec.d_star:
        raise ValueError("spec does not cover every element id")
    if max(graph.node_ranks + graph.edge_ranks) >= spec.r_star:
        raise ValueError("spec does not cover every element rank")
    gather = _gather_index(graph, spec)
    bias = _bias_matrix(graph, spec, x.dtype)
    return x[..., gather] + bias
