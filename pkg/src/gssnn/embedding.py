"""Feature-injection embedding turning (graph, input vector) pairs into
graphs with real-valued features.

Each element's symbolic feature pair (id, rank) selects a contiguous slice of
the input vector, which is tiled up to the target dimensionality and shifted
by a static sinusoidal bias determined by (id, rank).  The embedding is affine
in the input, so any downstream network remains differentiable end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import FeatureGraph, GraphElement, degree_stats

_LN_BASE = math.log(10000.0)


@dataclass(frozen=True)
class EmbeddingSpec:
    m: int  # input dimensionality
    q: int  # per-element feature dimensionality
    d_star: int  # number of element ids covered
    r_star: int  # number of ranks covered
    pos_normalized: bool = False  # conventional exponent (i mod q/4)/(q/4)
    simple_reorder: bool = False  # use (d, r) directly instead of the mixed pair

    def __post_init__(self):
        if self.d_star < 1:
            raise ValueError("d_star must be >= 1")
        if self.m < self.d_star:
            raise ValueError(f"m={self.m} must be >= d_star={self.d_star}")
        if self.q < 4 or self.q % 4 != 0:
            raise ValueError("q must be a positive multiple of 4")
        if self.r_star < 1:
            raise ValueError("r_star must be >= 1")

    @property
    def slice_len(self) -> int:
        return self.m // self.d_star

    def to_json_dict(self) -> dict:
        return {"m": self.m, "q": self.q, "d_star": self.d_star, "r_star": self.r_star}

    @classmethod
    def for_graph(cls, g: FeatureGraph, m: int, q: int, **flags) -> "EmbeddingSpec":
        d_star, r_star = degree_stats(g)
        return cls(m=m, q=q, d_star=d_star, r_star=r_star, **flags)


def idx(w: int, spec: EmbeddingSpec) -> int:
    """Start offset of the w-th input slice; idx(d_star) == m.

    Slice 0 absorbs the division remainder, so the slices
    [idx(w), idx(w+1)) for w = 0..d_star-1 always partition [0, m).
    """
    if w < 0 or w > spec.d_star:
        raise ValueError(f"slice index {w} out of range 0..{spec.d_star}")
    if w == 0:
        return 0
    l = spec.slice_len
    return (spec.m - spec.d_star * l) + w * l


def tile_expand(s, q: int) -> np.ndarray:
    """Concatenate ceil(q/t) copies of s and truncate to length q."""
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        raise ValueError("cannot tile an empty vector")
    return s[np.arange(q) % s.size]


def reorder(d: int, r: int, spec: EmbeddingSpec) -> tuple[int, int]:
    """Mixed index pair ((d*r_star + r) mod d_star, (d*r_star + r) div d_star).

    A bijection of [0, d_star) x [0, r_star) onto itself.  With
    simple_reorder the identity pair (d, r) is used instead.
    """
    if not (0 <= d < spec.d_star):
        raise ValueError(f"id {d} out of range 0..{spec.d_star - 1}")
    if not (0 <= r < spec.r_star):
        raise ValueError(f"rank {r} out of range 0..{spec.r_star - 1}")
    if spec.simple_reorder:
        return d, r
    k = d * spec.r_star + r
    return k % spec.d_star, k // spec.d_star


def pos_2d(d: int, r: int, spec: EmbeddingSpec) -> np.ndarray:
    """Static sinusoidal bias for feature pair (d, r); values lie in [-1, 1].

    Quarters hold sin/cos of the first reorder component then sin/cos of the
    second, at wavelengths 10000^(i mod q/4) for position i.  The denominator
    is applied in log space, so large exponents underflow to argument 0
    (sin -> 0, cos -> 1) instead of overflowing.
    """
    p1, p2 = reorder(d, r, spec)
    quarter = spec.q // 4
    expo = np.arange(quarter, dtype=float)
    if spec.pos_normalized:
        expo = expo / quarter
    scale = np.exp(-expo * _LN_BASE)
    a1 = p1 * scale
    a2 = p2 * scale
    return np.concatenate([np.sin(a1), np.cos(a1), np.sin(a2), np.cos(a2)])


def embed(v: GraphElement, x, spec: EmbeddingSpec) -> np.ndarray:
    """Tiled input slice for v.id plus the static bias for (v.id, v.rank)."""
    if v.id >= spec.d_star or v.rank >= spec.r_star:
        raise ValueError(
            f"stale spec: element (id={v.id}, rank={v.rank}) outside "
            f"d_star={spec.d_star}, r_star={spec.r_star}"
        )
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.m,):
        raise ValueError(f"input vector has shape {x.shape}, expected ({spec.m},)")
    lo, hi = idx(v.id, spec), idx(v.id + 1, spec)
    return tile_expand(x[lo:hi], spec.q) + pos_2d(v.id, v.rank, spec)


@dataclass(frozen=True)
class EmbeddedGraph:
    """Same topology as the source graph with one q-vector per element,
    feature row i belonging to the element with id i."""

    graph: FeatureGraph
    features: np.ndarray  # (element count, q)
    spec: EmbeddingSpec

    def to_json_dict(self) -> dict:
        out = self.graph.to_json_dict()
        out["features"] = [row.tolist() for row in self.features]
        out["spec"] = self.spec.to_json_dict()
        return out


def graph_map(g: FeatureGraph, x, spec: EmbeddingSpec) -> EmbeddedGraph:
    """Apply the embedding to every element of g, preserving topology."""
    d_star, r_star = degree_stats(g)
    if spec.d_star < d_star or spec.r_star < r_star:
        raise ValueError(
            f"stale spec: graph needs d_star>={d_star}, r_star>={r_star}, "
            f"spec has ({spec.d_star}, {spec.r_star})"
        )
    by_id = sorted(g.elements, key=lambda e: e.id)
    features = np.stack([embed(e, x, spec) for e in by_id])
    return EmbeddedGraph(graph=g, features=features, spec=spec)
