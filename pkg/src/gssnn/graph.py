"""Symbolic feature graphs and isomorphism testing.

The value space is the set of single-component undirected multigraphs whose
nodes and edges both carry a pair of symbolic features: a creation-order id
and a neighborhood rank.  Nodes have rank 0; edges carry positive ranks that
are pairwise distinct within the incident-edge set of each endpoint.
Self-edges are not allowed.  Element ids record creation order: the id of an
element equals the number of elements present when it was created, so the id
set of a valid graph is always 0..(node_count + edge_count - 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field


class InvariantViolation(ValueError):
    """A graph failed one of the feature-graph invariants."""


@dataclass(frozen=True)
class GraphElement:
    kind: str  # "node" | "edge"
    id: int
    rank: int
    endpoints: tuple[int, int] | None = None  # node ids, edges only

    def __post_init__(self):
        if self.kind not in ("node", "edge"):
            raise InvariantViolation(f"unknown element kind {self.kind!r}")
        if self.kind == "node" and self.endpoints is not None:
            raise InvariantViolation("node with endpoints")
        if self.kind == "edge" and self.endpoints is None:
            raise InvariantViolation("edge without endpoints")


@dataclass(frozen=True)
class FeatureGraph:
    """Immutable multigraph value; construct through GraphBuilder."""

    elements: tuple[GraphElement, ...] = field(default_factory=tuple)

    @property
    def node_count(self) -> int:
        return sum(1 for e in self.elements if e.kind == "node")

    @property
    def edge_count(self) -> int:
        return sum(1 for e in self.elements if e.kind == "edge")

    @property
    def nodes(self) -> list[GraphElement]:
        return [e for e in self.elements if e.kind == "node"]

    @property
    def edges(self) -> list[GraphElement]:
        return [e for e in self.elements if e.kind == "edge"]

    def node_ids(self) -> list[int]:
        """Node ids in creation order."""
        return [e.id for e in self.elements if e.kind == "node"]

    def validate(self) -> None:
        """Raise InvariantViolation unless every feature-graph invariant holds."""
        ids = [e.id for e in self.elements]
        if sorted(ids) != list(range(len(self.elements))):
            raise InvariantViolation("element ids are not the contiguous range 0..n-1")
        node_ids = set()
        for e in self.elements:
            if e.kind == "node":
                if e.rank != 0:
                    raise InvariantViolation(f"node {e.id} has rank {e.rank} != 0")
                node_ids.add(e.id)
        incident: dict[int, list[int]] = {nid: [] for nid in node_ids}
        for e in self.elements:
            if e.kind != "edge":
                continue
            u, v = e.endpoints
            if u == v:
                raise InvariantViolation(f"self-edge at id {e.id}")
            if u not in node_ids or v not in node_ids:
                raise InvariantViolation(f"edge {e.id} references missing node")
            if e.rank < 1:
                raise InvariantViolation(f"edge {e.id} has rank {e.rank} < 1")
            incident[u].append(e.rank)
            incident[v].append(e.rank)
        for nid, ranks in incident.items():
            if len(ranks) != len(set(ranks)):
                raise InvariantViolation(f"duplicate edge rank in neighborhood of node {nid}")
        self._check_connected(node_ids)

    def _check_connected(self, node_ids: set[int]) -> None:
        if not node_ids:
            raise InvariantViolation("graph has no nodes")
        adj: dict[int, set[int]] = {nid: set() for nid in node_ids}
        for e in self.elements:
            if e.kind == "edge":
                u, v = e.endpoints
                adj[u].add(v)
                adj[v].add(u)
        start = next(iter(node_ids))
        seen = {start}
        stack = [start]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if seen != node_ids:
            raise InvariantViolation("graph is not a single connected component")

    def canonical_key(self) -> tuple:
        """Hashable form equal for exactly the featured-isomorphic graphs."""
        out = []
        for e in sorted(self.elements, key=lambda e: e.id):
            if e.kind == "node":
                out.append(("node", e.id, e.rank))
            else:
                u, v = sorted(e.endpoints)
                out.append(("edge", e.id, e.rank, u, v))
        return tuple(out)

    def to_json_dict(self) -> dict:
        nodes = [{"id": e.id, "rank": e.rank} for e in sorted(self.nodes, key=lambda e: e.id)]
        edges = []
        for e in sorted(self.edges, key=lambda e: e.id):
            u, v = sorted(e.endpoints)
            edges.append({"id": e.id, "rank": e.rank, "u": u, "v": v})
        return {"nodes": nodes, "edges": edges}

    @classmethod
    def from_json_dict(cls, data: dict) -> "FeatureGraph":
        elements = []
        for n in data["nodes"]:
            elements.append(GraphElement("node", int(n["id"]), int(n["rank"])))
        for e in data["edges"]:
            elements.append(
                GraphElement("edge", int(e["id"]), int(e["rank"]), (int(e["u"]), int(e["v"])))
            )
        elements.sort(key=lambda e: e.id)
        g = cls(tuple(elements))
        g.validate()
        return g


class GraphBuilder:
    """Incremental constructor assigning ids by creation order and edge ranks
    by the rule: rank = 1 + max rank over existing edges incident to either
    endpoint (0 if none)."""

    def __init__(self, base: FeatureGraph | None = None):
        self._elements: list[GraphElement] = list(base.elements) if base else []
        self._node_ids: list[int] = [e.id for e in self._elements if e.kind == "node"]
        # Per-node max incident edge rank and per-pair edge counts; kept
        # incrementally so each builder step stays O(1).
        self._max_rank: dict[int, int] = {nid: 0 for nid in self._node_ids}
        self._pair_count: dict[tuple[int, int], int] = {}
        for e in self._elements:
            if e.kind == "edge":
                u, v = e.endpoints
                self._max_rank[u] = max(self._max_rank[u], e.rank)
                self._max_rank[v] = max(self._max_rank[v], e.rank)
                pair = (min(u, v), max(u, v))
                self._pair_count[pair] = self._pair_count.get(pair, 0) + 1

    @property
    def node_count(self) -> int:
        return len(self._node_ids)

    def node_id_at(self, index: int) -> int:
        """Id of the index-th node in creation order."""
        return self._node_ids[index]

    def last_node_id(self) -> int | None:
        return self._node_ids[-1] if self._node_ids else None

    def multiplicity(self, u: int, v: int) -> int:
        return self._pair_count.get((min(u, v), max(u, v)), 0)

    def add_node(self) -> int:
        nid = len(self._elements)
        self._elements.append(GraphElement("node", nid, 0))
        self._node_ids.append(nid)
        self._max_rank[nid] = 0
        return nid

    def add_edge(self, u: int, v: int) -> int:
        if u == v:
            raise InvariantViolation(f"self-edge at node {u}")
        if u not in self._max_rank or v not in self._max_rank:
            raise InvariantViolation("edge endpoint is not an existing node")
        rank = 1 + max(self._max_rank[u], self._max_rank[v])
        eid = len(self._elements)
        self._elements.append(GraphElement("edge", eid, rank, (u, v)))
        self._max_rank[u] = max(self._max_rank[u], rank)
        self._max_rank[v] = max(self._max_rank[v], rank)
        pair = (min(u, v), max(u, v))
        self._pair_count[pair] = self._pair_count.get(pair, 0) + 1
        return eid

    def build(self) -> FeatureGraph:
        g = FeatureGraph(tuple(self._elements))
        g.validate()
        return g


def degree_stats(g: FeatureGraph) -> tuple[int, int]:
    """(1 + max id, 1 + max rank) over all elements of a nonempty graph."""
    if not g.elements:
        raise ValueError("empty graph")
    d_star = 1 + max(e.id for e in g.elements)
    r_star = 1 + max(e.rank for e in g.elements)
    return d_star, r_star


class _MultiView:
    """Simple-graph view of a multigraph: adjacency with multiplicity labels."""

    __slots__ = ("n", "adj", "degree")

    def __init__(self, g: FeatureGraph):
        index = {nid: i for i, nid in enumerate(g.node_ids())}
        self.n = len(index)
        self.adj: list[dict[int, int]] = [dict() for _ in range(self.n)]
        for e in g.elements:
            if e.kind == "edge":
                i, j = index[e.endpoints[0]], index[e.endpoints[1]]
                self.adj[i][j] = self.adj[i].get(j, 0) + 1
                self.adj[j][i] = self.adj[j].get(i, 0) + 1
        self.degree = [sum(d.values()) for d in self.adj]


def _matching_order(view: _MultiView) -> list[int]:
    """Visit order keeping the mapped prefix connected, high degree first."""
    n = view.n
    visited = [False] * n
    order = []
    while len(order) < n:
        # most mapped neighbors, then highest degree; seeds a new component if needed
        best = None
        best_key = None
        for i in range(n):
            if visited[i]:
                continue
            mapped_nbrs = sum(1 for j in view.adj[i] if visited[j])
            key = (mapped_nbrs, view.degree[i], -i)
            if best_key is None or key > best_key:
                best, best_key = i, key
        order.append(best)
        visited[best] = True
    return order


def isomorphic_structure(g1: FeatureGraph, g2: FeatureGraph) -> bool:
    """True iff a node bijection preserves the edge multiset, ignoring ids and
    ranks.  Complete VF2-family backtracking with degree and multiplicity
    pruning."""
    if g1.node_count != g2.node_count or g1.edge_count != g2.edge_count:
        return False
    v1, v2 = _MultiView(g1), _MultiView(g2)
    if sorted(v1.degree) != sorted(v2.degree):
        return False
    mults1 = sorted(m for adj in v1.adj for m in adj.values())
    mults2 = sorted(m for adj in v2.adj for m in adj.values())
    if mults1 != mults2:
        return False
    n = v1.n
    if n == 0:
        return True
    order = _matching_order(v1)
    mapping = [-1] * n  # v1 index -> v2 index
    rmap = [-1] * n  # v2 index -> v1 index

    def extend(k: int) -> bool:
        if k == n:
            return True
        i = order[k]
        anchor = None
        for j, m in v1.adj[i].items():
            if mapping[j] >= 0:
                anchor = (j, m)
                break
        if anchor is not None:
            j, m = anchor
            candidates = [c for c, mc in v2.adj[mapping[j]].items() if mc == m and rmap[c] < 0]
        else:
            candidates = [c for c in range(n) if rmap[c] < 0]
        deg = v1.degree[i]
        for c in candidates:
            if v2.degree[c] != deg:
                continue
            ok = True
            for j, m in v1.adj[i].items():
                if mapping[j] >= 0 and v2.adj[c].get(mapping[j]) != m:
                    ok = False
                    break
            if ok:
                for cj, m in v2.adj[c].items():
                    if rmap[cj] >= 0 and v1.adj[i].get(rmap[cj]) != m:
                        ok = False
                        break
            if not ok:
                continue
            mapping[i], rmap[c] = c, i
            if extend(k + 1):
                return True
            mapping[i], rmap[c] = -1, -1
        return False

    return extend(0)


def isomorphic_featured(g1: FeatureGraph, g2: FeatureGraph) -> bool:
    """True iff a structure isomorphism exists that also preserves id and rank
    of every element.  Ids are unique, so the only candidate mapping is the
    id-preserving one; it works exactly when the canonical forms coincide."""
    return g1.canonical_key() == g2.canonical_key()
