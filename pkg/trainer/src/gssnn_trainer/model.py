"""GINE network over embedded graph elements, plus an image stem.

The graph model owns static buffers derived from one (graph, spec) pair:
a gather index that tiles input slices into feature rows and the matching
sinusoidal bias.  Forward passes are pure tensor ops, so the whole map
from input vector to logit is differentiable and batchable.
"""

from __future__ import annotations

import torch
from torch import nn

from .embedding import EmbedSpec, FeatureGraphData, _bias_matrix, _gather_index


class GineLayer(nn.Module):
    """Message passing with edge features folded into each message.

    h_i' = MLP(h_i + sum_j relu(h_j + e_ji)) over both orientations of
    every undirected edge; the self-weight epsilon is fixed at zero.
    """

    def __init__(self, dim: int, dtype=torch.float32):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim, dtype=dtype),
            nn.ReLU(),
            nn.Linear(dim, dim, dtype=dtype),
        )
        self.eps = 0.0

    def forward(self, h: torch.Tensor, edge_index: torch.Tensor, efeat: torch.Tensor) -> torch.Tensor:
        u, v = edge_index
        src = torch.cat([u, v])
        dst = torch.cat([v, u])
        msgs = torch.relu(h.index_select(-2, src) + torch.cat([efeat, efeat], dim=-2))
        agg = torch.zeros_like(h).index_add(h.dim() - 2, dst, msgs)
        return self.mlp((1.0 + self.eps) * h + agg)


class GraphModel(nn.Module):
    """Embeds inputs through a fixed graph and classifies the pooled nodes."""

    def __init__(
        self,
        graph: FeatureGraphData,
        spec: EmbedSpec,
        *,
        layers: int = 3,
        dropout: float = 0.3,
        out_dim: int = 1,
        dtype=torch.float32,
    ):
        super().__init__()
        self.spec = spec
        self.register_buffer("gather_index", _gather_index(graph, spec))
        self.register_buffer("bias", _bias_matrix(graph, spec, dtype))
        self.register_buffer("node_rows", torch.tensor(graph.node_ids, dtype=torch.long))
        self.register_buffer("edge_rows", torch.tensor(graph.edge_ids, dtype=torch.long))
        slot = {nid: i for i, nid in enumerate(graph.node_ids)}
        pairs = [(slot[u], slot[v]) for u, v in graph.edge_endpoints]
        self.register_buffer(
            "edge_index",
            torch.tensor(pairs, dtype=torch.long).reshape(-1, 2).t().contiguous(),
        )
        self.convs = nn.ModuleList(GineLayer(spec.q, dtype=dtype) for _ in range(layers))
        self.dropout = nn.Dropout(dropout)
        self.head = nn.Sequential(
            nn.Linear(spec.q, spec.q, dtype=dtype),
            nn.ReLU(),
            nn.Linear(spec.q, out_dim, dtype=dtype),
        )

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        return x[..., self.gather_index] + self.bias

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.embed(x)
        h = feats.index_select(-2, self.node_rows)
        e = feats.index_select(-2, self.edge_rows)
        for i, conv in enumerate(self.convs):
            if i:
                h = self.dropout(h)
            h = conv(h, self.edge_index, e)
        return self.head(h.mean(dim=-2))


class _ResidualConvUnit(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv = nn.Conv2d(width, width, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + torch.relu(self.conv(x))


class _TransformerBlock(nn.Module):
    def __init__(self, width: int, heads: int, mlp_dim: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, mlp_dim),
            nn.GELU(),
            nn.Linear(mlp_dim, width),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        a = self.norm1(x)
        x = x + self.attn(a, a, a, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class VisionBackbone(nn.Module):
    """Image-to-vector stem: subpixel downsample, conv units, ViT blocks.

    128x128 inputs shrink to an 8x8 token grid in one PixelUnshuffle step,
    pass through residual conv units and pre-norm transformer blocks, and
    average-pool to a single vector.
    """

    def __init__(
        self,
        *,
        in_channels: int = 1,
        width: int = 512,
        heads: int = 4,
        mlp_dim: int = 512,
        blocks: int = 2,
        conv_units: int = 3,
        out_dim: int = 512,
        patch: int = 16,
    ):
        super().__init__()
        self.unshuffle = nn.PixelUnshuffle(patch)
        self.proj = nn.Conv2d(in_channels * patch * patch, width, 1)
        self.units = nn.Sequential(*[_ResidualConvUnit(width) for _ in range(conv_units)])
        self.blocks = nn.ModuleList(_TransformerBlock(width, heads, mlp_dim) for _ in range(blocks))
        self.out = nn.Linear(width, out_dim)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        x = self.units(self.proj(self.unshuffle(img)))
        x = x.flatten(2).transpose(1, 2)
        for block in self.blocks:
            x = block(x)
        return self.out(x.mean(dim=1))
