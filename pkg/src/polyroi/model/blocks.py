"""Learned building blocks of one refinement stage."""

from __future__ import annotations

import math

import torch
from torch import nn


class VertexProposalEncoder(nn.Module):
    """Vertex coordinates -> per-proposal latent vector.

    Two linear layers with a GELU between them, applied to the flattened
    (M, 2) polygon.  With use_coordinates=False the module degrades to the
    ablation baseline: a table of learned free vectors, one per proposal
    slot, ignoring the polygons entirely.
    """

    def __init__(self, m_vertices: int, hidden: int, channels: int,
                 use_coordinates: bool = True, n_proposals: int = 0):
        super().__init__()
        self.use_coordinates = use_coordinates
        if use_coordinates:
            self.fc1 = nn.Linear(2 * m_vertices, hidden)
            self.act = nn.GELU()
            self.fc2 = nn.Linear(hidden, channels)
        else:
            if n_proposals < 1:
                raise ValueError("free-vector mode needs the proposal count")
            self.table = nn.Parameter(torch.empty(n_proposals, channels))
            nn.init.normal_(self.table, std=0.02)

    def forward(self, polygons: torch.Tensor) -> torch.Tensor:
        """polygons: (B, N, M, 2) normalized -> (B, N, C)."""
        b, n = polygons.shape[:2]
        if not self.use_coordinates:
            return self.table.unsqueeze(0).expand(b, -1, -1)
        return self.fc2(self.act(self.fc1(polygons.reshape(b, n, -1))))


class SelfAttention(nn.Module):
    """Multi-head self-attention with a residual connection: x + W_o(attn(x))."""

    def __init__(self, channels: int, heads: int, dropout: float = 0.0):
        super().__init__()
        if channels % heads != 0:
            raise ValueError("channels must divide evenly over heads")
        self.heads = heads
        self.head_dim = channels // heads
        self.qkv = nn.Linear(channels, 3 * channels)
        self.proj = nn.Linear(channels, channels)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (B, N, C) -> (B, N, C)."""
        b, n, c = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)

        def split(t):
            return t.reshape(b, n, self.heads, self.head_dim).transpose(1, 2)

        q, k, v = split(q), split(k), split(v)
        attn = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.head_dim), dim=-1)
        mixed = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return x + self.drop(self.proj(mixed))


class DynamicInteraction(nn.Module):
    """RoI features regulated by the vertex proposal feature.

    A linear layer turns each proposal's latent vector into the weights of
    two successive 1x1 convolutions (C -> dyn -> C) that run over the S x S
    RoI grid, with layer normalization and GELU between; the result is
    flattened and projected back to a C-vector.
    """

    def __init__(self, channels: int, dyn_channels: int, roi_size: int):
        super().__init__()
        self.channels = channels
        self.dyn = dyn_channels
        self.param_gen = nn.Linear(channels, 2 * channels * dyn_channels)
        self.norm1 = nn.LayerNorm(dyn_channels)
        self.norm2 = nn.LayerNorm(channels)
        self.act = nn.GELU()
        self.out_proj = nn.Linear(channels * roi_size * roi_size, channels)
        self.out_norm = nn.LayerNorm(channels)

    def forward(self, roi: torch.Tensor, vpf: torch.Tensor) -> torch.Tensor:
        """roi: (B, N, C, S, S); vpf: (B, N, C) -> (B, N, C)."""
        b, n, c, s, _ = roi.shape
        params = self.param_gen(vpf)
        w1 = params[..., :c * self.dyn].reshape(b, n, c, self.dyn)
        w2 = params[..., c * self.dyn:].reshape(b, n, self.dyn, c)
        grid = roi.reshape(b, n, c, s * s).transpose(-1, -2)  # (B, N, S*S, C)
        h = self.act(self.norm1(grid @ w1))
        h = self.act(self.norm2(h @ w2))
        return self.act(self.out_norm(self.out_proj(h.reshape(b, n, -1))))


class MLPHead(nn.Module):
    """Three-layer perceptron; the final layer can start near zero so that
    refinement heads begin as (almost) identity updates."""

    def __init__(self, channels: int, out_dim: int, final_std: float = 0.0):
        super().__init__()
        self.fc1 = nn.Linear(channels, channels)
        self.fc2 = nn.Linear(channels, channels)
        self.fc3 = nn.Linear(channels, out_dim)
        self.act = nn.GELU()
        if final_std > 0:
            nn.init.normal_(self.fc3.weight, std=final_std)
            nn.init.normal_(self.fc3.bias, std=final_std)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc3(self.act(self.fc2(self.act(self.fc1(x)))))


BOX_WH_MIN = 1e-3
BOX_WH_MAX = 2.0


class PredictionHeads(nn.Module):
    """The four task heads of one stage: box classification, box regression,
    polygon regression and per-vertex classification.

    Box and polygon heads predict additive offsets on the current proposals;
    refined polygon coordinates are clipped to [0, 1] and box extents are
    kept positive.
    """

    def __init__(self, channels: int, m_vertices: int, num_classes: int = 1,
                 offset_init_std: float = 1e-3):
        super().__init__()
        self.num_classes = num_classes
        self.cls_head = MLPHead(channels, num_classes)
        self.box_head = MLPHead(channels, 4, final_std=offset_init_std)
        self.poly_head = MLPHead(channels, 2 * m_vertices, final_std=offset_init_std)
        self.vtx_head = MLPHead(channels, m_vertices)

    def forward(self, obj: torch.Tensor, boxes: torch.Tensor, polygons: torch.Tensor):
        """obj: (B, N, C); boxes: (B, N, 4); polygons: (B, N, M, 2).

        Returns (class_probs, boxes, polygons, vertex_probs); class_probs is
        (B, N) for the single-class setup, else (B, N, num_classes).
        """
        b, n, m = polygons.shape[:3]
        logits = self.cls_head(obj)
        class_probs = torch.sigmoid(logits.squeeze(-1) if self.num_classes == 1 else logits)
        deltas = self.box_head(obj)
        center = (boxes[..., :2] + deltas[..., :2]).clamp(0.0, 1.0)
        extent = (boxes[..., 2:] + deltas[..., 2:]).clamp(BOX_WH_MIN, BOX_WH_MAX)
        new_boxes = torch.cat([center, extent], dim=-1)
        new_polys = (polygons + self.poly_head(obj).reshape(b, n, m, 2)).clamp(0.0, 1.0)
        vertex_probs = torch.sigmoid(self.vtx_head(obj))
        return class_probs, new_boxes, new_polys, vertex_probs
