"""The full iterative polygon detector.

A tiny pyramid backbone feeds a cascade of refinement stages.  Every stage
re-encodes the current proposal polygons into vertex proposal features,
pools RoI features under the current proposal boxes, lets the two interact,
and predicts class scores, refined boxes, refined polygons and per-vertex
scores.  Stage k + 1 consumes stage k's boxes and polygons; parameters are
not shared between stages.

The proposal boxes and polygons themselves are learned per-slot parameters.
They start at the whole-image box and its sampled contour; a small seeded
jitter on the polygon parameters breaks the slot symmetry, without which all
slots would receive identical gradients forever and the detector could never
predict more than one distinct instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .. import geometry
from ..geometry import BoundingBox
from .backbone import TinyPyramid
from .blocks import DynamicInteraction, PredictionHeads, SelfAttention, VertexProposalEncoder
from .config import ModelConfig
from .roi import roi_align


@dataclass
class ProposalSet:
    """N proposal boxes with their index-aligned M-vertex proposal polygons."""

    boxes: np.ndarray      # (N, 4) normalized cxcywh
    polygons: np.ndarray   # (N, M, 2) normalized
    stage_index: int = 0


@dataclass
class StageOutput:
    """Predictions of one refinement stage (batched)."""

    class_probs: torch.Tensor   # (B, N) or (B, N, num_classes)
    boxes: torch.Tensor         # (B, N, 4)
    polygons: torch.Tensor      # (B, N, M, 2)
    vertex_probs: torch.Tensor  # (B, N, M)


def init_proposals(config: ModelConfig) -> ProposalSet:
    """Whole-image proposal boxes [0.5, 0.5, 1, 1] and their sampled contours."""
    box = BoundingBox(0.5, 0.5, 1.0, 1.0)
    contour = geometry.sample_box_contour(box, config.m_vertices)
    boxes = np.tile([0.5, 0.5, 1.0, 1.0], (config.n_proposals, 1)).astype(np.float64)
    polys = np.tile(contour[None, :, :], (config.n_proposals, 1, 1)).astype(np.float64)
    return ProposalSet(boxes=boxes, polygons=polys, stage_index=0)


class Stage(nn.Module):
    """One refinement layer: vertex proposal features guide the RoI features."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.vpf_encoder = VertexProposalEncoder(
            cfg.m_vertices, cfg.hidden_dim, cfg.channels,
            use_coordinates=cfg.vertex_proposal_feature_enabled,
            n_proposals=cfg.n_proposals)
        self.vpf_attention = SelfAttention(cfg.channels, cfg.attention_heads, cfg.dropout)
        self.vpf_norm = nn.LayerNorm(cfg.channels)
        self.interaction = DynamicInteraction(cfg.channels, cfg.dyn_dim, cfg.roi_size)
        if cfg.self_attention_enabled:
            self.obj_attention = SelfAttention(cfg.channels, cfg.attention_heads, cfg.dropout)
            self.obj_norm = nn.LayerNorm(cfg.channels)
        self.heads = PredictionHeads(cfg.channels, cfg.m_vertices, cfg.num_classes)

    def forward(self, pyramid: dict, boxes: torch.Tensor, polygons: torch.Tensor,
                image_hw: tuple, prev_obj: torch.Tensor | None = None):
        vpf = self.vpf_encoder(polygons)
        if self.cfg.carry_object_features and prev_obj is not None:
            vpf = vpf + prev_obj
        vpf = self.vpf_norm(self.vpf_attention(vpf))
        roi = roi_align(pyramid, boxes, self.cfg.roi_size, image_hw)
        obj = self.interaction(roi, vpf)
        if self.cfg.self_attention_enabled:
            obj = self.obj_norm(self.obj_attention(obj))
        class_probs, new_boxes, new_polys, vertex_probs = self.heads(obj, boxes, polygons)
        out = StageOutput(class_probs=class_probs, boxes=new_boxes,
                          polygons=new_polys, vertex_probs=vertex_probs)
        return out, obj


class PolygonDetector(nn.Module):
    """Backbone plus a cascade of refinement stages over learned proposals."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        torch.manual_seed(cfg.seed)  # deterministic parameter init
        self.cfg = cfg
        self.backbone = TinyPyramid(cfg.channels, cfg.pyramid_channels)
        self.stages = nn.ModuleList(Stage(cfg) for _ in range(cfg.num_stages))

        init = init_proposals(cfg)
        boxes = torch.tensor(init.boxes, dtype=torch.float32)
        polys = torch.tensor(init.polygons, dtype=torch.float32)
        j = cfg.proposal_init_jitter
        if j > 0:
            # shrink into [j, 1 - j] then jitter so coordinates stay interior
            polys = polys * (1 - 2 * j) + j
            polys = polys + (torch.rand_like(polys) * 2 - 1) * j
        self.proposal_boxes = nn.Parameter(boxes)
        self.proposal_polygons = nn.Parameter(polys)

    @property
    def dtype(self) -> torch.dtype:
        return self.proposal_boxes.dtype

    def forward(self, images: torch.Tensor | None = None, pyramid: dict | None = None,
                image_hw: tuple | None = None) -> list:
        """Run all stages; returns one StageOutput per stage.

        Either raw images (B, 3, H, W) or an externally computed pyramid plus
        the source image size may be supplied.
        """
        if pyramid is None:
            if images is None:
                raise ValueError("need images or a precomputed pyramid")
            image_hw = tuple(images.shape[-2:])
            pyramid = self.backbone(images)
        elif image_hw is None:
            raise ValueError("a precomputed pyramid needs image_hw")
        bsz = next(iter(pyramid.values())).shape[0]

        boxes = self.proposal_boxes.unsqueeze(0).expand(bsz, -1, -1)
        boxes = torch.cat([boxes[..., :2].clamp(0.0, 1.0),
                           boxes[..., 2:].clamp(1e-3, 2.0)], dim=-1)
        polys = self.proposal_polygons.unsqueeze(0).expand(bsz, -1, -1, -1).clamp(0.0, 1.0)

        outputs = []
        obj = None
        for stage in self.stages:
            out, obj = stage(pyramid, boxes, polys, image_hw, prev_obj=obj)
            outputs.append(out)
            boxes, polys = out.boxes, out.polygons
        return outputs

    def save_checkpoint(self, path) -> None:
        torch.save({"config": self.cfg.to_dict(), "state_dict": self.state_dict()}, path)

    @classmethod
    def load_checkpoint(cls, path) -> "PolygonDetector":
        blob = torch.load(path, map_location="cpu", weights_only=True)
        model = cls(ModelConfig.from_dict(blob["config"]))
        model.load_state_dict(blob["state_dict"])
        return model


@dataclass
class ScoredPolygon:
    """One kept instance after postprocessing, in pixel units."""

    polygon: geometry.Polygon
    score: float
    category: str = "outer"  # "outer" or "inner"


def postprocess(final: StageOutput, image_hw: tuple, score_thresh: float = 0.5,
                vertex_thresh: float = 0.5, hole_aware: bool = False) -> list:
    """Turn the last stage's output into polygons with instance scores.

    Per image: keep instances scoring at least score_thresh, keep vertices
    scoring at least vertex_thresh (order preserved), denormalize to pixels,
    drop rings failing the validity filter (more than 3 vertices, area above
    10 px^2).  Returns, per image, (scored polygons, building instances);
    with hole_aware the instances come from containment grouping of the kept
    inner rings into the kept outer rings.
    """
    h, w = image_hw
    probs = final.class_probs.detach()
    results = []
    bsz = probs.shape[0]
    for b in range(bsz):
        scored = []
        if probs.ndim == 2:
            scores = probs[b]
            cats = torch.zeros_like(scores, dtype=torch.long)
        else:
            scores, cats = probs[b].max(dim=-1)
        keep = torch.nonzero(scores >= score_thresh).flatten()
        for i in keep.tolist():
            vmask = final.vertex_probs[b, i].detach() >= vertex_thresh
            pts = final.polygons[b, i].detach()[vmask]
            if pts.shape[0] < 3:
                continue
            verts = pts.cpu().numpy() * np.array([w, h])
            try:
                ring = geometry.Polygon(verts)
            except geometry.DegeneratePolygonError:
                continue
            if len(ring) > 3 and abs(geometry.shoelace_area(ring)) > 10.0:
                cat = "inner" if int(cats[i]) == 1 else "outer"
                scored.append(ScoredPolygon(polygon=ring, score=float(scores[i]), category=cat))
        if hole_aware:
            outers = [s.polygon for s in scored if s.category == "outer"]
            inners = [s.polygon for s in scored if s.category == "inner"]
            instances = geometry.group_holes(outers, inners)
        else:
            instances = [geometry.BuildingInstance(outer=s.polygon) for s in scored
                         if s.category == "outer"]
        results.append((scored, instances))
    return results
