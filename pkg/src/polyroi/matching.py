"""Set-prediction machinery: loss components, the bipartite matching cost,
Hungarian assignment, and the composite training loss.

Boxes are normalized (cx, cy, w, h) tensors.  Loss functions are written in
torch and stay differentiable; the matching itself runs detached in numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

PROB_EPS = 1e-8  # clamp inside log for focal terms


@dataclass(frozen=True)
class LossWeights:
    lambda_box: float = 5.0
    lambda_cls: float = 2.0
    lambda_giou: float = 2.0
    lambda_poly: float = 5.0
    lambda_vtx: float = 1.0

    def __post_init__(self):
        if min(self.lambda_box, self.lambda_cls, self.lambda_giou,
               self.lambda_poly, self.lambda_vtx) < 0:
            raise ValueError("loss weights must be nonnegative")

    def scaled(self, c: float) -> "LossWeights":
        return LossWeights(self.lambda_box * c, self.lambda_cls * c, self.lambda_giou * c,
                           self.lambda_poly * c, self.lambda_vtx * c)


@dataclass
class MatchResult:
    """Injective assignment of predictions to ground-truth instances."""

    pairs: list  # (prediction index, gt index), sorted by prediction index
    unmatched_preds: list

    @property
    def pred_indices(self) -> np.ndarray:
        return np.array([p for p, _ in self.pairs], dtype=np.int64)

    @property
    def gt_indices(self) -> np.ndarray:
        return np.array([g for _, g in self.pairs], dtype=np.int64)


@dataclass
class LossBreakdown:
    l_box: torch.Tensor
    l_cls: torch.Tensor
    l_giou: torch.Tensor
    l_poly: torch.Tensor
    l_vtx: torch.Tensor
    total: torch.Tensor

    def to_record(self, prefix: str = "") -> dict:
        """Flat key-value record for training logs."""
        return {
            f"{prefix}l_box": float(self.l_box),
            f"{prefix}l_cls": float(self.l_cls),
            f"{prefix}l_giou": float(self.l_giou),
            f"{prefix}l_poly": float(self.l_poly),
            f"{prefix}l_vtx": float(self.l_vtx),
            f"{prefix}total": float(self.total),
        }


def box_cxcywh_to_xyxy(box: torch.Tensor) -> torch.Tensor:
    cx, cy, w, h = box.unbind(-1)
    return torch.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dim=-1)


def l1_box(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Sum of absolute differences over the 4 box components."""
    return (pred - gt).abs().sum(dim=-1)


def giou_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """1 - GIoU for (cx, cy, w, h) boxes; raises on zero-area boxes."""
    if torch.any(pred[..., 2:] <= 0) or torch.any(gt[..., 2:] <= 0):
        raise ValueError("generalized IoU needs boxes with positive area")
    p = box_cxcywh_to_xyxy(pred)
    g = box_cxcywh_to_xyxy(gt)
    ix0 = torch.maximum(p[..., 0], g[..., 0])
    iy0 = torch.maximum(p[..., 1], g[..., 1])
    ix1 = torch.minimum(p[..., 2], g[..., 2])
    iy1 = torch.minimum(p[..., 3], g[..., 3])
    inter = (ix1 - ix0).clamp(min=0) * (iy1 - iy0).clamp(min=0)
    union = pred[..., 2] * pred[..., 3] + gt[..., 2] * gt[..., 3] - inter
    ex0 = torch.minimum(p[..., 0], g[..., 0])
    ey0 = torch.minimum(p[..., 1], g[..., 1])
    ex1 = torch.maximum(p[..., 2], g[..., 2])
    ey1 = torch.maximum(p[..., 3], g[..., 3])
    enclosing = (ex1 - ex0) * (ey1 - ey0)
    giou = inter / union - (enclosing - union) / enclosing
    return 1.0 - giou


def focal_loss(prob: torch.Tensor, target: torch.Tensor,
               alpha: float = 0.25, gamma: float = 2.0) -> torch.Tensor:
    """Elementwise focal term -alpha_t (1 - p_t)^gamma log(p_t)."""
    prob = prob.clamp(PROB_EPS, 1.0 - PROB_EPS)
    target = target.to(prob.dtype)
    p_t = prob * target + (1.0 - prob) * (1.0 - target)
    alpha_t = alpha * target + (1.0 - alpha) * (1.0 - target)
    return -alpha_t * (1.0 - p_t) ** gamma * torch.log(p_t)


def matching_cost(pred_boxes: torch.Tensor, pred_probs: torch.Tensor,
                  gt_boxes: torch.Tensor, gt_classes=None,
                  weights: LossWeights = LossWeights(),
                  alpha: float = 0.25, gamma: float = 2.0) -> np.ndarray:
    """Pairwise matching cost over bounding boxes and classification only.

    pred_probs is (N,) for the single-class setup or (N, num_classes); the
    classification term for column j scores the probability of GT j's class
    against target 1.  Returns a dense (N, K) float64 array.
    """
    with torch.no_grad():
        pb = pred_boxes.detach().double()
        gb = gt_boxes.detach().double()
        probs = pred_probs.detach().double()
        n = pb.shape[0]
        k = gb.shape[0]
        if k == 0:
            return np.zeros((n, 0), dtype=np.float64)
        if probs.ndim == 1:
            probs2d = probs[:, None]
            classes = torch.zeros(k, dtype=torch.long)
        else:
            probs2d = probs
            classes = torch.as_tensor(np.asarray(gt_classes), dtype=torch.long)
        cost_l1 = l1_box(pb[:, None, :], gb[None, :, :])
        cost_giou = giou_loss(pb[:, None, :].expand(n, k, 4), gb[None, :, :].expand(n, k, 4))
        p_cls = probs2d[:, classes]  # (N, K)
        cost_cls = focal_loss(p_cls, torch.ones_like(p_cls), alpha=alpha, gamma=gamma)
        cost = (weights.lambda_box * cost_l1 + weights.lambda_cls * cost_cls
                + weights.lambda_giou * cost_giou)
    out = cost.numpy()
    if not np.all(np.isfinite(out)):
        raise ValueError("matching cost has non-finite entries")
    return out


def _optimal_cost(cost: np.ndarray) -> float:
    """Minimum assignment cost matching every column (requires rows >= cols)."""
    if cost.shape[1] == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def hungarian(cost: np.ndarray, lexicographic: bool = True) -> MatchResult:
    """Minimum-cost injective assignment of all K ground truths to predictions.

    Ties between equal-cost assignments are broken by the lexicographically
    smallest (prediction index, gt index) pair list.  The refinement fixes
    pairs greedily and accepts a candidate only when an optimal completion
    exists, so the returned assignment always attains the optimal total.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, k = cost.shape
    if k > n:
        raise ValueError(f"more ground truths ({k}) than predictions ({n})")
    if k == 0:
        return MatchResult(pairs=[], unmatched_preds=list(range(n)))
    rows, cols = linear_sum_assignment(cost)
    if not lexicographic:
        pairs = sorted(zip(rows.tolist(), cols.tolist()))
        matched = {p for p, _ in pairs}
        return MatchResult(pairs=pairs, unmatched_preds=[i for i in range(n) if i not in matched])

    total = float(cost[rows, cols].sum())
    tol = 1e-9 * (1.0 + abs(total))
    pairs = []
    avail = list(range(k))
    fixed_cost = 0.0
    for i in range(n):
        if not avail:
            break
        rest = np.arange(i + 1, n)
        chosen = None
        for j in avail:
            others = [g for g in avail if g != j]
            if len(rest) < len(others):
                continue
            completion = _optimal_cost(cost[np.ix_(rest, others)])
            if fixed_cost + cost[i, j] + completion <= total + tol:
                chosen = j
                break
        if chosen is None and len(rest) < len(avail):
            # numerically forced: i must be matched, take the cheapest completion
            best = min(avail, key=lambda j: cost[i, j] + _optimal_cost(
                cost[np.ix_(rest, [g for g in avail if g != j])]))
            chosen = best
        if chosen is not None:
            pairs.append((i, chosen))
            fixed_cost += cost[i, chosen]
            avail.remove(chosen)
    matched = {p for p, _ in pairs}
    return MatchResult(pairs=pairs, unmatched_preds=[i for i in range(n) if i not in matched])


def total_loss(preds: dict, gts: dict, match: MatchResult,
               weights: LossWeights = LossWeights(),
               alpha: float = 0.25, gamma: float = 2.0,
               poly_reduction: str = "mean") -> LossBreakdown:
    """Composite training loss over one image.

    preds: class_probs (N,) or (N, C), boxes (N, 4), polygons (N, M, 2),
    vertex_probs (N, M).  gts: boxes (K, 4), polygons (K, M, 2),
    vertex_labels (K, M), classes (K,).  Instance-level sums are normalized
    by K with a floor of 1 so empty images stay finite.
    """
    if poly_reduction not in ("mean", "sum"):
        raise ValueError(f"unknown poly_reduction {poly_reduction!r}")
    probs = preds["class_probs"]
    boxes = preds["boxes"]
    polys = preds["polygons"]
    vprobs = preds["vertex_probs"]
    k = int(gts["boxes"].shape[0])
    denom = max(k, 1)
    zero = boxes.sum() * 0.0

    if k > 0:
        pi = torch.as_tensor(match.pred_indices, dtype=torch.long)
        gi = torch.as_tensor(match.gt_indices, dtype=torch.long)
        l_box = l1_box(boxes[pi], gts["boxes"][gi]).sum() / denom
        l_giou = giou_loss(boxes[pi], gts["boxes"][gi]).sum() / denom
        poly_abs = (polys[pi] - gts["polygons"][gi]).abs().sum()
        m = polys.shape[1]
        l_poly = poly_abs / (denom * m * 2) if poly_reduction == "mean" else poly_abs / denom
        labels = gts["vertex_labels"][gi].to(vprobs.dtype)
        l_vtx = focal_loss(vprobs[pi], labels, alpha=alpha, gamma=gamma).sum() / (denom * m)
    else:
        l_box = l_giou = l_poly = l_vtx = zero

    if probs.ndim == 1:
        cls_target = torch.zeros_like(probs)
        if k > 0:
            cls_target[torch.as_tensor(match.pred_indices, dtype=torch.long)] = 1.0
        l_cls = focal_loss(probs, cls_target, alpha=alpha, gamma=gamma).sum() / denom
    else:
        cls_target = torch.zeros_like(probs)
        if k > 0:
            pi = torch.as_tensor(match.pred_indices, dtype=torch.long)
            gi = torch.as_tensor(match.gt_indices, dtype=torch.long)
            cls_target[pi, gts["classes"][gi]] = 1.0
        l_cls = focal_loss(probs, cls_target, alpha=alpha, gamma=gamma).sum() / denom

    total = (weights.lambda_box * l_box + weights.lambda_cls * l_cls
             + weights.lambda_giou * l_giou + weights.lambda_poly * l_poly
             + weights.lambda_vtx * l_vtx)
    return LossBreakdown(l_box=l_box, l_cls=l_cls, l_giou=l_giou,
                         l_poly=l_poly, l_vtx=l_vtx, total=total)
