"""Vertex-level polygon quality: the symmetric vertex-to-boundary distance
and the vertex-count ratio."""

from __future__ import annotations

import numpy as np

from ..geometry import Polygon


def _min_distance_to_boundary(pts: np.ndarray, poly: Polygon) -> np.ndarray:
    """Distance from each point (P, 2) to the closed boundary of poly."""
    v = poly.verts
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a                                   # (S, 2)
    denom = np.einsum("sd,sd->s", ab, ab)
    rel = pts[:, None, :] - a[None, :, :]        # (P, S, 2)
    t = np.einsum("psd,sd->ps", rel, ab) / np.where(denom == 0, 1.0, denom)
    t = np.clip(t, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = np.linalg.norm(pts[:, None, :] - proj, axis=-1)
    return d.min(axis=1)


def polis(x: Polygon, y: Polygon) -> float:
    """Symmetric average distance between each polygon's vertices and the
    other polygon's boundary: (1/2m) sum_i d(x_i, bd Y) + (1/2n) sum_j d(y_j, bd X)."""
    m = len(x)
    n = len(y)
    dx = _min_distance_to_boundary(x.verts, y).sum() / (2.0 * m)
    dy = _min_distance_to_boundary(y.verts, x).sum() / (2.0 * n)
    return float(dx + dy)


def pair_by_iou(gt_masks: list, det_masks: list, iou_fn, threshold: float = 0.5) -> list:
    """Pairing protocol for vertex-level metrics: each ground truth takes the
    highest-IoU detection with IoU above the threshold.  Returns a list of
    (gt index, det index) pairs; unpaired entries are simply absent."""
    pairs = []
    for gi, gm in enumerate(gt_masks):
        best_iou = threshold
        best = None
        for di, dm in enumerate(det_masks):
            v = iou_fn(gm, dm)
            if v > best_iou:
                best_iou = v
                best = di
        if best is not None:
            pairs.append((gi, best))
    return pairs


def n_ratio(det_vertex_counts: list, gt_vertex_counts: list) -> float | None:
    """Total predicted vertices over total reference vertices of paired
    polygons; None when there are no pairs."""
    if len(det_vertex_counts) != len(gt_vertex_counts):
        raise ValueError("paired count lists must align")
    if not gt_vertex_counts:
        return None
    return float(sum(det_vertex_counts) / sum(gt_vertex_counts))
