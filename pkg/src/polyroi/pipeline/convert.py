"""Raster masks to vector annotations: marching-squares contour tracing, then
ring simplification and near-straight edge merging."""

from __future__ import annotations

import logging

import numpy as np
from skimage import measure

from .. import geometry
from ..geometry import BuildingInstance, Polygon

log = logging.getLogger(__name__)


def trace_contours(mask: np.ndarray) -> list:
    """Closed rings of the binary mask in pixel coordinates.

    Marching squares on pixel centers (value crossings at 0.5); the mask is
    zero-padded first so border-touching regions produce closed rings.  The
    returned rings use the package convention of pixel centers at +0.5.
    """
    padded = np.pad(np.asarray(mask, dtype=float), 1)
    rings = []
    for contour in measure.find_contours(padded, 0.5):
        pts = contour[:, ::-1]  # (row, col) -> (x, y)
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        pts = pts - 1.0 + 0.5  # undo padding, shift to pixel-center coordinates
        keep = ~np.all(np.isclose(pts, np.roll(pts, -1, axis=0)), axis=1)
        pts = pts[keep]
        if pts.shape[0] < 3:
            continue
        rings.append(Polygon(pts))
    return rings


def convert_mask(mask: np.ndarray, dp_tol: float = 5.0,
                 low_deg: float = 10.0, high_deg: float = 160.0) -> list:
    """Instances (outer rings and inner outlines as separate instances) traced
    from one binary mask."""
    dropped = 0
    simplified = []
    for ring in trace_contours(mask):
        try:
            out = geometry.douglas_peucker(ring, dp_tol)
            out = geometry.merge_near_straight_edges(out, low_deg, high_deg)
        except geometry.DegeneratePolygonError:
            dropped += 1
            continue
        simplified.append(out)
    if dropped:
        log.info("dropped %d degenerate ring(s) during vectorization", dropped)

    instances = []
    for i, ring in enumerate(simplified):
        depth = sum(1 for j, other in enumerate(simplified) if j != i
                    and geometry.point_in_polygon(ring.verts[0] + _inward_nudge(ring), other))
        if depth % 2 == 0:
            instances.append(BuildingInstance(outer=geometry.canonicalize(ring), class_tag="outer"))
        else:
            instances.append(BuildingInstance(outer=geometry.canonicalize(ring), class_tag="inner"))
    return instances


def _inward_nudge(ring: Polygon) -> np.ndarray:
    """Tiny offset toward the ring centroid so containment tests avoid
    boundary coincidences between nested rings."""
    c = geometry.polygon_centroid(ring)
    d = c - ring.verts[0]
    n = np.linalg.norm(d)
    return d / n * 1e-6 if n > 0 else np.zeros(2)


def convert_masks(masks: list, dp_tol: float = 5.0, low_deg: float = 10.0,
                  high_deg: float = 160.0) -> list:
    """Per-mask instance lists; all-zero masks yield empty lists."""
    return [convert_mask(m, dp_tol, low_deg, high_deg) for m in masks]
