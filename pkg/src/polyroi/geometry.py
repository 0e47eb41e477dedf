"""Planar polygon machinery: rings, vectorization helpers, resampling, rasterization.

Conventions used throughout the package:

* Vertices are (x, y) pairs in pixel units, stored as float64 arrays of shape
  (V, 2).  Rings are implicitly closed; the first vertex is never repeated.
* "Counter-clockwise" means positive shoelace area in the given coordinates.
  Outer rings are canonically counter-clockwise, hole rings clockwise.
* The canonical start vertex of a ring is the topmost (smallest y) vertex,
  with ties broken by smallest x.
* Rasterization uses pixel-center membership under the even-odd fill rule;
  the pixel at row r, column c has its center at (c + 0.5, r + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegeneratePolygonError(ValueError):
    """Ring with too few vertices, repeated consecutive vertices, or no area."""


class CapacityError(ValueError):
    """Requested vertex budget cannot hold all reference corners."""


@dataclass(frozen=True)
class Polygon:
    """Closed vertex ring, no repeated closing vertex."""

    verts: np.ndarray

    def __post_init__(self):
        v = np.array(self.verts, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError(f"expected a (V, 2) vertex array, got shape {v.shape}")
        if v.shape[0] < 3:
            raise DegeneratePolygonError(f"ring needs at least 3 vertices, got {v.shape[0]}")
        if np.any(np.all(v == np.roll(v, -1, axis=0), axis=1)):
            raise DegeneratePolygonError("ring has two identical consecutive vertices")
        v.flags.writeable = False
        object.__setattr__(self, "verts", v)

    def __len__(self) -> int:
        return self.verts.shape[0]


@dataclass(frozen=True)
class LabeledPolygon:
    """Ring resampled to a fixed vertex count, with corner labels (1) vs filler (0)."""

    verts: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        v = np.array(self.verts, dtype=np.float64)
        l = np.array(self.labels, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2 or l.shape != (v.shape[0],):
            raise ValueError("verts must be (M, 2) and labels (M,)")
        if not np.all((l == 0) | (l == 1)):
            raise ValueError("labels must be 0 or 1")
        v.flags.writeable = False
        l.flags.writeable = False
        object.__setattr__(self, "verts", v)
        object.__setattr__(self, "labels", l)

    def __len__(self) -> int:
        return self.verts.shape[0]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box as normalized (cx, cy, w, h) in [0, 1] image coordinates."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center out of [0, 1]: ({self.cx}, {self.cy})")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive extent, got w={self.w}, h={self.h}")

    def to_xyxy(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2,
                self.cx + self.w / 2, self.cy + self.h / 2)

    @classmethod
    def from_xyxy(cls, x0: float, y0: float, x1: float, y1: float) -> "BoundingBox":
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"corner-form box must have x0 < x1 and y0 < y1, got {(x0, y0, x1, y1)}")
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)


@dataclass
class BuildingInstance:
    """An outer ring plus any interior hole rings; standalone inner outlines
    are carried as instances of class_tag "inner" before grouping."""

    outer: Polygon
    holes: list = field(default_factory=list)
    class_tag: str = "outer"


def shoelace_area(poly: Polygon) -> float:
    """Signed area of the ring; positive means counter-clockwise."""
    v = poly.verts
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def perimeter(poly: Polygon) -> float:
    v = poly.verts
    return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())


def polygon_centroid(poly: Polygon) -> np.ndarray:
    """Area-weighted centroid of the ring."""
    v = poly.verts
    nxt = np.roll(v, -1, axis=0)
    cross = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
    a = cross.sum() / 2.0
    if a == 0.0:
        return v.mean(axis=0)
    cx = np.sum((v[:, 0] + nxt[:, 0]) * cross) / (6.0 * a)
    cy = np.sum((v[:, 1] + nxt[:, 1]) * cross) / (6.0 * a)
    return np.array([cx, cy])


def canonicalize(poly: Polygon, ccw: bool = True) -> Polygon:
    """Fix orientation and roll the ring to start at the topmost-then-leftmost vertex."""
    area = shoelace_area(poly)
    if area == 0.0:
        raise DegeneratePolygonError("cannot orient a zero-area ring")
    v = poly.verts
    if (area > 0) != ccw:
        v = v[::-1]
    start = np.lexsort((v[:, 0], v[:, 1]))[0]
    return Polygon(np.roll(v, -start, axis=0))


def _walk_ring(verts: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Sample m points at arc-length spacing perimeter/m starting at verts[0].

    Returns (points (m, 2), arc positions (m,), perimeter).
    """
    closed = np.vstack([verts, verts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    t = np.arange(m) * (total / m)
    x = np.interp(t, cum, closed[:, 0])
    y = np.interp(t, cum, closed[:, 1])
    return np.stack([x, y], axis=1), t, total


def resample_uniform(poly: Polygon, m: int) -> LabeledPolygon:
    """Resample a ring to exactly m vertices by uniform arc-length walking, then
    snap every reference corner onto its nearest sampled vertex.

    The ring is canonicalized first (counter-clockwise, start at the
    topmost-then-leftmost vertex) so the output ordering is deterministic.
    Corners are labeled 1, remaining sampled fillers 0.  Nearest is measured
    along the contour; ties go to the earlier sample in walk order, and a
    corner whose nearest sample is already claimed takes the nearest free one.
    """
    canon = canonicalize(poly)
    n_corners = len(canon)
    if m < n_corners:
        raise CapacityError(f"m={m} cannot hold {n_corners} reference corners")
    points, t, total = _walk_ring(canon.verts, m)
    closed = np.vstack([canon.verts, canon.verts[:1]])
    corner_arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])[:-1]

    out = points.copy()
    labels = np.zeros(m, dtype=np.int64)
    taken = np.zeros(m, dtype=bool)
    for i in range(n_corners):
        d = np.abs(t - corner_arc[i])
        d = np.minimum(d, total - d)
        order = np.lexsort((np.arange(m), d))  # distance first, then walk order
        j = next(idx for idx in order if not taken[idx])
        taken[j] = True
        out[j] = canon.verts[i]
        labels[j] = 1
    return LabeledPolygon(out, labels)


def _point_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point in pts (P, 2) to the segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(pts - a, axis=1)
    tt = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
    proj = a + tt[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def _dp_chain(verts: np.ndarray, i0: int, i1: int, tol: float, keep: np.ndarray):
    """Recursive split of the open chain verts[i0..i1]; marks retained indices."""
    if i1 - i0 < 2:
        return
    interior = verts[i0 + 1:i1]
    d = _point_segment_distance(interior, verts[i0], verts[i1])
    k = int(np.argmax(d))
    if d[k] >= tol:
        idx = i0 + 1 + k
        keep[idx] = True
        _dp_chain(verts, i0, idx, tol, keep)
        _dp_chain(verts, idx, i1, tol, keep)


def douglas_peucker(poly: Polygon, tolerance: float) -> Polygon:
    """Ring simplification by recursive max-perpendicular-distance splitting.

    The closed ring is split at vertex 0 and the vertex farthest from it, and
    each open chain is simplified independently.  A vertex deviating by
    exactly the tolerance is retained; every removed vertex lies strictly
    within tolerance of the retained chain.
    """
    v = poly.verts
    n = v.shape[0]
    far = int(np.argmax(np.linalg.norm(v - v[0], axis=1)))
    rolled = np.vstack([v, v[:1]])  # close the ring for the second chain
    keep = np.zeros(n + 1, dtype=bool)
    keep[[0, far, n]] = True
    _dp_chain(rolled, 0, far, tolerance, keep)
    _dp_chain(rolled, far, n, tolerance, keep)
    kept = rolled[np.flatnonzero(keep[:n])]
    if kept.shape[0] < 3:
        raise DegeneratePolygonError("simplification collapsed the ring below 3 vertices")
    return Polygon(kept)


def edge_angles_deg(poly: Polygon) -> np.ndarray:
    """Non-reflex angle in (0, 180] at each vertex, between the edges to its neighbours."""
    v = poly.verts
    a = np.roll(v, 1, axis=0) - v
    b = np.roll(v, -1, axis=0) - v
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    cos = np.clip(np.sum(a * b, axis=1) / (na * nb), -1.0, 1.0)
    return np.degrees(np.arccos(cos))


def merge_near_straight_edges(poly: Polygon, low_deg: float = 10.0, high_deg: float = 160.0) -> Polygon:
    """Iteratively drop spike (angle < low_deg) and near-collinear (angle > high_deg)
    vertices until no vertex violates the thresholds.

    One vertex is removed per pass (the first offender in ring order) so that
    its neighbours are re-evaluated before any further removal.
    """
    verts = poly.verts
    while True:
        if verts.shape[0] < 3:
            raise DegeneratePolygonError("edge merging collapsed the ring below 3 vertices")
        current = Polygon(verts)
        ang = edge_angles_deg(current)
        bad = np.flatnonzero((ang < low_deg) | (ang > high_deg))
        if bad.size == 0:
            return current
        verts = np.delete(verts, bad[0], axis=0)


def filter_valid(polys: list) -> list:
    """Keep polygons with more than 3 vertices and absolute area above 10 px^2."""
    return [p for p in polys if len(p) > 3 and abs(shoelace_area(p)) > 10.0]


def points_in_polygon(pts: np.ndarray, poly: Polygon) -> np.ndarray:
    """Even-odd (crossing number) membership test for an array of points (P, 2)."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(pts.shape[0], dtype=bool)
    v = poly.verts
    nxt = np.roll(v, -1, axis=0)
    for (x1, y1), (x2, y2) in zip(v, nxt):
        crosses = (y1 <= y) != (y2 <= y)
        if not np.any(crosses):
            continue
        xi = x1 + (y[crosses] - y1) * (x2 - x1) / (y2 - y1)
        hit = np.zeros_like(inside)
        hit[crosses] = x[crosses] < xi
        inside ^= hit
    return inside


def point_in_polygon(pt, poly: Polygon) -> bool:
    return bool(points_in_polygon(np.asarray([pt], dtype=np.float64), poly)[0])


def group_holes(outers: list, inners: list) -> list:
    """Attach each inner ring to the smallest-area outer ring that contains its
    centroid and at least 90% of its vertices; inner rings with no such outer
    are discarded.  Returns one BuildingInstance per outer ring."""
    instances = [BuildingInstance(outer=canonicalize(o), holes=[], class_tag="outer") for o in outers]
    areas = [abs(shoelace_area(inst.outer)) for inst in instances]
    for ring in inners:
        c = polygon_centroid(ring)
        best = None
        for k, inst in enumerate(instances):
            if not point_in_polygon(c, inst.outer):
                continue
            frac = points_in_polygon(ring.verts, inst.outer).mean()
            if frac < 0.9:
                continue
            if best is None or areas[k] < areas[best]:
                best = k
        if best is not None:
            instances[best].holes.append(canonicalize(ring, ccw=False))
    return instances


def rasterize_rings(rings: list, height: int, width: int) -> np.ndarray:
    """Even-odd fill of a ring collection over pixel centers; returns uint8 HxW."""
    cy = np.arange(height, dtype=np.float64)[:, None] + 0.5
    cx = np.arange(width, dtype=np.float64)[None, :] + 0.5
    inside = np.zeros((height, width), dtype=bool)
    for ring in rings:
        v = ring.verts
        nxt = np.roll(v, -1, axis=0)
        for (x1, y1), (x2, y2) in zip(v, nxt):
            crosses = (y1 <= cy) != (y2 <= cy)  # (H, 1)
            if not np.any(crosses):
                continue
            xi = x1 + (cy - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (cx < xi)
    return inside.astype(np.uint8)


def rasterize_polygon(poly: Polygon, height: int, width: int) -> np.ndarray:
    return rasterize_rings([poly], height, width)


def rasterize(instance: BuildingInstance, height: int, width: int) -> np.ndarray:
    """Filled outer ring minus filled hole rings (even-odd, pixel centers)."""
    return rasterize_rings([instance.outer] + list(instance.holes), height, width)


def sample_box_contour(box: BoundingBox, m: int) -> np.ndarray:
    """m vertices at uniform arc-length spacing along the box contour, starting
    at the top-left corner and walking counter-clockwise (positive shoelace).

    Returns the raw (m, 2) vertex array; proposal machinery consumes these as
    coordinate tensors, and m below 3 (a degenerate ring) is permitted.
    """
    if m < 1:
        raise ValueError("need at least one sample")
    x0, y0, x1, y1 = box.to_xyxy()
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    pts, _, _ = _walk_ring(corners, m)
    return pts


def ring_to_flat(poly: Polygon) -> list:
    """COCO-style flat coordinate list [x1, y1, x2, y2, ...]."""
    return [float(c) for c in poly.verts.reshape(-1)]


def ring_from_flat(flat: list) -> Polygon:
    if len(flat) % 2 != 0:
        raise ValueError(f"flat coordinate list must pair up, got length {len(flat)}")
    return Polygon(np.asarray(flat, dtype=np.float64).reshape(-1, 2))


def mask_to_rle(mask: np.ndarray) -> dict:
    """Uncompressed COCO run-length encoding (column-major, starting with zeros)."""
    flat = np.asarray(mask, dtype=np.uint8).flatten(order="F")
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0] == 1:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def rle_to_mask(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    flat = np.zeros(h * w, dtype=np.uint8)
    pos = 0
    val = 0
    for run in rle["counts"]:
        if val:
            flat[pos:pos + run] = 1
        pos += run
        val ^= 1
    return flat.reshape((h, w), order="F")


def write_mask_png(mask: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray((np.asarray(mask, dtype=np.uint8) * 255)).save(path)


def read_mask_png(path) -> np.ndarray:
    from PIL import Image

    arr = np.asarray(Image.open(path).convert("L"))
    return (arr > 127).astype(np.uint8)
