"""Aggregate metric report: the instance AP/AR family, boundary variants,
vertex-level polygon quality and semantic segmentation scores."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..geometry import group_holes, rasterize, rasterize_polygon
from .cocoeval import Detection, GroundTruthInstance, coco_eval
from .masks import mask_iou
from .polygon import n_ratio, pair_by_iou, polis

OUTER_CATEGORY = 1
INNER_CATEGORY = 2


@dataclass
class MetricReport:
    ap: float | None = None
    ap50: float | None = None
    ap75: float | None = None
    ap_small: float | None = None
    ap_medium: float | None = None
    ap_large: float | None = None
    ar: float | None = None
    ar50: float | None = None
    ar75: float | None = None
    ap_boundary: float | None = None
    ar_boundary: float | None = None
    polis: float | None = None
    n_ratio: float | None = None
    semantic_iou: float | None = None
    pixel_accuracy: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        """Aligned two-line table with the usual column names."""
        cols = [("AP", self.ap), ("AP50", self.ap50), ("AP75", self.ap75),
                ("AP_S", self.ap_small), ("AP_M", self.ap_medium), ("AP_L", self.ap_large),
                ("AR", self.ar), ("AR50", self.ar50), ("AR75", self.ar75),
                ("AP_bd", self.ap_boundary), ("AR_bd", self.ar_boundary),
                ("IoU", self.semantic_iou), ("Acc", self.pixel_accuracy),
                ("PoLiS", self.polis), ("N_ratio", self.n_ratio)]
        cells = [(name, "-" if v is None else f"{v:.4f}") for name, v in cols]
        widths = [max(len(a), len(b)) for a, b in cells]
        head = "  ".join(name.rjust(w) for (name, _), w in zip(cells, widths))
        vals = "  ".join(val.rjust(w) for (_, val), w in zip(cells, widths))
        return head + "\n" + vals


def semantic_mask(records: list, height: int, width: int) -> np.ndarray:
    """Union of hole-grouped instances: outer rings filled, inner rings cut."""
    outers = [r.polygon for r in records if r.category_id == OUTER_CATEGORY]
    inners = [r.polygon for r in records if r.category_id == INNER_CATEGORY]
    mask = np.zeros((height, width), dtype=np.uint8)
    for inst in group_holes(outers, inners):
        mask |= rasterize(inst, height, width)
    return mask


def build_report(detections: list, ground_truths: list, image_sizes: dict,
                 d_frac: float = 0.02) -> MetricReport:
    main = coco_eval(detections, ground_truths, image_sizes, iou_kind="mask")
    boundary = coco_eval(detections, ground_truths, image_sizes,
                         iou_kind="boundary", d_frac=d_frac)

    # vertex-level metrics over IoU-paired polygons, per image and category
    polis_vals = []
    det_counts = []
    gt_counts = []
    by_cell_dt = {}
    by_cell_gt = {}
    for d in detections:
        by_cell_dt.setdefault((d.image_id, d.category_id), []).append(d)
    for g in ground_truths:
        by_cell_gt.setdefault((g.image_id, g.category_id), []).append(g)
    for cell, gts in by_cell_gt.items():
        dts = by_cell_dt.get(cell, [])
        if not dts:
            continue
        h, w = image_sizes[cell[0]]
        gm = [rasterize_polygon(g.polygon, h, w) for g in gts]
        dm = [rasterize_polygon(d.polygon, h, w) for d in dts]
        for gi, di in pair_by_iou(gm, dm, mask_iou):
            polis_vals.append(polis(gts[gi].polygon, dts[di].polygon))
            gt_counts.append(len(gts[gi].polygon))
            det_counts.append(len(dts[di].polygon))

    inter = union = correct = total = 0
    for img, (h, w) in image_sizes.items():
        gt_mask = semantic_mask([g for g in ground_truths if g.image_id == img], h, w)
        dt_mask = semantic_mask([d for d in detections if d.image_id == img], h, w)
        inter += int(np.logical_and(gt_mask, dt_mask).sum())
        union += int(np.logical_or(gt_mask, dt_mask).sum())
        correct += int((gt_mask == dt_mask).sum())
        total += gt_mask.size

    return MetricReport(
        ap=main["ap"], ap50=main["ap50"], ap75=main["ap75"],
        ap_small=main["ap_small"], ap_medium=main["ap_medium"], ap_large=main["ap_large"],
        ar=main["ar"], ar50=main["ar50"], ar75=main["ar75"],
        ap_boundary=boundary["ap"], ar_boundary=boundary["ar"],
        polis=float(np.mean(polis_vals)) if polis_vals else None,
        n_ratio=n_ratio(det_counts, gt_counts),
        semantic_iou=(1.0 if union == 0 else inter / union) if total else None,
        pixel_accuracy=correct / total if total else None,
    )
