from .cocoeval import Detection, GroundTruthInstance, coco_eval
from .masks import boundary_iou, inner_boundary_band, mask_iou, semantic_eval
from .polygon import n_ratio, pair_by_iou, polis
from .report import MetricReport, build_report, semantic_mask
