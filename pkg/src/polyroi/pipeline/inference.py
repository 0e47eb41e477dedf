"""Inference: batch forward, postprocessing, and COCO results assembly."""

from __future__ import annotations

import torch

from ..metrics.cocoeval import Detection
from ..model import PolygonDetector
from ..model.network import postprocess
from .cocoio import CATEGORY_BY_TAG
from .training import images_to_tensor


def infer(model: PolygonDetector, images: dict, score_thresh: float = 0.5,
          vertex_thresh: float = 0.5, hole_aware: bool = False,
          batch_size: int = 8) -> tuple:
    """Run the detector over images (id -> HxWx3 uint8 array).

    Returns (detections, instances_by_image): flat Detection records for the
    metric suite plus, per image, the hole-grouped building instances.
    """
    model.eval()
    ids = sorted(images)
    detections = []
    instances_by_image = {}
    with torch.no_grad():
        for start in range(0, len(ids), batch_size):
            chunk = ids[start:start + batch_size]
            batch = images_to_tensor([images[i] for i in chunk], model.dtype)
            outputs = model(batch)
            h, w = batch.shape[-2:]
            results = postprocess(outputs[-1], (h, w), score_thresh=score_thresh,
                                  vertex_thresh=vertex_thresh, hole_aware=hole_aware)
            for img_id, (scored, instances) in zip(chunk, results):
                instances_by_image[img_id] = instances
                for s in scored:
                    detections.append(Detection(polygon=s.polygon, score=s.score,
                                                image_id=img_id,
                                                category_id=CATEGORY_BY_TAG[s.category]))
    return detections, instances_by_image
