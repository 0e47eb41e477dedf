"""Training loop: per-stage Hungarian matching with deep supervision, an
epoch-indexed learning-rate drop schedule, and per-stage loss logging."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..matching import LossWeights, hungarian, matching_cost, total_loss
from ..model import ModelConfig, PolygonDetector
from .cocoio import scenes_to_dataset, write_json_atomic
from .preprocess import preprocess_gt
from .synth import SceneAnnotation


@dataclass
class TrainingConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 2.5e-5
    lr_drop_epochs: tuple = ()   # 1-based epochs; the drop applies from that epoch on
    lr_drop_factor: float = 10.0
    batch_size: int = 16
    epochs: int = 100
    random_flip: bool = False
    weight_decay: float = 0.0
    grad_clip: float = 1.0
    poly_reduction: str = "mean"
    rematch_per_stage: bool = True
    seed: int = 0


def images_to_tensor(images: list, dtype=torch.float32) -> torch.Tensor:
    """uint8 (H, W, 3) images -> (B, 3, H, W) in [-1, 1]."""
    arr = np.stack(images).astype(np.float32) / 127.5 - 1.0
    return torch.tensor(arr, dtype=dtype).permute(0, 3, 1, 2).contiguous()


def flip_scene(scene: SceneAnnotation) -> SceneAnnotation:
    """Horizontal mirror of a scene and its annotations."""
    from .. import geometry

    h, w = scene.image.shape[:2]
    flipped = []
    for inst in scene.instances:
        verts = inst.outer.verts.copy()
        verts[:, 0] = w - verts[:, 0]
        flipped.append(geometry.BuildingInstance(
            outer=geometry.canonicalize(geometry.Polygon(verts)), class_tag=inst.class_tag))
    return SceneAnnotation(image=scene.image[:, ::-1].copy(),
                           instances=flipped, image_id=scene.image_id)


def _targets_to_torch(targets: list, dtype) -> list:
    out = []
    for t in targets:
        out.append({
            "boxes": torch.tensor(t["boxes"], dtype=dtype),
            "polygons": torch.tensor(t["polygons"], dtype=dtype),
            "vertex_labels": torch.tensor(t["vertex_labels"], dtype=torch.long),
            "classes": torch.tensor(t["classes"], dtype=torch.long),
        })
    return out


def _stage_preds(out, b: int) -> dict:
    return {"class_probs": out.class_probs[b], "boxes": out.boxes[b],
            "polygons": out.polygons[b], "vertex_probs": out.vertex_probs[b]}


def compute_losses(outputs: list, target: dict, b: int, weights: LossWeights,
                   poly_reduction: str = "mean", rematch_per_stage: bool = True) -> list:
    """Per-stage loss breakdowns for image b of a batched forward."""
    reused = None
    if not rematch_per_stage:
        final = outputs[-1]
        cost = matching_cost(final.boxes[b], final.class_probs[b],
                             target["boxes"], target["classes"], weights)
        reused = hungarian(cost)
    breakdowns = []
    for out in outputs:
        if rematch_per_stage:
            cost = matching_cost(out.boxes[b], out.class_probs[b],
                                 target["boxes"], target["classes"], weights)
            match = hungarian(cost)
        else:
            match = reused
        breakdowns.append(total_loss(_stage_preds(out, b), target, match, weights,
                                     poly_reduction=poly_reduction))
    return breakdowns


def train(model: PolygonDetector, scenes: list, cfg: TrainingConfig,
          on_epoch_end=None) -> list:
    """Optimize the model on the scenes; returns the per-epoch history.

    Each history record carries the learning rate and, per stage, the mean
    loss breakdown over the epoch's images.  on_epoch_end(epoch, model,
    history) may return truthy to stop early.
    """
    torch.manual_seed(cfg.seed)
    dtype = model.dtype
    variants = [scenes]
    if cfg.random_flip:
        variants.append([flip_scene(s) for s in scenes])
    images = [images_to_tensor([s.image for s in var], dtype) for var in variants]
    targets = [_targets_to_torch(preprocess_gt(scenes_to_dataset(var), cfg.model.m_vertices), dtype)
               for var in variants]

    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    gen = torch.Generator().manual_seed(cfg.seed)
    n = len(scenes)
    n_stages = cfg.model.num_stages
    history = []
    lr = cfg.lr

    for epoch in range(1, cfg.epochs + 1):
        if epoch in cfg.lr_drop_epochs:
            lr = lr / cfg.lr_drop_factor
            for group in opt.param_groups:
                group["lr"] = lr
        model.train()
        perm = torch.randperm(n, generator=gen).tolist()
        sums = [dict() for _ in range(n_stages)]
        total_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if cfg.random_flip:
                pick = torch.randint(0, 2, (len(idx),), generator=gen).tolist()
            else:
                pick = [0] * len(idx)
            batch_imgs = torch.stack([images[v][i] for v, i in zip(pick, idx)])
            outputs = model(batch_imgs)
            batch_loss = batch_imgs.new_zeros(())
            for b, (v, i) in enumerate(zip(pick, idx)):
                breakdowns = compute_losses(outputs, targets[v][i], b, cfg.weights,
                                            cfg.poly_reduction, cfg.rematch_per_stage)
                for s, bd in enumerate(breakdowns):
                    batch_loss = batch_loss + bd.total
                    for key, val in bd.to_record().items():
                        sums[s][key] = sums[s].get(key, 0.0) + val
                total_sum += float(sum(bd.total for bd in breakdowns))
            batch_loss = batch_loss / len(idx)
            opt.zero_grad()
            batch_loss.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
        record = {
            "epoch": epoch,
            "lr": lr,
            "total": total_sum / n,
            "stages": [{k: v / n for k, v in s.items()} for s in sums],
        }
        history.append(record)
        if on_epoch_end is not None and on_epoch_end(epoch, model, history):
            break
    model.eval()
    return history


def save_loss_log(history: list, path) -> None:
    write_json_atomic(history, path)
