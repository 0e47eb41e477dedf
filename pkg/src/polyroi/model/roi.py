"""RoI feature pooling over the feature pyramid.

Bilinear sampling at one point per output bin (the bin center), with the
half-pixel alignment convention: the feature value at index i sits at
continuous coordinate i + 0.5.  Sampling positions depend smoothly on the box
coordinates, so gradients flow into both the pyramid and the boxes.
"""

from __future__ import annotations

import torch


def assign_levels(boxes: torch.Tensor, image_hw: tuple, lo: int = 2, hi: int = 5) -> torch.Tensor:
    """Pyramid level per box: clamp(floor(4 + log2(sqrt(w*h)/224)), lo, hi).

    boxes: (..., 4) normalized (cx, cy, w, h); w, h are converted to pixels.
    """
    h, w = image_hw
    wh = (boxes[..., 2] * w) * (boxes[..., 3] * h)
    scale = torch.sqrt(wh.clamp(min=1e-12))
    lvl = torch.floor(4 + torch.log2(scale / 224.0))
    return lvl.clamp(lo, hi).long()


def _bilinear_gather(fmaps: torch.Tensor, img_idx: torch.Tensor,
                     px: torch.Tensor, py: torch.Tensor) -> torch.Tensor:
    """Sample fmaps (B, C, H, W) at positions px, py (P, Q) of images img_idx (P,).

    Returns (P, Q, C); replicate padding at the map border.
    """
    b, c, h, w = fmaps.shape
    flat = fmaps.permute(0, 2, 3, 1).reshape(b * h * w, c)
    u = px - 0.5
    v = py - 0.5
    u0 = torch.floor(u)
    v0 = torch.floor(v)
    du = (u - u0).unsqueeze(-1)
    dv = (v - v0).unsqueeze(-1)
    u0 = u0.long()
    v0 = v0.long()
    base = img_idx[:, None] * (h * w)

    def grab(ix, iy):
        ix = ix.clamp(0, w - 1)
        iy = iy.clamp(0, h - 1)
        return flat[(base + iy * w + ix).reshape(-1)].reshape(px.shape[0], px.shape[1], c)

    f00 = grab(u0, v0)
    f10 = grab(u0 + 1, v0)
    f01 = grab(u0, v0 + 1)
    f11 = grab(u0 + 1, v0 + 1)
    return (f00 * (1 - du) * (1 - dv) + f10 * du * (1 - dv)
            + f01 * (1 - du) * dv + f11 * du * dv)


def roi_align(pyramid: dict, boxes: torch.Tensor, roi_size: int, image_hw: tuple) -> torch.Tensor:
    """Pool an (S, S) feature patch for every box.

    pyramid: {level: (B, C, H_l, W_l)}; boxes: (B, N, 4) normalized cxcywh.
    Returns (B, N, C, S, S); each box is pooled from its assigned level.
    """
    bsz, n = boxes.shape[:2]
    some = next(iter(pyramid.values()))
    c = some.shape[1]
    s = roi_size
    levels = assign_levels(boxes, image_hw)
    out = some.new_zeros((bsz, n, c, s, s))

    steps = (torch.arange(s, dtype=some.dtype, device=boxes.device) + 0.5) / s
    x0 = boxes[..., 0] - boxes[..., 2] / 2
    y0 = boxes[..., 1] - boxes[..., 3] / 2

    for lvl, fmaps in pyramid.items():
        sel = levels == lvl
        if not torch.any(sel):
            continue
        hl, wl = fmaps.shape[-2:]
        bi, ni = torch.nonzero(sel, as_tuple=True)
        px = (x0[bi, ni, None] + boxes[bi, ni, None, 2] * steps[None, :]) * wl  # (P, S)
        py = (y0[bi, ni, None] + boxes[bi, ni, None, 3] * steps[None, :]) * hl
        gx = px[:, None, :].expand(-1, s, -1).reshape(px.shape[0], s * s)  # row-major over (y, x)
        gy = py[:, :, None].expand(-1, -1, s).reshape(py.shape[0], s * s)
        patches = _bilinear_gather(fmaps, bi, gx, gy)            # (P, S*S, C)
        patches = patches.transpose(1, 2).reshape(-1, c, s, s)
        out = out.index_put((bi, ni), patches)
    return out
