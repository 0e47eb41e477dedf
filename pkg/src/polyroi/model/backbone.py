"""Tiny strided convolutional feature pyramid.

Stand-in for a pretrained backbone: four downsampling stages produce maps at
strides 4, 8, 16 and 32, merged top-down through 1x1 laterals so every level
shares the model channel count.  Any externally computed pyramid with the
same level/shape layout can be fed to the detector instead.
"""

from __future__ import annotations

import torch
from torch import nn


class TinyPyramid(nn.Module):
    LEVELS = (2, 3, 4, 5)  # strides 4, 8, 16, 32

    def __init__(self, out_channels: int, stage_channels: tuple):
        super().__init__()
        c1, c2, c3, c4 = stage_channels
        self.stem = nn.Sequential(
            nn.Conv2d(3, c1, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(c1, c1, 3, stride=2, padding=1), nn.GELU(),
        )
        self.down3 = nn.Sequential(nn.Conv2d(c1, c2, 3, stride=2, padding=1), nn.GELU())
        self.down4 = nn.Sequential(nn.Conv2d(c2, c3, 3, stride=2, padding=1), nn.GELU())
        self.down5 = nn.Sequential(nn.Conv2d(c3, c4, 3, stride=2, padding=1), nn.GELU())
        self.laterals = nn.ModuleList(
            [nn.Conv2d(c, out_channels, 1) for c in (c1, c2, c3, c4)])

    def forward(self, images: torch.Tensor) -> dict:
        """images: (B, 3, H, W) with H and W divisible by 32 -> {level: (B, C, H/2^l, W/2^l)}."""
        h, w = images.shape[-2:]
        if h % 32 != 0 or w % 32 != 0:
            raise ValueError(f"input size {h}x{w} must be divisible by 32; pad the image first")
        f2 = self.stem(images)
        f3 = self.down3(f2)
        f4 = self.down4(f3)
        f5 = self.down5(f4)
        p5 = self.laterals[3](f5)
        p4 = self.laterals[2](f4) + nn.functional.interpolate(p5, scale_factor=2, mode="nearest")
        p3 = self.laterals[1](f3) + nn.functional.interpolate(p4, scale_factor=2, mode="nearest")
        p2 = self.laterals[0](f2) + nn.functional.interpolate(p3, scale_factor=2, mode="nearest")
        return {2: p2, 3: p3, 4: p4, 5: p5}
