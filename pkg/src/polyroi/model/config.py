"""Model hyperparameter container."""

from __future__ import annotations

from dataclasses import dataclass, asdict, field


@dataclass(frozen=True)
class ModelConfig:
    """Architecture settings for the iterative polygon detector.

    channels is the shared feature dimension of the pyramid, the vertex
    proposal features and the object features.  The two *_enabled flags are
    the ablation switches: disabling vertex_proposal_feature swaps the
    coordinate FFN for a table of learned free vectors, and disabling
    self_attention turns the object-feature attention block into identity.
    """

    n_proposals: int = 100
    m_vertices: int = 96
    channels: int = 256
    num_stages: int = 6
    roi_size: int = 7
    ffn_hidden: int = 0          # 0 means 2 * channels
    attention_heads: int = 8
    dyn_channels: int = 0        # 0 means channels // 4
    num_classes: int = 1
    self_attention_enabled: bool = True
    vertex_proposal_feature_enabled: bool = True
    carry_object_features: bool = False
    backbone_channels: tuple = ()  # () derives a ramp ending at `channels`
    proposal_init_jitter: float = 0.02
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.channels % self.attention_heads != 0:
            raise ValueError(f"channels ({self.channels}) must be divisible by "
                             f"attention_heads ({self.attention_heads})")
        if self.num_stages < 1 or self.n_proposals < 1 or self.m_vertices < 3:
            raise ValueError("need at least 1 stage, 1 proposal and 3 polygon vertices")
        if isinstance(self.backbone_channels, list):
            object.__setattr__(self, "backbone_channels", tuple(self.backbone_channels))

    @property
    def hidden_dim(self) -> int:
        return self.ffn_hidden if self.ffn_hidden else 2 * self.channels

    @property
    def dyn_dim(self) -> int:
        return self.dyn_channels if self.dyn_channels else max(self.channels // 4, 1)

    @property
    def pyramid_channels(self) -> tuple:
        if self.backbone_channels:
            return self.backbone_channels
        c = self.channels
        return (max(c // 4, 8), max(c // 2, 8), max(3 * c // 4, 8), c)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone_channels"] = list(self.backbone_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["backbone_channels"] = tuple(d.get("backbone_channels", ()))
        return cls(**d)
