from .config import ModelConfig
from .backbone import TinyPyramid
from .blocks import DynamicInteraction, MLPHead, PredictionHeads, SelfAttention, VertexProposalEncoder
from .network import (PolygonDetector, ProposalSet, ScoredPolygon, Stage, StageOutput,
                      init_proposals, postprocess)
from .roi import assign_levels, roi_align
