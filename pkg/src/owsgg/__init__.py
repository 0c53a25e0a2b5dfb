"""Training-free open-world scene-graph generation pipeline and evaluation harness."""

__version__ = "0.1.0"

from .config import PipelineConfig
from .core import (
    BoundingBox,
    GroundTruthGraph,
    ImageRef,
    ObjectInstance,
    TripletPrediction,
    VocabularyProfile,
    clamp_box,
    iou,
)

__all__ = [
    "PipelineConfig",
    "BoundingBox",
    "GroundTruthGraph",
    "ImageRef",
    "ObjectInstance",
    "TripletPrediction",
    "VocabularyProfile",
    "clamp_box",
    "iou",
    "__version__",
]
