"""Real-time zero-shot voice conversion through an articulatory feature
space: streaming feature extraction, causal conv inference, DDSP vocoding."""

__version__ = "0.1.0"

from .frontend import CHUNK_SAMPLES, FrameSpec
from .runtime import PipelineConfig, Session, build_models, convert_offline

__all__ = [
    "CHUNK_SAMPLES",
    "FrameSpec",
    "PipelineConfig",
    "Session",
    "build_models",
    "convert_offline",
    "__version__",
]
