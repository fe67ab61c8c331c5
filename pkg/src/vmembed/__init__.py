"""vmembed: content-based bidirectional video--music retrieval.

Audio/video feature pipelines, a two-branch embedding network trained
with a bidirectional ranking loss plus soft intra-modal structure
constraints, and exact cosine retrieval with Recall@K evaluation.
"""

from . import (audio_features, datatypes, dsp, errors, evaluation, formats,
               kernels, losses, network, training, video_pipeline)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["audio_features", "datatypes", "dsp", "errors", "evaluation",
           "formats", "kernels", "losses", "network", "training",
           "video_pipeline", "BACKEND", "__version__"]
