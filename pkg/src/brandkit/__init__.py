"""brandkit: brand/logo recognition toolkit.

Box geometry with anchor refinement, stage losses with analytic gradients,
soft-mask attention pooling, class-agnostic weight transfer, deterministic
instance embeddings, an IVF-PQ retrieval index, and COCO-style mAP
evaluation, plus dataset tooling and an end-to-end pipeline.
"""

from . import ann, attention, dataset, embedder, evaluation, geometry, images, losses
from . import pipeline, synth, transfer
from .errors import BrandkitError, DataFormatError, IndexFormatError

__version__ = "0.1.0"

__all__ = [
    "ann",
    "attention",
    "dataset",
    "embedder",
    "evaluation",
    "geometry",
    "images",
    "losses",
    "pipeline",
    "synth",
    "transfer",
    "BrandkitError",
    "DataFormatError",
    "IndexFormatError",
    "__version__",
]
