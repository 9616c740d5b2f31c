"""Budgeted annotation-region selection for whole-slide images.

Builds per-slide similarity maps from patch embeddings and class prototype
embeddings (mined from image-caption corpora), then selects annotation
regions with one of four strategies: random, diversity, sliding-window
(standard) or threshold-adaptive prototype selection.
"""

__version__ = "0.1.0"

from slideselect.errors import (
    SlideSelectError,
    FormatError,
    BadMagicError,
    VersionMismatchError,
    TruncatedPayloadError,
    DimensionOverflowError,
    CaptionFormatError,
    DuplicateIdError,
    ValidationError,
)
from slideselect.container import (
    EmbeddingContainer,
    GridMeta,
    CaptionRecord,
    Region,
    BinaryMask,
    read_container,
    write_container,
    read_captions,
    write_captions,
    read_regions,
    write_regions,
    read_mask,
    write_mask,
)
from slideselect.prototypes import (
    PrototypeSet,
    l2_normalize,
    cosine_similarity,
    top_k_retrieval,
    build_prototype_set,
)
from slideselect.simmap import SimilarityMap, build_similarity_map, integral_image
from slideselect.selection import SelectionConfig, select_standard, select_adaptive
from slideselect.estimators import PrototypeSimilarity, RegionSelector

__all__ = [
    "SlideSelectError",
    "FormatError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedPayloadError",
    "DimensionOverflowError",
    "CaptionFormatError",
    "DuplicateIdError",
    "ValidationError",
    "EmbeddingContainer",
    "GridMeta",
    "CaptionRecord",
    "Region",
    "BinaryMask",
    "read_container",
    "write_container",
    "read_captions",
    "write_captions",
    "read_regions",
    "write_regions",
    "read_mask",
    "write_mask",
    "PrototypeSet",
    "l2_normalize",
    "cosine_similarity",
    "top_k_retrieval",
    "build_prototype_set",
    "SimilarityMap",
    "build_similarity_map",
    "integral_image",
    "SelectionConfig",
    "select_standard",
    "select_adaptive",
    "PrototypeSimilarity",
    "RegionSelector",
]
