"""Class prototype embedding sets and exact cosine top-k retrieval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from slideselect.errors import ValidationError

NORM_TOL = 1e-4


@dataclass
class PrototypeSet:
    class_name: str
    embeddings: np.ndarray  # (n_prototypes, dim), rows unit-norm
    source_ids: list

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] < 1:
            raise ValidationError("prototype set needs at least one embedding row")
        norms = np.linalg.norm(self.embeddings, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise ValidationError("prototype rows must be unit-norm")
        if len(self.source_ids) != self.embeddings.shape[0]:
            raise ValidationError("source_ids length must match prototype count")

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]


def l2_normalize(v):
    """Unit-norm copy of v; zero vectors are rejected."""
    v = np.asarray(v, dtype=np.float64)
    if not np.isfinite(v).all():
        raise ValidationError("cannot normalize non-finite vector")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValidationError("cannot normalize zero vector")
    return v / norm


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity undefined for zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def top_k_retrieval(query, database, k: int):
    """Exact top-k rows of `database` by cosine similarity to `query`.

    Returns [(index, score), ...] with scores non-increasing; ties broken
    by ascending database index so results are deterministic.
    """
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    database = np.asarray(database, dtype=np.float64)
    if database.ndim != 2 or database.shape[0] == 0:
        raise ValidationError("database must be a non-empty 2-D matrix")
    if k < 1 or k > database.shape[0]:
        raise ValidationError(f"k={k} out of range for {database.shape[0]} rows")
    if database.shape[1] != query.shape[0]:
        raise ValidationError("query dimension does not match database")
    qn = np.linalg.norm(query)
    if qn == 0.0:
        raise ValidationError("zero query vector")
    row_norms = np.linalg.norm(database, axis=1)
    if np.any(row_norms == 0.0):
        raise ValidationError("database contains zero rows")
    scores = database @ query / (row_norms * qn)
    # stable sort on -score keeps ascending index within ties
    order = np.argsort(-scores, kind="stable")[:k]
    return [(int(i), float(scores[i])) for i in order]


def build_prototype_set(class_name: str, embeddings, source_ids) -> PrototypeSet:
    """Normalize raw embeddings into a PrototypeSet; duplicates are kept."""
    try:
        embeddings = np.asarray(embeddings, dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"embedding rows disagree in dimension: {exc}") from exc
    if embeddings.ndim != 2 or embeddings.shape[0] == 0:
        raise ValidationError("embeddings must be a non-empty 2-D matrix")
    if not np.isfinite(embeddings).all():
        raise ValidationError("embeddings contain non-finite values")
    norms = np.linalg.norm(embeddings, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError("embeddings contain zero rows")
    normalized = embeddings / norms[:, None]
    return PrototypeSet(class_name=class_name, embeddings=normalized, source_ids=list(source_ids))
