"""Per-slide similarity maps from patch embedding grids and prototypes.

Each grid cell holds max-over-prototypes cosine similarity of the patch
embedding, clamped below at 0 so the map lives in [0, 1]. Cells with zero
embeddings or outside the tissue mask are excluded and carry value 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from slideselect.container import (
    BinaryMask,
    EmbeddingContainer,
    GridMeta,
    check_grid_pair,
    read_container,
    write_container,
    write_pgm,
    read_pgm,
)
from slideselect.errors import FormatError, ValidationError
from slideselect.prototypes import PrototypeSet


@dataclass
class SimilarityMap:
    wsi_id: str
    values: np.ndarray  # (grid_h, grid_w) float64 in [0, 1]
    excluded: np.ndarray  # (grid_h, grid_w) bool
    meta: GridMeta | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.excluded = np.asarray(self.excluded, dtype=bool)
        if self.values.shape != self.excluded.shape or self.values.ndim != 2:
            raise ValidationError("values and excluded must share one 2-D shape")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValidationError("map values must lie in [0, 1]")
        if np.any(self.values[self.excluded] != 0.0):
            raise ValidationError("excluded cells must carry value 0")
        if self.meta is not None and (
            self.values.shape != (self.meta.grid_h, self.meta.grid_w)
        ):
            raise ValidationError("map shape does not match grid metadata")

    @property
    def grid_h(self) -> int:
        return self.values.shape[0]

    @property
    def grid_w(self) -> int:
        return self.values.shape[1]


def patch_similarity(f_x, prototypes: PrototypeSet) -> float:
    """Max cosine similarity to any prototype, clamped to [0, 1]."""
    f_x = np.asarray(f_x, dtype=np.float64)
    norm = np.linalg.norm(f_x)
    if norm == 0.0:
        raise ValidationError("zero patch embedding has no similarity")
    scores = prototypes.embeddings @ (f_x / norm)
    return float(np.clip(scores.max(), 0.0, 1.0))


def build_similarity_map(
    container: EmbeddingContainer,
    meta: GridMeta,
    prototypes: PrototypeSet,
    tissue_mask: BinaryMask | None = None,
) -> SimilarityMap:
    check_grid_pair(container, meta)
    emb = container.values.astype(np.float64)
    norms = np.linalg.norm(emb, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    scores = (emb / safe[:, None]) @ prototypes.embeddings.T
    values = np.clip(scores.max(axis=1), 0.0, 1.0)
    values[zero] = 0.0
    values = values.reshape(meta.grid_h, meta.grid_w)
    excluded = zero.reshape(meta.grid_h, meta.grid_w).copy()

    if tissue_mask is not None:
        gy = np.arange(meta.grid_h)
        gx = np.arange(meta.grid_w)
        # sample the mask at each cell center
        my = (((gy + 0.5) * meta.stride_px) / tissue_mask.scale_to_level0).astype(int)
        mx = (((gx + 0.5) * meta.stride_px) / tissue_mask.scale_to_level0).astype(int)
        my = np.clip(my, 0, tissue_mask.height - 1)
        mx = np.clip(mx, 0, tissue_mask.width - 1)
        outside = ~tissue_mask.bits[np.ix_(my, mx)]
        excluded |= outside
        values[excluded] = 0.0

    return SimilarityMap(wsi_id=meta.wsi_id, values=values, excluded=excluded, meta=meta)


def integral_image(map_or_values) -> np.ndarray:
    """Zero-padded summed-area table in float64.

    sat[i+1, j+1] is the inclusive sum over rows 0..i, cols 0..j; window
    sums come from the usual four-corner formula via window_sum().
    """
    values = map_or_values.values if isinstance(map_or_values, SimilarityMap) else map_or_values
    values = np.asarray(values, dtype=np.float64)
    sat = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(values, axis=0), axis=1, out=sat[1:, 1:])
    return sat


def window_sum(sat: np.ndarray, y0: int, x0: int, y1: int, x1: int) -> float:
    """Sum over the inclusive cell rectangle [y0..y1] x [x0..x1]."""
    return float(sat[y1 + 1, x1 + 1] - sat[y0, x1 + 1] - sat[y1 + 1, x0] + sat[y0, x0])


# ---------------------------------------------------------------------------
# Map files: container payload + "<path>.map.json" sidecar + excluded bitmap


def _map_sidecar(path) -> Path:
    return Path(str(path) + ".map.json")


def _excluded_path(path) -> Path:
    return Path(str(path) + ".excluded.pgm")


def write_map(smap: SimilarityMap, path) -> None:
    write_container(smap.values.astype(np.float32), False, path)
    _map_sidecar(path).write_text(
        json.dumps({"wsi_id": smap.wsi_id, "grid_h": smap.grid_h, "grid_w": smap.grid_w}) + "\n"
    )
    write_pgm(smap.excluded.astype(np.uint8) * 255, _excluded_path(path))


def read_map(path, meta: GridMeta | None = None) -> SimilarityMap:
    container = read_container(path)
    sidecar = _map_sidecar(path)
    if not sidecar.exists():
        raise FormatError(f"{path}: missing sidecar {sidecar.name}")
    info = json.loads(sidecar.read_text())
    h, w = int(info["grid_h"]), int(info["grid_w"])
    if container.values.shape != (h, w):
        raise FormatError(f"{path}: payload shape {container.values.shape} != sidecar {h}x{w}")
    ex_path = _excluded_path(path)
    excluded = read_pgm(ex_path) > 0 if ex_path.exists() else np.zeros((h, w), dtype=bool)
    values = container.values.astype(np.float64)
    values[excluded] = 0.0
    return SimilarityMap(wsi_id=str(info["wsi_id"]), values=values, excluded=excluded, meta=meta)


def render_map(smap: SimilarityMap, path) -> None:
    """8-bit visualization: value * 255 per cell."""
    write_pgm(np.round(smap.values * 255.0), path)
