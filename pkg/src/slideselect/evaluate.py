"""Coverage evaluation of selected regions and the hyperparameter sweep,
plus deterministic synthetic slide fixtures with known ground truth."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from slideselect.container import BinaryMask, GridMeta, Region
from slideselect.errors import ValidationError
from slideselect.prototypes import PrototypeSet, build_prototype_set
from slideselect.rng import stream_for
from slideselect.selection import (
    SelectionConfig,
    select_adaptive,
    select_diversity,
    select_random,
    select_standard,
)
from slideselect.simmap import SimilarityMap, build_similarity_map


@dataclass
class GroundTruth:
    tissue_mask: BinaryMask
    class_mask: BinaryMask | None = None
    points: list | None = None  # [(x_px, y_px), ...]

    def __post_init__(self):
        if self.class_mask is None and self.points is None:
            raise ValidationError("ground truth needs a class mask or points")


@dataclass
class SweepResult:
    strategy: str
    n: int
    l_px: int
    seed: int | str
    annotated_tissue_pct: float
    class_area_pct: float | None = None
    point_capture_ratio: float | None = None


CSV_COLUMNS = (
    "strategy", "n", "l_px", "seed",
    "annotated_tissue_pct", "class_area_pct", "point_capture_ratio",
)


def _cover_array(regions, mask: BinaryMask) -> np.ndarray:
    """Union of regions rasterized at mask resolution, rounded outward."""
    cover = np.zeros_like(mask.bits, dtype=bool)
    s = mask.scale_to_level0
    for reg in regions:
        x0 = max(0, int(math.floor(reg.x_px / s)))
        y0 = max(0, int(math.floor(reg.y_px / s)))
        x1 = min(mask.width, int(math.ceil((reg.x_px + reg.w_px) / s)))
        y1 = min(mask.height, int(math.ceil((reg.y_px + reg.h_px) / s)))
        cover[y0:y1, x0:x1] = True
    return cover


def _mask_coverage(regions, mask: BinaryMask) -> tuple:
    cover = _cover_array(regions, mask)
    return int((cover & mask.bits).sum()), int(mask.bits.sum())


def _point_capture(regions, points) -> tuple:
    """Boundary-inclusive: a point on a region edge counts as annotated."""
    captured = 0
    for x, y in points:
        if any(
            reg.x_px <= x <= reg.x_px + reg.w_px and reg.y_px <= y <= reg.y_px + reg.h_px
            for reg in regions
        ):
            captured += 1
    return captured, len(points)


def coverage_metrics(regions, gt: GroundTruth, denominator: str = "tissue") -> dict:
    """Coverage counts for one slide: tissue/class pixel and point capture
    numerators and denominators (ratios are numerator / denominator)."""
    if denominator not in ("tissue", "slide"):
        raise ValidationError("denominator must be 'tissue' or 'slide'")
    tiss_num, tiss_den = _mask_coverage(regions, gt.tissue_mask)
    if denominator == "slide":
        tiss_den = gt.tissue_mask.bits.size
    out = {"tissue_num": tiss_num, "tissue_den": tiss_den}
    if gt.class_mask is not None:
        out["class_num"], out["class_den"] = _mask_coverage(regions, gt.class_mask)
    if gt.points is not None:
        out["point_num"], out["point_den"] = _point_capture(regions, gt.points)
    return out


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def metrics_to_result(strategy, n, l_px, seed, counts: dict) -> SweepResult:
    return SweepResult(
        strategy=strategy, n=n, l_px=l_px, seed=seed,
        annotated_tissue_pct=_ratio(counts["tissue_num"], counts["tissue_den"]),
        class_area_pct=(
            _ratio(counts["class_num"], counts["class_den"]) if "class_num" in counts else None
        ),
        point_capture_ratio=(
            _ratio(counts["point_num"], counts["point_den"]) if "point_num" in counts else None
        ),
    )


def region_area_mm2(l_px: int, mpp: float) -> float:
    if mpp <= 0:
        raise ValidationError("mpp must be positive")
    side_mm = l_px * mpp / 1000.0
    return side_mm * side_mm


# ---------------------------------------------------------------------------
# Synthetic fixtures


@dataclass
class BlobSpec:
    center: tuple  # (gy, gx)
    radius: float  # grid cells
    direction: np.ndarray  # unit embedding direction


@dataclass
class SyntheticWsi:
    meta: GridMeta
    embeddings: np.ndarray  # (grid_h * grid_w, dim) float32
    ground_truth: GroundTruth
    prototypes: PrototypeSet


def gen_synthetic_wsi(
    seed: int,
    grid_h: int,
    grid_w: int,
    dim: int,
    blobs,
    background_direction,
    wsi_id: str = "synthetic",
    stride_px: int = 256,
    patch_px: int = 256,
    mpp: float = 0.25,
    noise: float = 0.05,
) -> SyntheticWsi:
    """Planted-blob slide: blob cells point along their class direction,
    background cells along the background direction, both plus seeded
    Gaussian noise. Fully deterministic per seed."""
    bg = np.asarray(background_direction, dtype=np.float64)
    for i, a in enumerate(blobs):
        for b in blobs[i + 1 :]:
            if not np.allclose(a.direction, b.direction):
                dist = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
                if dist < a.radius + b.radius:
                    raise ValidationError("overlapping blobs with different classes")

    rng = stream_for(seed, wsi_id)
    gy, gx = np.mgrid[0:grid_h, 0:grid_w]
    emb = np.tile(bg, (grid_h * grid_w, 1))
    gt_bits = np.zeros((grid_h, grid_w), dtype=bool)
    for blob in blobs:
        inside = (gy - blob.center[0]) ** 2 + (gx - blob.center[1]) ** 2 <= blob.radius**2
        emb[inside.ravel()] = np.asarray(blob.direction, dtype=np.float64)
        gt_bits |= inside
    if noise > 0.0:
        jitter = np.array(
            [rng.normal() for _ in range(emb.size)], dtype=np.float64
        ).reshape(emb.shape)
        emb = emb + noise * jitter

    meta = GridMeta(
        wsi_id=wsi_id, grid_h=grid_h, grid_w=grid_w,
        stride_px=stride_px, patch_px=patch_px, mpp=mpp,
        level0_h=grid_h * stride_px, level0_w=grid_w * stride_px,
    )
    tissue = BinaryMask(np.ones((grid_h, grid_w), dtype=bool), scale_to_level0=stride_px)
    gt = GroundTruth(
        tissue_mask=tissue,
        class_mask=BinaryMask(gt_bits, scale_to_level0=stride_px),
    )
    proto_dirs = []
    seen = []
    for blob in blobs:
        if not any(np.allclose(blob.direction, d) for d in seen):
            seen.append(blob.direction)
            proto_dirs.append(blob.direction)
    prototypes = build_prototype_set(
        "planted", np.array(proto_dirs), [f"blob{i}" for i in range(len(proto_dirs))]
    )
    return SyntheticWsi(
        meta=meta,
        embeddings=emb.astype(np.float32),
        ground_truth=gt,
        prototypes=prototypes,
    )


# ---------------------------------------------------------------------------
# Sweep


@dataclass
class SweepEntry:
    """One slide's inputs for the sweep."""

    meta: GridMeta
    embeddings: np.ndarray  # flat patch-embedding matrix
    ground_truth: GroundTruth
    similarity_map: SimilarityMap | None = None  # built on demand from prototypes
    prototypes: PrototypeSet | None = None


def _entry_map(entry: SweepEntry) -> SimilarityMap:
    if entry.similarity_map is None:
        if entry.prototypes is None:
            raise ValidationError(f"{entry.meta.wsi_id}: no similarity map or prototypes")
        from slideselect.container import EmbeddingContainer

        entry.similarity_map = build_similarity_map(
            EmbeddingContainer(values=np.asarray(entry.embeddings, dtype=np.float32)),
            entry.meta,
            entry.prototypes,
        )
    return entry.similarity_map


def _select_for(entry_list, strategy, cfg):
    """Regions per entry index, as a dict index -> regions."""
    if strategy == "diversity":
        regions = select_diversity(
            [(e.meta, e.embeddings) for e in entry_list], cfg
        )
        by_wsi = {}
        for reg in regions:
            by_wsi.setdefault(reg.wsi_id, []).append(reg)
        return {i: by_wsi.get(e.meta.wsi_id, []) for i, e in enumerate(entry_list)}
    out = {}
    for i, entry in enumerate(entry_list):
        if strategy == "random":
            out[i] = select_random(entry.meta, entry.ground_truth.tissue_mask, cfg)
        elif strategy == "proto_standard":
            out[i] = select_standard(_entry_map(entry), cfg)
        elif strategy == "proto_adaptive":
            out[i] = select_adaptive(_entry_map(entry), cfg)
        else:
            raise ValidationError(f"unknown strategy {strategy!r}")
    return out


def lower_median(values):
    """Median; for even counts the lower of the two middle values."""
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def run_sweep(dataset, strategies, n_set, l_set, seeds,
              denominator: str = "tissue") -> tuple:
    """One SweepResult per (strategy, n, l, seed), metrics pooled over all
    slides, plus a reduced table of per-cell lower medians over seeds."""
    dataset = list(dataset)
    if not dataset:
        raise ValidationError("sweep needs at least one slide")
    rows: list[SweepResult] = []
    for strategy in strategies:
        for n in n_set:
            for l_px in l_set:
                for seed in seeds:
                    cfg = SelectionConfig(n=n, l_px=l_px, seed=seed, strategy=strategy)
                    per_entry = _select_for(dataset, strategy, cfg)
                    totals: dict = {}
                    for i, entry in enumerate(dataset):
                        counts = coverage_metrics(
                            per_entry[i], entry.ground_truth, denominator=denominator
                        )
                        for key, val in counts.items():
                            totals[key] = totals.get(key, 0) + val
                    rows.append(metrics_to_result(strategy, n, l_px, seed, totals))
    medians: list[SweepResult] = []
    for strategy in strategies:
        for n in n_set:
            for l_px in l_set:
                cell = [
                    r for r in rows
                    if r.strategy == strategy and r.n == n and r.l_px == l_px
                ]
                medians.append(
                    SweepResult(
                        strategy=strategy, n=n, l_px=l_px, seed="median",
                        annotated_tissue_pct=lower_median(
                            [r.annotated_tissue_pct for r in cell]
                        ),
                        class_area_pct=(
                            lower_median([r.class_area_pct for r in cell])
                            if cell[0].class_area_pct is not None else None
                        ),
                        point_capture_ratio=(
                            lower_median([r.point_capture_ratio for r in cell])
                            if cell[0].point_capture_ratio is not None else None
                        ),
                    )
                )
    return rows, medians


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([
                r.strategy, r.n, r.l_px, r.seed,
                f"{r.annotated_tissue_pct:.6f}",
                "" if r.class_area_pct is None else f"{r.class_area_pct:.6f}",
                "" if r.point_capture_ratio is None else f"{r.point_capture_ratio:.6f}",
            ])
