"""Annotation-region selection strategies and their numeric subroutines.

Four strategies: random (tissue-gated rejection sampling), diversity
(pooled k-means over region embeddings), sliding-window greedy selection
on a similarity map, and threshold-adaptive selection via bisection on
the connected component around the similarity argmax.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from slideselect.container import BinaryMask, GridMeta, Region
from slideselect.errors import ValidationError
from slideselect.rng import stream_for
from slideselect.simmap import SimilarityMap, integral_image, window_sum

STRATEGY_CHOICES = ("random", "diversity", "proto_standard", "proto_adaptive")


@dataclass
class SelectionConfig:
    n: int = 3
    l_px: int = 8192
    seed: int = 0
    strategy: str = "proto_standard"
    min_tissue_fraction: float = 0.10
    bisect_max_iters: int = 50
    bisect_tol: float = 1e-6
    kmeans_max_iters: int = 300
    kmeans_tol: float = 1e-4
    max_random_attempts_per_region: int = 1000

    def validate(self, stride_px: int | None = None) -> None:
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if not 0.0 <= self.min_tissue_fraction <= 1.0:
            raise ValidationError("min_tissue_fraction must lie in [0, 1]")
        if self.strategy not in STRATEGY_CHOICES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if stride_px is not None and self.l_px < stride_px:
            raise ValidationError(
                f"l_px={self.l_px} must be >= stride_px={stride_px}"
            )


@dataclass
class ComponentBox:
    threshold: float
    bbox: tuple  # (gy0, gx0, gy1, gx1) inclusive grid cells
    area_cells: int


# ---------------------------------------------------------------------------
# Otsu thresholding and tissue masks


def otsu_threshold(histogram) -> int:
    """Threshold index maximizing between-class variance; ties take the
    smallest index. Classes are bins <= t vs bins > t."""
    hist = np.asarray(histogram, dtype=np.float64)
    if hist.ndim != 1 or hist.size == 0 or hist.sum() <= 0:
        raise ValidationError("histogram must have at least one non-zero bin")
    total = hist.sum()
    bins = np.arange(hist.size, dtype=np.float64)
    w0 = np.cumsum(hist)
    m0 = np.cumsum(hist * bins)
    mean_total = m0[-1] / total
    best_t, best_var = 0, -1.0
    for t in range(hist.size - 1):
        wb = w0[t]
        wf = total - wb
        if wb == 0 or wf == 0:
            continue
        mb = m0[t] / wb
        mf = (m0[-1] - m0[t]) / wf
        var = wb * wf * (mb - mf) ** 2
        if var > best_var:
            best_var = var
            best_t = t
    if best_var < 0:
        # all mass in one bin: no separating threshold exists
        return int(np.flatnonzero(hist)[0])
    return best_t


def tissue_mask(thumbnail: np.ndarray, threshold: int, scale_to_level0: float) -> BinaryMask:
    """Tissue = pixels darker than the threshold (glass background is bright)."""
    thumb = np.asarray(thumbnail)
    return BinaryMask(bits=thumb < threshold, scale_to_level0=scale_to_level0)


def tissue_fraction(mask: BinaryMask, x_px: int, y_px: int, w_px: int, h_px: int) -> float:
    """Fraction of the region covered by tissue, at mask resolution with
    outward rounding so boundary cells count."""
    s = mask.scale_to_level0
    x0 = max(0, int(np.floor(x_px / s)))
    y0 = max(0, int(np.floor(y_px / s)))
    x1 = min(mask.width, int(np.ceil((x_px + w_px) / s)))
    y1 = min(mask.height, int(np.ceil((y_px + h_px) / s)))
    if x1 <= x0 or y1 <= y0:
        return 0.0
    crop = mask.bits[y0:y1, x0:x1]
    return float(crop.mean())


# ---------------------------------------------------------------------------
# Random sampling


def select_random(meta: GridMeta, mask: BinaryMask | None, cfg: SelectionConfig):
    """Rejection-sample up to n non-overlapping l x l regions with tissue
    fraction >= min_tissue_fraction; a shortfall is allowed and warned."""
    cfg.validate(meta.stride_px)
    l = cfg.l_px
    if l > meta.level0_w or l > meta.level0_h:
        raise ValidationError(f"region side {l} exceeds slide {meta.level0_w}x{meta.level0_h}")
    rng = stream_for(cfg.seed, meta.wsi_id)
    accepted: list[Region] = []
    attempts_left = cfg.max_random_attempts_per_region * cfg.n
    while len(accepted) < cfg.n and attempts_left > 0:
        attempts_left -= 1
        x = rng.randbelow(meta.level0_w - l + 1)
        y = rng.randbelow(meta.level0_h - l + 1)
        cand = Region(
            wsi_id=meta.wsi_id, x_px=x, y_px=y, w_px=l, h_px=l,
            score=0.0, rank=len(accepted), strategy="random",
        )
        if mask is not None:
            frac = tissue_fraction(mask, x, y, l, l)
            if frac < cfg.min_tissue_fraction:
                continue
            cand.score = frac
        if any(cand.overlaps(prev) for prev in accepted):
            continue
        accepted.append(cand)
    return accepted


# ---------------------------------------------------------------------------
# K-means (Lloyd with k-means++ init, deterministic under seed)


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia_path: list = field(default_factory=list)

    @property
    def inertia(self) -> float:
        return self.inertia_path[-1] if self.inertia_path else float("nan")


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeanspp_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.randbelow(n)]]
    d2 = np.einsum("ij,ij->i", points - centers[0], points - centers[0])
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.randbelow(n)
        else:
            r = rng.uniform() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centers.append(points[idx])
        nd = np.einsum("ij,ij->i", points - centers[-1], points - centers[-1])
        d2 = np.minimum(d2, nd)
    return np.array(centers, dtype=np.float64)


def kmeans(points, k: int, seed: int = 0, max_iters: int = 300, tol: float = 1e-4) -> KMeansResult:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValidationError("points must be a non-empty 2-D matrix")
    n = points.shape[0]
    if k < 1 or k > n:
        raise ValidationError(f"k={k} out of range for {n} points")
    rng = stream_for(seed, "kmeans")
    centers = _kmeanspp_init(points, k, rng)
    inertia_path: list[float] = []
    assignments = np.zeros(n, dtype=int)
    for _ in range(max_iters):
        d2 = _sq_dists(points, centers)
        assignments = d2.argmin(axis=1)
        inertia_path.append(float(d2[np.arange(n), assignments].sum()))
        new_centers = centers.copy()
        for c in range(k):
            members = points[assignments == c]
            if members.shape[0] == 0:
                # re-seed an empty cluster to the farthest point
                far = int(d2.min(axis=1).argmax())
                new_centers[c] = points[far]
            else:
                new_centers[c] = members.mean(axis=0)
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    d2 = _sq_dists(points, centers)
    assignments = d2.argmin(axis=1)
    inertia_path.append(float(d2[np.arange(n), assignments].sum()))
    return KMeansResult(centroids=centers, assignments=assignments, inertia_path=inertia_path)


# ---------------------------------------------------------------------------
# Diversity sampling


def candidate_regions(meta: GridMeta, l_px: int):
    """Grid-aligned non-overlapping l x l candidates; partial edges dropped.
    Returned as (gy0, gx0) block origins in units of L = l_px // stride cells."""
    L = max(1, round(l_px / meta.stride_px))
    blocks_h = meta.grid_h // L
    blocks_w = meta.grid_w // L
    return L, [(by * L, bx * L) for by in range(blocks_h) for bx in range(blocks_w)]


def region_embedding(container_values: np.ndarray, meta: GridMeta, gy0: int, gx0: int, L: int):
    """Mean-pooled patch embedding over an L x L block of grid cells."""
    grid = container_values.reshape(meta.grid_h, meta.grid_w, -1)
    return grid[gy0 : gy0 + L, gx0 : gx0 + L].reshape(-1, grid.shape[2]).mean(axis=0)


def select_diversity(wsi_inputs, cfg: SelectionConfig):
    """Pool candidate-region embeddings from all slides, cluster into
    N * n groups and pick the centroid-nearest region per cluster.

    wsi_inputs: list of (meta, embeddings) where embeddings is either the
    flat patch-embedding matrix (mean-pooled per region) or a precomputed
    (n_regions, dim) matrix matching candidate_regions() order.
    """
    cfg.validate()
    pooled = []
    owners = []  # (meta, gy0, gx0, L) per pooled row
    for meta, emb in wsi_inputs:
        cfg.validate(meta.stride_px)
        L, cands = candidate_regions(meta, cfg.l_px)
        if not cands:
            continue
        emb = np.asarray(emb, dtype=np.float64)
        if emb.shape[0] == meta.grid_h * meta.grid_w:
            feats = [region_embedding(emb, meta, gy0, gx0, L) for gy0, gx0 in cands]
        elif emb.shape[0] == len(cands):
            feats = list(emb)
        else:
            raise ValidationError(
                f"{meta.wsi_id}: embeddings rows {emb.shape[0]} match neither the "
                f"patch grid ({meta.grid_h * meta.grid_w}) nor the candidate "
                f"regions ({len(cands)})"
            )
        for (gy0, gx0), f in zip(cands, feats):
            pooled.append(f)
            owners.append((meta, gy0, gx0, L))
    k = len(wsi_inputs) * cfg.n
    if len(pooled) < k:
        raise ValidationError(f"only {len(pooled)} candidate regions for k={k} clusters")
    points = np.array(pooled, dtype=np.float64)
    result = kmeans(points, k, seed=cfg.seed, max_iters=cfg.kmeans_max_iters, tol=cfg.kmeans_tol)

    regions: list[Region] = []
    d2 = _sq_dists(points, result.centroids)
    for c in range(k):
        members = np.flatnonzero(result.assignments == c)
        if members.size == 0:
            continue
        best = int(members[d2[members, c].argmin()])  # argmin keeps lowest global index on ties
        meta, gy0, gx0, L = owners[best]
        regions.append(
            _grid_box_to_region(meta, gy0, gx0, gy0 + L - 1, gx0 + L - 1,
                                score=-float(d2[best, c]), rank=len(regions),
                                strategy="diversity")
        )
    return regions


# ---------------------------------------------------------------------------
# Standard (sliding-window greedy) selection


@dataclass
class GridPick:
    gy: int
    gx: int
    score: float


def standard_picks(values: np.ndarray, L: int, n: int) -> list[GridPick]:
    """Greedy max-sum L x L windows via the summed-area table; windows may
    not overlap earlier picks; ties break lexicographically by (row, col)."""
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    if L > h or L > w:
        raise ValidationError(f"window side {L} exceeds grid {h}x{w}")
    sat = integral_image(values)
    sums = (
        sat[L:, L:] - sat[:-L, L:] - sat[L:, :-L] + sat[:-L, :-L]
    )  # (h-L+1, w-L+1) window sums
    blocked = np.zeros_like(sums, dtype=bool)
    picks: list[GridPick] = []
    while len(picks) < n and not blocked.all():
        masked = np.where(blocked, -np.inf, sums)
        best = masked.max()
        flat = int(np.argmax(masked == best))  # first row-major position at max
        gy, gx = divmod(flat, masked.shape[1])
        picks.append(GridPick(gy=gy, gx=gx, score=float(sums[gy, gx])))
        y0 = max(0, gy - L + 1)
        x0 = max(0, gx - L + 1)
        blocked[y0 : gy + L, x0 : gx + L] = True
    return picks


def select_standard(smap: SimilarityMap, cfg: SelectionConfig):
    cfg.validate(smap.meta.stride_px if smap.meta else None)
    meta = _require_meta(smap)
    L = round(cfg.l_px / meta.stride_px)
    picks = standard_picks(smap.values, L, cfg.n)
    return [
        _grid_box_to_region(meta, p.gy, p.gx, p.gy + L - 1, p.gx + L - 1,
                            score=p.score, rank=i, strategy="proto_standard")
        for i, p in enumerate(picks)
    ]


# ---------------------------------------------------------------------------
# Connected components (4-connectivity flood fill)


def connected_component_at(mask: np.ndarray, seed_cell: tuple) -> ComponentBox:
    mask = np.asarray(mask, dtype=bool)
    sy, sx = seed_cell
    if not mask[sy, sx]:
        raise ValidationError(f"seed cell {seed_cell} is not set in the mask")
    h, w = mask.shape
    seen = np.zeros_like(mask)
    seen[sy, sx] = True
    queue = deque([(sy, sx)])
    y0 = y1 = sy
    x0 = x1 = sx
    while queue:
        y, x = queue.popleft()
        y0, y1 = min(y0, y), max(y1, y)
        x0, x1 = min(x0, x), max(x1, x)
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                queue.append((ny, nx))
    bbox = (y0, x0, y1, x1)
    return ComponentBox(threshold=float("nan"), bbox=bbox,
                        area_cells=(y1 - y0 + 1) * (x1 - x0 + 1))


# ---------------------------------------------------------------------------
# Adaptive selection


@dataclass
class AdaptivePick:
    bbox: tuple  # (gy0, gx0, gy1, gx1) inclusive, after overlap resolution
    score: float
    seed_cell: tuple
    threshold: float
    converged: bool
    snapped: bool
    raw_bbox: tuple = None  # bisection/snap output before overlap cuts


def _bbox_area(bbox) -> int:
    return (bbox[2] - bbox[0] + 1) * (bbox[3] - bbox[1] + 1)


def component_bbox(values: np.ndarray, seed_cell: tuple, threshold: float) -> ComponentBox:
    """Bounding box of the thresholded component containing the seed."""
    box = connected_component_at(values >= threshold, seed_cell)
    box.threshold = threshold
    return box


def _snap_square(seed_cell, side: int, h: int, w: int) -> tuple:
    """Square of the given side centered on the seed, shifted into bounds."""
    side = min(side, h, w)
    sy, sx = seed_cell
    y0 = min(max(0, sy - side // 2), h - side)
    x0 = min(max(0, sx - side // 2), w - side)
    return (y0, x0, y0 + side - 1, x0 + side - 1)


def _cut_overlaps(bbox, seed_cell, taken_boxes):
    """Shrink bbox so it no longer overlaps earlier boxes, keeping the seed.

    For each overlapping box, cut along the edge that keeps the seed and
    loses the fewest cells. The seed never lies inside an earlier box, so
    at least one valid cut always exists.
    """
    sy, sx = seed_cell
    y0, x0, y1, x1 = bbox
    for ty0, tx0, ty1, tx1 in taken_boxes:
        if y0 > ty1 or y1 < ty0 or x0 > tx1 or x1 < tx0:
            continue
        options = []
        if sy < ty0:
            options.append(("y1", ty0 - 1))
        if sy > ty1:
            options.append(("y0", ty1 + 1))
        if sx < tx0:
            options.append(("x1", tx0 - 1))
        if sx > tx1:
            options.append(("x0", tx1 + 1))
        if not options:
            raise ValidationError("seed cell lies inside an already selected region")

        def loss(option):
            edge, val = option
            if edge == "y1":
                return (y1 - val) * (x1 - x0 + 1)
            if edge == "y0":
                return (val - y0) * (x1 - x0 + 1)
            if edge == "x1":
                return (x1 - val) * (y1 - y0 + 1)
            return (val - x0) * (y1 - y0 + 1)

        edge, val = min(options, key=loss)
        if edge == "y1":
            y1 = val
        elif edge == "y0":
            y0 = val
        elif edge == "x1":
            x1 = val
        else:
            x0 = val
    return (y0, x0, y1, x1)


def adaptive_picks(values: np.ndarray, excluded: np.ndarray, L: int,
                   cfg: SelectionConfig) -> list[AdaptivePick]:
    """Per region: argmax seed, bisection on the component-bbox area into
    [L^2/4, 9L^2/4], snap on non-convergence, then exclude the chosen box."""
    working = np.array(values, dtype=np.float64)
    working[np.asarray(excluded, dtype=bool)] = 0.0
    h, w = working.shape
    if L > h or L > w:
        raise ValidationError(f"window side {L} exceeds grid {h}x{w}")
    lo_area = L * L / 4.0
    hi_area = 9.0 * L * L / 4.0
    available = ~np.asarray(excluded, dtype=bool)
    picks: list[AdaptivePick] = []
    taken_boxes: list[tuple] = []
    for _ in range(cfg.n):
        cand = np.where(available, working, -1.0)
        vmax = cand.max()
        if vmax <= 0.0:
            break  # nothing resembles the prototypes anymore
        flat = int(np.argmax(cand == vmax))  # row-major tie-break
        seed_cell = divmod(flat, w)

        lo, hi = 0.0, float(vmax)
        bbox = None
        area = None
        threshold = hi
        converged = False
        for _ in range(cfg.bisect_max_iters):
            t = (lo + hi) / 2.0
            box = component_bbox(working, seed_cell, t)
            bbox, area, threshold = box.bbox, box.area_cells, t
            if lo_area <= area <= hi_area:
                converged = True
                break
            if area > hi_area:
                lo = t  # raise the threshold to shrink the component
            else:
                hi = t
            if hi - lo < cfg.bisect_tol:
                break
        snapped = False
        if not converged:
            side = round(1.5 * L) if area > hi_area else max(1, round(0.5 * L))
            bbox = _snap_square(seed_cell, side, h, w)
            snapped = True
        raw_bbox = bbox
        bbox = _cut_overlaps(bbox, seed_cell, taken_boxes)
        y0, x0, y1, x1 = bbox
        score = float(working[y0 : y1 + 1, x0 : x1 + 1].sum())
        picks.append(AdaptivePick(bbox=bbox, score=score, seed_cell=seed_cell,
                                  threshold=threshold, converged=converged,
                                  snapped=snapped, raw_bbox=raw_bbox))
        taken_boxes.append(bbox)
        working[y0 : y1 + 1, x0 : x1 + 1] = 0.0
        available[y0 : y1 + 1, x0 : x1 + 1] = False
    return picks


def select_adaptive(smap: SimilarityMap, cfg: SelectionConfig):
    cfg.validate(smap.meta.stride_px if smap.meta else None)
    meta = _require_meta(smap)
    L = round(cfg.l_px / meta.stride_px)
    picks = adaptive_picks(smap.values, smap.excluded, L, cfg)
    return [
        _grid_box_to_region(meta, *p.bbox, score=p.score, rank=i,
                            strategy="proto_adaptive")
        for i, p in enumerate(picks)
    ]


# ---------------------------------------------------------------------------
# Grid-to-pixel conversion


def to_level0(meta: GridMeta, gy0: int, gx0: int, gy1: int, gx1: int) -> tuple:
    """Inclusive grid-cell box to level-0 pixel box (x, y, w, h), clamped."""
    x0 = gx0 * meta.stride_px
    y0 = gy0 * meta.stride_px
    x1 = min((gx1 + 1) * meta.stride_px, meta.level0_w)
    y1 = min((gy1 + 1) * meta.stride_px, meta.level0_h)
    return (x0, y0, x1 - x0, y1 - y0)


def _grid_box_to_region(meta, gy0, gx0, gy1, gx1, score, rank, strategy) -> Region:
    x, y, w, h = to_level0(meta, gy0, gx0, gy1, gx1)
    return Region(wsi_id=meta.wsi_id, x_px=x, y_px=y, w_px=w, h_px=h,
                  score=score, rank=rank, strategy=strategy)


def _require_meta(smap: SimilarityMap) -> GridMeta:
    if smap.meta is None:
        raise ValidationError("similarity map lacks grid metadata")
    return smap.meta
