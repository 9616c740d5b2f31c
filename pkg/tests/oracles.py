"""Independent brute-force reference implementations used as test oracles.

These deliberately avoid the production code paths (no summed-area tables,
no vectorized argsort tricks) so agreement is meaningful.
"""

import numpy as np


def brute_window_sum(values, y0, x0, y1, x1):
    total = 0.0
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            total += values[y, x]
    return total


def brute_greedy_standard(values, L, n):
    """Enumerate every window each round, pick the max (lexicographic
    tie-break), suppress overlaps, repeat."""
    h, w = values.shape
    picks = []
    taken = []
    while len(picks) < n:
        best = None
        for gy in range(h - L + 1):
            for gx in range(w - L + 1):
                if any(gy < ty + L and ty < gy + L and gx < tx + L and tx < gx + L
                       for ty, tx in taken):
                    continue
                s = brute_window_sum(values, gy, gx, gy + L - 1, gx + L - 1)
                if best is None or s > best[2]:
                    best = (gy, gx, s)
        if best is None:
            break
        picks.append(best)
        taken.append((best[0], best[1]))
    return picks


def brute_otsu(histogram):
    hist = np.asarray(histogram, dtype=np.float64)
    total = hist.sum()
    bins = np.arange(hist.size, dtype=np.float64)
    best_t, best_var = None, -1.0
    for t in range(hist.size - 1):
        w0 = hist[: t + 1].sum()
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        m0 = (hist[: t + 1] * bins[: t + 1]).sum() / w0
        m1 = (hist[t + 1 :] * bins[t + 1 :]).sum() / w1
        var = w0 * w1 * (m0 - m1) ** 2
        if var > best_var:
            best_var, best_t = var, t
    if best_t is None:
        return int(np.flatnonzero(hist)[0])
    return best_t


def brute_top_k(query, database, k):
    scored = []
    for i, row in enumerate(database):
        num = float(np.dot(query, row))
        den = float(np.linalg.norm(query) * np.linalg.norm(row))
        scored.append((i, num / den))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def brute_similarity_map(embeddings, prototypes, grid_h, grid_w):
    """Double loop over cells and prototypes; clamped max cosine."""
    out = np.zeros((grid_h, grid_w))
    for gy in range(grid_h):
        for gx in range(grid_w):
            f = embeddings[gy * grid_w + gx]
            fn = np.linalg.norm(f)
            if fn == 0:
                continue
            best = max(
                float(np.dot(f, p)) / (fn * float(np.linalg.norm(p)))
                for p in prototypes
            )
            out[gy, gx] = min(max(best, 0.0), 1.0)
    return out
