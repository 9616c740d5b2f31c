"""Scikit-learn style wrappers so the map/selection pipeline composes with
the wider estimator ecosystem (get_params, fit/transform/predict)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from slideselect.prototypes import build_prototype_set
from slideselect.selection import (
    SelectionConfig,
    select_adaptive,
    select_standard,
)
from slideselect.simmap import SimilarityMap


class PrototypeSimilarity(TransformerMixin, BaseEstimator):
    """Scores patch embeddings against a prototype bank.

    fit(X): X holds prototype embeddings, one per row (L2-normalized
    internally). transform(X): per-row max cosine similarity to any
    prototype, clamped to [0, 1].
    """

    def __init__(self, class_name: str = "class"):
        self.class_name = class_name

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.prototypes_ = build_prototype_set(
            self.class_name, X, [str(i) for i in range(X.shape[0])]
        )
        return self

    def transform(self, X):
        if not hasattr(self, "prototypes_"):
            raise NotFittedError("fit the prototype bank first")
        X = check_array(X, dtype=np.float64)
        norms = np.linalg.norm(X, axis=1)
        zero = norms == 0.0
        safe = np.where(zero, 1.0, norms)
        scores = (X / safe[:, None]) @ self.prototypes_.embeddings.T
        out = np.clip(scores.max(axis=1), 0.0, 1.0)
        out[zero] = 0.0
        return out


class RegionSelector(BaseEstimator):
    """Selects annotation regions from a similarity map.

    fit(smap) runs the configured strategy and stores the result in
    regions_; predict(smap) is the stateless equivalent.
    """

    def __init__(self, strategy: str = "proto_standard", n: int = 3,
                 l_px: int = 8192, seed: int = 0,
                 bisect_max_iters: int = 50, bisect_tol: float = 1e-6):
        self.strategy = strategy
        self.n = n
        self.l_px = l_px
        self.seed = seed
        self.bisect_max_iters = bisect_max_iters
        self.bisect_tol = bisect_tol

    def _config(self) -> SelectionConfig:
        return SelectionConfig(
            n=self.n, l_px=self.l_px, seed=self.seed, strategy=self.strategy,
            bisect_max_iters=self.bisect_max_iters, bisect_tol=self.bisect_tol,
        )

    def predict(self, smap: SimilarityMap):
        cfg = self._config()
        if self.strategy == "proto_adaptive":
            return select_adaptive(smap, cfg)
        return select_standard(smap, cfg)

    def fit(self, smap: SimilarityMap, y=None):
        self.regions_ = self.predict(smap)
        return self
