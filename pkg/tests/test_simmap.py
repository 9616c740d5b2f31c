import math

import numpy as np
import pytest

from slideselect.container import BinaryMask, EmbeddingContainer
from slideselect.errors import ValidationError
from slideselect.prototypes import build_prototype_set
from slideselect.simmap import (
    SimilarityMap,
    build_similarity_map,
    integral_image,
    patch_similarity,
    read_map,
    render_map,
    window_sum,
    write_map,
)

from conftest import make_meta
from oracles import brute_similarity_map, brute_window_sum


def protos(*rows):
    rows = np.array(rows, dtype=np.float64)
    return build_prototype_set("p", rows, [str(i) for i in range(len(rows))])


class TestPatchSimilarity:
    def test_exact_prototype_match(self):
        pset = protos([1, 0, 0], [0, 1, 0])
        assert patch_similarity([0, 2, 0], pset) == pytest.approx(1.0)

    def test_orthogonal_gives_zero(self):
        pset = protos([1, 0, 0], [0, 1, 0])
        assert patch_similarity([0, 0, 5], pset) == 0.0

    def test_bisector(self):
        pset = protos([1, 0], [0, 1])
        val = patch_similarity([1, 1], pset)
        assert val == pytest.approx(1 / math.sqrt(2), abs=1e-6)

    def test_negative_cosine_clamped(self):
        pset = protos([1, 0])
        assert patch_similarity([-1, 0], pset) == 0.0

    def test_zero_patch_rejected(self):
        with pytest.raises(ValidationError):
            patch_similarity([0, 0], protos([1, 0]))


class TestBuildSimilarityMap:
    def test_two_by_two_indicator(self):
        meta = make_meta(grid_h=2, grid_w=2)
        emb = np.array([[1, 0], [0, 1], [0, 1], [0, 1]], dtype=np.float32)
        smap = build_similarity_map(EmbeddingContainer(emb), meta, protos([1, 0]))
        np.testing.assert_allclose(smap.values, [[1, 0], [0, 0]], atol=1e-12)

    def test_prototype_duplication_invariance(self):
        meta = make_meta(grid_h=3, grid_w=3)
        rng = np.random.default_rng(0)
        emb = rng.standard_normal((9, 4)).astype(np.float32)
        p = rng.standard_normal((2, 4))
        a = build_similarity_map(EmbeddingContainer(emb), meta, protos(*p))
        b = build_similarity_map(EmbeddingContainer(emb), meta, protos(*p, *p))
        np.testing.assert_array_equal(a.values, b.values)

    def test_matches_brute_force(self):
        meta = make_meta(grid_h=8, grid_w=8)
        rng = np.random.default_rng(1)
        emb = rng.standard_normal((64, 5)).astype(np.float32)
        p = rng.standard_normal((3, 5))
        p /= np.linalg.norm(p, axis=1, keepdims=True)
        smap = build_similarity_map(EmbeddingContainer(emb), meta, protos(*p))
        expected = brute_similarity_map(emb.astype(np.float64), p, 8, 8)
        np.testing.assert_allclose(smap.values, expected, atol=1e-9)

    def test_positive_scaling_of_rows_invariant(self):
        meta = make_meta(grid_h=4, grid_w=4)
        rng = np.random.default_rng(2)
        emb = rng.standard_normal((16, 3)).astype(np.float64)
        p = rng.standard_normal((2, 3))
        a = build_similarity_map(EmbeddingContainer(emb.astype(np.float32)), meta, protos(*p))
        scaled = emb * rng.uniform(0.5, 4.0, size=(16, 1))
        b = build_similarity_map(EmbeddingContainer(scaled.astype(np.float32)), meta, protos(*p))
        np.testing.assert_allclose(a.values, b.values, atol=1e-6)

    def test_zero_embedding_cell_excluded(self):
        meta = make_meta(grid_h=2, grid_w=2)
        emb = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=np.float32)
        smap = build_similarity_map(EmbeddingContainer(emb), meta, protos([1, 0]))
        assert smap.excluded[0, 0]
        assert smap.values[0, 0] == 0.0

    def test_tissue_mask_excludes_cells(self):
        meta = make_meta(grid_h=2, grid_w=2)
        emb = np.ones((4, 2), dtype=np.float32)
        bits = np.array([[True, False], [True, True]])
        mask = BinaryMask(bits=bits, scale_to_level0=meta.stride_px)
        smap = build_similarity_map(EmbeddingContainer(emb), meta, protos([1, 1]),
                                    tissue_mask=mask)
        assert smap.excluded[0, 1]
        assert smap.values[0, 1] == 0.0
        assert smap.values[0, 0] == pytest.approx(1.0)

    def test_shape_mismatch_rejected(self):
        meta = make_meta(grid_h=2, grid_w=2)
        with pytest.raises(ValidationError):
            build_similarity_map(EmbeddingContainer(np.ones((3, 2), dtype=np.float32)),
                                 meta, protos([1, 0]))

    def test_values_in_unit_interval(self):
        meta = make_meta(grid_h=6, grid_w=6)
        rng = np.random.default_rng(3)
        emb = rng.standard_normal((36, 4)).astype(np.float32)
        smap = build_similarity_map(EmbeddingContainer(emb), meta,
                                    protos(*rng.standard_normal((3, 4))))
        assert smap.values.min() >= 0.0
        assert smap.values.max() <= 1.0


class TestIntegralImage:
    def test_all_ones_corner(self):
        sat = integral_image(np.ones((3, 3)))
        assert sat[-1, -1] == 9.0

    def test_random_window_sums(self):
        rng = np.random.default_rng(4)
        values = rng.uniform(size=(6, 6))
        sat = integral_image(values)
        for _ in range(50):
            y0, x0 = rng.integers(0, 5, size=2)
            s = window_sum(sat, y0, x0, y0 + 1, x0 + 1)
            direct = brute_window_sum(values, y0, x0, y0 + 1, x0 + 1)
            assert s == pytest.approx(direct, rel=1e-6)

    def test_map_object_accepted(self):
        smap = SimilarityMap(wsi_id="w", values=np.full((2, 2), 0.5),
                             excluded=np.zeros((2, 2), dtype=bool))
        assert integral_image(smap)[-1, -1] == pytest.approx(2.0)


class TestMapIO:
    def test_round_trip(self, tmp_path):
        meta = make_meta(grid_h=3, grid_w=4)
        values = np.round(np.random.default_rng(5).uniform(size=(3, 4)), 3)
        excluded = np.zeros((3, 4), dtype=bool)
        excluded[0, 0] = True
        values[excluded] = 0.0
        smap = SimilarityMap(wsi_id="wsi", values=values, excluded=excluded, meta=meta)
        path = tmp_path / "m.emb"
        write_map(smap, path)
        back = read_map(path, meta=meta)
        np.testing.assert_allclose(back.values, values, atol=1e-6)
        np.testing.assert_array_equal(back.excluded, excluded)
        assert back.wsi_id == "wsi"

    def test_render(self, tmp_path):
        smap = SimilarityMap(wsi_id="w", values=np.array([[0.0, 1.0]]),
                             excluded=np.zeros((1, 2), dtype=bool))
        out = tmp_path / "vis.pgm"
        render_map(smap, out)
        from slideselect.container import read_pgm

        np.testing.assert_array_equal(read_pgm(out), [[0, 255]])

    def test_excluded_cells_must_be_zero(self):
        with pytest.raises(ValidationError):
            SimilarityMap(wsi_id="w", values=np.array([[0.5]]),
                          excluded=np.array([[True]]))
