import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slideselect.errors import ValidationError
from slideselect.prototypes import (
    build_prototype_set,
    cosine_similarity,
    l2_normalize,
    top_k_retrieval,
)

from oracles import brute_top_k


class TestL2Normalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize([3, 4]), [0.6, 0.8])

    def test_unit_vector_unchanged(self):
        v = np.array([0.0, 1.0, 0.0])
        np.testing.assert_allclose(l2_normalize(v), v)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValidationError):
            l2_normalize([0.0, 0.0])


class TestCosineSimilarity:
    def test_identity(self):
        assert cosine_similarity([1, 0], [1, 0]) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_half_sqrt_two(self):
        assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-6)

    def test_symmetric_and_scale_invariant(self):
        a = np.array([0.3, -1.2, 2.0])
        b = np.array([1.5, 0.2, -0.7])
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a))
        assert cosine_similarity(3.7 * a, b) == pytest.approx(cosine_similarity(a, b))

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            cosine_similarity([1, 0], [1, 0, 0])

    def test_zero_vector(self):
        with pytest.raises(ValidationError):
            cosine_similarity([0, 0], [1, 0])


class TestTopKRetrieval:
    def test_hand_computed_three_rows(self):
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0])
        db = np.stack([e1, e2, (e1 + e2) / math.sqrt(2)])
        hits = top_k_retrieval(e1, db, 2)
        assert [i for i, _ in hits] == [0, 2]
        assert hits[0][1] == pytest.approx(1.0)
        assert hits[1][1] == pytest.approx(1 / math.sqrt(2), abs=1e-6)

    def test_k_equals_rows_is_permutation(self):
        rng = np.random.default_rng(1)
        db = rng.standard_normal((20, 5))
        hits = top_k_retrieval(rng.standard_normal(5), db, 20)
        assert sorted(i for i, _ in hits) == list(range(20))
        scores = [s for _, s in hits]
        assert scores == sorted(scores, reverse=True)

    def test_exact_row_query(self):
        rng = np.random.default_rng(2)
        db = rng.standard_normal((10, 4))
        hits = top_k_retrieval(db[3], db, 1)
        assert hits[0][0] == 3
        assert hits[0][1] == pytest.approx(1.0)

    def test_k_out_of_range(self):
        db = np.eye(3)
        with pytest.raises(ValidationError):
            top_k_retrieval([1, 0, 0], db, 4)
        with pytest.raises(ValidationError):
            top_k_retrieval([1, 0, 0], db, 0)

    def test_ties_break_by_ascending_index(self):
        db = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [2.0, 0.0]])
        hits = top_k_retrieval([1.0, 0.0], db, 3)
        assert [i for i, _ in hits] == [0, 2, 3]

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        rows = rng.integers(1, 40)
        dim = rng.integers(1, 10)
        db = rng.standard_normal((rows, dim))
        db[np.linalg.norm(db, axis=1) == 0] = 1.0
        query = rng.standard_normal(dim)
        if np.linalg.norm(query) == 0:
            query[0] = 1.0
        k = int(rng.integers(1, rows + 1))
        got = top_k_retrieval(query, db, k)
        expected = brute_top_k(query, db, k)
        assert [i for i, _ in got] == [i for i, _ in expected]
        np.testing.assert_allclose([s for _, s in got], [s for _, s in expected],
                                   rtol=1e-9, atol=1e-12)

    def test_positive_scaling_invariance(self):
        rng = np.random.default_rng(3)
        db = rng.standard_normal((30, 6))
        query = rng.standard_normal(6)
        base = [i for i, _ in top_k_retrieval(query, db, 10)]
        scaled_db = db * rng.uniform(0.1, 10.0, size=(30, 1))
        assert [i for i, _ in top_k_retrieval(query * 5.0, scaled_db, 10)] == base

    def test_row_duplication_invariance(self):
        rng = np.random.default_rng(4)
        db = rng.standard_normal((10, 4))
        query = rng.standard_normal(4)
        base = top_k_retrieval(query, db, 10)
        dup = np.vstack([db, db[2]])
        got = top_k_retrieval(query, dup, 11)
        base_ids = [i for i, _ in base]
        got_ids = [i for i, _ in got if i != 10]
        assert got_ids == base_ids


class TestBuildPrototypeSet:
    def test_count_preserved(self):
        rng = np.random.default_rng(5)
        emb = rng.standard_normal((21, 8))
        pset = build_prototype_set("breast_tumor", emb, [f"img{i}" for i in range(21)])
        assert pset.size == 21
        np.testing.assert_allclose(np.linalg.norm(pset.embeddings, axis=1), 1.0)

    def test_single_embedding(self):
        pset = build_prototype_set("c", [[3.0, 4.0]], ["only"])
        assert pset.size == 1
        np.testing.assert_allclose(pset.embeddings[0], [0.6, 0.8])

    def test_zero_row_rejected(self):
        with pytest.raises(ValidationError):
            build_prototype_set("c", [[0.0, 0.0], [1.0, 0.0]], ["a", "b"])

    def test_mixed_dims_rejected(self):
        with pytest.raises(ValidationError):
            build_prototype_set("c", [[1.0, 0.0], [1.0]], ["a", "b"])

    def test_source_ids_length_checked(self):
        with pytest.raises(ValidationError):
            build_prototype_set("c", [[1.0, 0.0]], ["a", "b"])

    def test_duplicates_retained(self):
        pset = build_prototype_set("c", [[1.0, 0.0], [2.0, 0.0]], ["a", "b"])
        assert pset.size == 2
        np.testing.assert_allclose(pset.embeddings[0], pset.embeddings[1])
