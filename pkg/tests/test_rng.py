"""Seeded stream determinism, child independence, and draw primitives."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zone_rl.rng import RngStream


class TestDeterminism:
    def test_same_seed_same_sequence(self):
        a = [RngStream(7).normal() for _ in range(5)]
        b = [RngStream(7).normal() for _ in range(5)]
        assert a == b

    def test_child_same_tag_identical(self):
        a = RngStream(3).child("dynamics")
        b = RngStream(3).child("dynamics")
        assert [a.random() for _ in range(4)] == [b.random() for _ in range(4)]

    def test_child_different_tags_diverge(self):
        a = RngStream(3).child("dynamics")
        b = RngStream(3).child("meals")
        assert [a.random() for _ in range(4)] != [b.random() for _ in range(4)]

    def test_child_independent_of_parent_draws(self):
        # Deriving a child must not depend on how much the parent has drawn.
        parent_a = RngStream(11)
        parent_b = RngStream(11)
        for _ in range(10):
            parent_b.random()
        assert parent_a.child("x").random() == parent_b.child("x").random()

    def test_grandchildren_distinct(self):
        root = RngStream(0)
        a = root.child("episode-0").child("policy")
        b = root.child("episode-1").child("policy")
        assert a.random() != b.random()

    def test_seed_type_checked(self):
        with pytest.raises(TypeError):
            RngStream("7")  # type: ignore[arg-type]


class TestPrimitives:
    def test_random_in_unit_interval(self):
        rng = RngStream(1)
        values = [rng.random() for _ in range(100)]
        assert all(0.0 <= v < 1.0 for v in values)

    def test_uniform_bounds(self):
        rng = RngStream(2)
        values = [rng.uniform(-3.0, 5.0) for _ in range(100)]
        assert all(-3.0 <= v < 5.0 for v in values)

    def test_integers_half_open(self):
        rng = RngStream(4)
        values = {rng.integers(0, 3) for _ in range(200)}
        assert values == {0, 1, 2}

    def test_normal_vector_shape_and_counter(self):
        rng = RngStream(5)
        out = rng.normal(size=6)
        assert isinstance(out, np.ndarray) and out.shape == (6,)
        assert rng.draws == 6

    def test_draw_counter_scalar(self):
        rng = RngStream(6)
        rng.normal()
        rng.random()
        rng.uniform(0, 1)
        rng.integers(0, 2)
        assert rng.draws == 4


class TestChoiceIndex:
    def test_degenerate_pmf(self):
        rng = RngStream(0)
        assert all(rng.choice_index([0.0, 1.0, 0.0]) == 1 for _ in range(20))

    def test_rejects_unnormalised(self):
        with pytest.raises(ValueError):
            RngStream(0).choice_index([0.5, 0.2])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            RngStream(0).choice_index([])

    def test_inverse_cdf_boundaries(self):
        # The draw partitions [0,1) by the CDF: u < p0 -> 0, u < p0+p1 -> 1, ...
        class Scripted(RngStream):
            def __init__(self, u):
                super().__init__(0)
                self._u = u

            def random(self):
                return self._u

        pmf = [0.2, 0.5, 0.3]
        assert Scripted(0.1).choice_index(pmf) == 0
        assert Scripted(0.2).choice_index(pmf) == 1  # boundary goes right
        assert Scripted(0.69).choice_index(pmf) == 1
        assert Scripted(0.7).choice_index(pmf) == 2
        assert Scripted(0.999).choice_index(pmf) == 2

    @given(st.integers(min_value=0, max_value=2**31), st.integers(min_value=2, max_value=6))
    def test_index_always_in_support(self, seed, n):
        rng = RngStream(seed)
        pmf = [1.0 / n] * n
        for _ in range(5):
            assert 0 <= rng.choice_index(pmf) < n

    def test_empirical_frequencies(self):
        rng = RngStream(123)
        pmf = [0.7, 0.2, 0.1]
        counts = [0, 0, 0]
        n = 20_000
        for _ in range(n):
            counts[rng.choice_index(pmf)] += 1
        for count, p in zip(counts, pmf):
            assert abs(count / n - p) < 0.02
