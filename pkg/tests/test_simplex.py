import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvnoise.errors import DimensionError, NotOnSimplex
from tvnoise.simplex import ProbVector, argmax_class, kl_divergence, tv_distance, validate_simplex


def simplex_vectors(k_min=2, k_max=8):
    return st.integers(k_min, k_max).flatmap(
        lambda k: st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=k, max_size=k)
        .filter(lambda v: sum(v) > 1e-6)
        .map(lambda v: np.array(v) / sum(v)))


class TestValidateSimplex:
    def test_valid_vector(self):
        p = validate_simplex([0.2, 0.3, 0.5])
        np.testing.assert_array_equal(p.values, [0.2, 0.3, 0.5])

    def test_one_hot(self):
        assert validate_simplex([1.0, 0.0]) == ProbVector([1.0, 0.0])

    def test_sum_off(self):
        with pytest.raises(NotOnSimplex):
            validate_simplex([0.6, 0.6])

    def test_too_short(self):
        with pytest.raises(DimensionError):
            validate_simplex([1.0])

    def test_negative_beyond_tol(self):
        with pytest.raises(NotOnSimplex):
            validate_simplex([1.1, -0.1])

    def test_tiny_negative_clamped(self):
        p = validate_simplex([0.5 + 5e-10, 0.5, -5e-10], tol=1e-9)
        assert p.values.min() == 0.0
        assert abs(p.values.sum() - 1.0) < 1e-15

    def test_immutable(self):
        p = validate_simplex([0.5, 0.5])
        with pytest.raises(ValueError):
            p.values[0] = 1.0

    @given(simplex_vectors())
    def test_idempotent_bitwise(self, v):
        if abs(v.sum() - 1.0) > 1e-9:
            return
        once = validate_simplex(v)
        twice = validate_simplex(once.values)
        assert once.values.tobytes() == twice.values.tobytes()


class TestTV:
    def test_identity(self):
        u = [1 / 3] * 3
        assert tv_distance(u, u) == 0.0

    def test_disjoint_one_hots(self):
        assert tv_distance([1, 0, 0], [0, 1, 0]) == 1.0

    def test_worked_example(self):
        # 0.5 * (0.25 + 0.25 + 0.5)
        assert tv_distance([0.5, 0.5, 0], [0.25, 0.25, 0.5]) == pytest.approx(0.5, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            tv_distance([0.5, 0.5], [1 / 3] * 3)

    @settings(max_examples=200)
    @given(st.data())
    def test_metric_axioms(self, data):
        k = data.draw(st.integers(2, 8))
        vec = simplex_vectors(k, k)
        p, q = data.draw(vec), data.draw(vec)
        d = tv_distance(p, q)
        assert d == tv_distance(q, p)
        assert 0.0 <= d <= 1.0 + 1e-15
        assert tv_distance(p, p) == 0.0

    def test_triangle_inequality_random(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            k = rng.integers(2, 11)
            p, q, r = rng.dirichlet(np.ones(k), size=3)
            assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12


class TestKL:
    def test_identity(self):
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_one_hot_vs_uniform(self):
        assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)

    def test_floor(self):
        # 0.5*log(0.5/1) + 0.5*log(0.5/1e-12) = log(0.5) + 6*log(10)
        expected = 0.5 * math.log(0.5) + 0.5 * math.log(0.5 / 1e-12)
        assert expected == pytest.approx(13.1223633774, abs=1e-9)
        assert kl_divergence([0.5, 0.5], [1, 0], eps=1e-12) == pytest.approx(expected, rel=1e-14)

    def test_nonnegative_random(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            k = rng.integers(2, 11)
            p, q = rng.dirichlet(np.full(k, 0.5), size=2)
            assert kl_divergence(p, q, eps=1e-12) >= -1e-12


class TestArgmax:
    @pytest.mark.parametrize("p, expected", [
        ((0.1, 0.7, 0.2), 2),
        ((0.5, 0.5), 1),
        ((0, 0, 1), 3),
    ])
    def test_examples(self, p, expected):
        assert argmax_class(p) == expected
