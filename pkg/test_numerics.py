"""Tests for seeded streams, weight samplers and the Walsh-Hadamard transform"""
import itertools

import numpy as np
import pytest
from scipy.linalg import hadamard

from polysketch.errors import ConfigurationError, DimensionError
from polysketch.numerics import (
    ComplexWeightKind,
    HadamardDim,
    RngStream,
    fwht,
    is_power_of_two,
    random_permutation,
    sample_complex_weights,
    sample_rademacher,
)


class TestFwht:

    @pytest.mark.parametrize("d", [2 ** k for k in range(11)])
    def test_matches_dense_hadamard(self, d, rng):
        v = rng.standard_normal(d)
        expected = hadamard(d) @ v
        np.testing.assert_allclose(fwht(v), expected, rtol=1e-12, atol=1e-12 * np.abs(expected).max())

    def test_hand_value(self):
        np.testing.assert_array_equal(fwht(np.array([1.0, -1.0])), [0.0, 2.0])

    def test_length_one_is_identity(self):
        np.testing.assert_array_equal(fwht(np.array([3.5])), [3.5])

    @pytest.mark.parametrize("d", [1, 4, 64, 1024])
    def test_involution(self, d, rng):
        v = rng.standard_normal(d)
        np.testing.assert_allclose(fwht(fwht(v)), d * v, rtol=1e-12, atol=1e-10)

    def test_linear(self, rng):
        u, v = rng.standard_normal((2, 256))
        lhs = fwht(2.5 * u - 0.75 * v)
        rhs = 2.5 * fwht(u) - 0.75 * fwht(v)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_complex_input(self, rng):
        v = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        np.testing.assert_allclose(fwht(v), hadamard(16) @ v, atol=1e-12)

    def test_rows_transformed_independently(self, rng):
        X = rng.standard_normal((5, 32))
        expected = X @ hadamard(32).T
        np.testing.assert_allclose(fwht(X), expected, atol=1e-12)

    def test_input_not_modified(self, rng):
        v = rng.standard_normal(8)
        before = v.copy()
        fwht(v)
        np.testing.assert_array_equal(v, before)

    @pytest.mark.parametrize("d", [0, 3, 6, 12])
    def test_rejects_non_power_of_two(self, d):
        with pytest.raises(DimensionError):
            fwht(np.ones(d))


class TestHadamardDim:

    @pytest.mark.parametrize("d, d_pad", [(1, 1), (2, 2), (5, 8), (8, 8), (9, 16), (100, 128)])
    def test_for_dim(self, d, d_pad):
        assert HadamardDim.for_dim(d).d_pad == d_pad

    def test_rejects_non_power_of_two(self):
        with pytest.raises(DimensionError):
            HadamardDim(6)

    def test_pad_appends_zero_columns(self):
        X = np.arange(6.0).reshape(2, 3)
        padded = HadamardDim.for_dim(3).pad(X)
        assert padded.shape == (2, 4)
        np.testing.assert_array_equal(padded[:, :3], X)
        np.testing.assert_array_equal(padded[:, 3], 0.0)

    def test_pad_rejects_wider_input(self):
        with pytest.raises(DimensionError):
            HadamardDim(4).pad(np.ones(5))

    def test_is_power_of_two(self):
        assert [n for n in range(20) if is_power_of_two(n)] == [1, 2, 4, 8, 16]


class TestRngStream:

    def test_same_stream_same_draws(self):
        a = RngStream(7, (1, 2)).generator().standard_normal(10)
        b = RngStream(7, (1, 2)).generator().standard_normal(10)
        np.testing.assert_array_equal(a, b)

    def test_child_streams_differ(self):
        root = RngStream(7)
        a = root.child(0).generator().standard_normal(10)
        b = root.child(1).generator().standard_normal(10)
        assert not np.array_equal(a, b)

    def test_child_equals_explicit_path(self):
        a = RngStream(3).child(4, 5).generator().integers(0, 1000, 5)
        b = RngStream(3, (4, 5)).generator().integers(0, 1000, 5)
        np.testing.assert_array_equal(a, b)

    def test_draws_independent_of_consumption_order(self):
        root = RngStream(11)
        first = root.child(2).generator().standard_normal(4)
        root.child(1).generator().standard_normal(1000)
        again = root.child(2).generator().standard_normal(4)
        np.testing.assert_array_equal(first, again)

    def test_scalar_stream_id(self):
        assert RngStream(1, 5).stream_id == (5,)

    def test_spawn_seed(self):
        s = RngStream(0).child(9).spawn_seed()
        assert s == RngStream(0).child(9).spawn_seed()
        assert 0 <= s < 2 ** 64
        assert s != RngStream(0).child(10).spawn_seed()

    @pytest.mark.parametrize("seed, keys", [(-1, ()), (0, (-2,))])
    def test_rejects_negative(self, seed, keys):
        with pytest.raises(ConfigurationError):
            RngStream(seed, keys)


class TestSamplers:

    def test_rademacher_support_and_balance(self):
        z = sample_rademacher(RngStream(0), 100_000)
        assert set(np.unique(z)) == {-1.0, 1.0}
        assert abs(z.mean()) < 4 / np.sqrt(z.size)

    def test_rademacher_shape(self):
        assert sample_rademacher(RngStream(0), (3, 4)).shape == (3, 4)

    def test_rejects_empty_size(self):
        with pytest.raises(ConfigurationError):
            sample_rademacher(RngStream(0), 0)

    def test_rotated_rademacher_support(self):
        z = sample_complex_weights(ComplexWeightKind.RADEMACHER_ROTATED, RngStream(1), 10_000)
        assert set(np.unique(z)) == {1, -1, 1j, -1j}
        assert abs(np.mean(z * z)) < 5 / np.sqrt(z.size)

    def test_gaussian_pair_moments(self):
        n = 10 ** 6
        z = sample_complex_weights("gaussian_pair", RngStream(2), n)
        assert abs(np.mean(z * z)) <= 5 / np.sqrt(n)
        assert abs(np.mean(np.abs(z) ** 4) - 2.0) <= 0.02
        assert abs(np.mean(np.abs(z) ** 2) - 1.0) <= 0.01

    def test_unit_circle_modulus(self):
        z = sample_complex_weights(ComplexWeightKind.UNIT_CIRCLE, RngStream(3), 1000)
        np.testing.assert_allclose(np.abs(z), 1.0, atol=1e-15)

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError, match="unknown complex weight kind"):
            sample_complex_weights("cauchy", RngStream(0), 4)


class TestRandomPermutation:

    def test_length_one(self):
        np.testing.assert_array_equal(random_permutation(RngStream(0), 1), [0])

    def test_bijection(self):
        perm = random_permutation(RngStream(5), 64)
        np.testing.assert_array_equal(np.sort(perm), np.arange(64))

    def test_uniform_over_three(self):
        trials = 12_000
        counts = {p: 0 for p in itertools.permutations(range(3))}
        root = RngStream(8)
        for t in range(trials):
            counts[tuple(random_permutation(root.child(t), 3))] += 1
        sigma = np.sqrt(trials * (1 / 6) * (5 / 6))
        for c in counts.values():
            assert abs(c - trials / 6) < 4 * sigma

    def test_rejects_zero(self):
        with pytest.raises(ConfigurationError):
            random_permutation(RngStream(0), 0)
