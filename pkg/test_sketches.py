"""Tests for unstructured polynomial sketches and random Fourier features"""
import numpy as np
import pytest

from polysketch.errors import ConfigurationError, DimensionError
from polysketch.models import FieldKind, SketchSpec
from polysketch.sketches import (
    FeatureMatrix,
    approx_kernel,
    apply_sketch,
    augment_inhomogeneous,
    build_unstructured_sketch,
    exact_polynomial_kernel,
    rff_features,
)
from polysketch.variance import moments_for, var_unstructured


def _spec(family="rademacher", field="real", p=2, D=16, d=4, seed=0) -> SketchSpec:
    return SketchSpec(family=family, field=field, degree=p, num_features=D, input_dim=d, seed=seed)


def _per_feature_estimates(spec: SketchSpec, x, y) -> np.ndarray:
    """D complex single-feature kernel estimates; the features of one sketch are i.i.d."""
    sketch = build_unstructured_sketch(spec)
    phi = sketch.apply(np.vstack([x, y])).values
    return spec.num_features * phi[0] * np.conj(phi[1])


def _unit_pair(seed: int, d: int):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, d))
    return x / np.linalg.norm(x), y / np.linalg.norm(y)


class TestExactKernel:

    def test_orthogonal_inputs(self):
        assert exact_polynomial_kernel([1, 0], [0, 1], 3) == 0.0

    def test_unit_inner_product(self):
        x = np.ones(2) / np.sqrt(2)
        assert exact_polynomial_kernel(x, x, 2) == pytest.approx(1.0, abs=1e-15)

    def test_inhomogeneous_hand_value(self):
        assert exact_polynomial_kernel([1, 2], [3, 4], 2, nu=1.0) == 144.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            exact_polynomial_kernel([1, 2], [1, 2, 3], 2)


class TestAugmentInhomogeneous:

    def test_zero_nu_appends_zero(self):
        np.testing.assert_array_equal(augment_inhomogeneous([1.0, 2.0], 0.0), [1.0, 2.0, 0.0])

    def test_square_root_of_nu(self):
        np.testing.assert_array_equal(augment_inhomogeneous([1.0], 4.0), [1.0, 2.0])

    def test_homogeneous_kernel_of_augmented_inputs(self, rng):
        for _ in range(20):
            x, y = rng.standard_normal((2, 5))
            nu = rng.uniform(0, 3)
            p = int(rng.integers(1, 6))
            xa, ya = augment_inhomogeneous(x, nu), augment_inhomogeneous(y, nu)
            assert exact_polynomial_kernel(xa, ya, p) == pytest.approx(
                exact_polynomial_kernel(x, y, p, nu), rel=1e-12, abs=1e-12)

    def test_matrix_rows(self):
        out = augment_inhomogeneous(np.ones((3, 2)), 9.0)
        np.testing.assert_array_equal(out[:, 2], 3.0)

    def test_negative_nu(self):
        with pytest.raises(ConfigurationError):
            augment_inhomogeneous([1.0], -0.5)


class TestBuildSketch:

    def test_rademacher_real_entries(self):
        sk = build_unstructured_sketch(_spec(p=3))
        assert sk.weights.shape == (3, 16, 4)
        assert set(np.unique(sk.weights)) == {-1.0, 1.0}

    def test_rademacher_complex_entries(self):
        sk = build_unstructured_sketch(_spec(field="complex"))
        assert set(np.unique(sk.weights)) <= {1, -1, 1j, -1j}

    def test_gaussian_complex_is_complex(self):
        sk = build_unstructured_sketch(_spec(family="gaussian", field="complex"))
        assert np.iscomplexobj(sk.weights)
        assert np.any(sk.weights.imag != 0)

    def test_same_seed_same_weights(self):
        a = build_unstructured_sketch(_spec(family="gaussian", seed=42))
        b = build_unstructured_sketch(_spec(family="gaussian", seed=42))
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_different_seed_different_weights(self):
        a = build_unstructured_sketch(_spec(family="gaussian", seed=1))
        b = build_unstructured_sketch(_spec(family="gaussian", seed=2))
        assert not np.array_equal(a.weights, b.weights)

    def test_degree_blocks_independent_of_degree(self):
        low = build_unstructured_sketch(_spec(p=2, seed=5))
        high = build_unstructured_sketch(_spec(p=4, seed=5))
        np.testing.assert_array_equal(low.weights, high.weights[:2])

    def test_rejects_tensor_srht(self):
        with pytest.raises(ConfigurationError):
            build_unstructured_sketch(_spec(family="tensor_srht"))

    @pytest.mark.parametrize("field", [{"degree": 0}, {"num_features": 0}, {"input_dim": 0}])
    def test_spec_rejects_nonpositive(self, field):
        base = dict(family="rademacher", field="real", degree=1, num_features=1, input_dim=1)
        with pytest.raises(ValueError):
            SketchSpec(**{**base, **field})


class TestApplySketch:

    def test_one_dimensional_rademacher_is_exact(self):
        sk = build_unstructured_sketch(_spec(p=1, D=1, d=1, seed=3))
        phi = apply_sketch(sk, np.array([[1.5], [-2.0]])).values
        assert approx_kernel(phi[0], phi[1]).real == pytest.approx(-3.0, abs=1e-15)

    def test_empty_input(self):
        sk = build_unstructured_sketch(_spec(D=5))
        out = apply_sketch(sk, np.empty((0, 4)))
        assert out.shape == (0, 5)

    def test_dimension_mismatch(self):
        sk = build_unstructured_sketch(_spec(d=4))
        with pytest.raises(DimensionError):
            apply_sketch(sk, np.ones((2, 3)))

    def test_real_pipeline_has_zero_imaginary_parts(self, rng):
        sk = build_unstructured_sketch(_spec(family="gaussian", p=3))
        out = sk.apply(rng.standard_normal((10, 4)))
        assert out.is_real
        assert np.all(out.values.imag == 0)

    def test_gram_matches_pairwise_approx_kernel(self, rng):
        sk = build_unstructured_sketch(_spec(field="complex"))
        F = sk.apply(rng.standard_normal((3, 4)))
        K = F.gram()
        for i in range(3):
            for j in range(3):
                assert K[i, j] == pytest.approx(approx_kernel(F.values[i], F.values[j]), abs=1e-12)

    CASES = ([("rademacher", f, p) for f in ("real", "complex") for p in (1, 2, 3, 5)]
             + [("gaussian", f, p) for f in ("real", "complex") for p in (1, 2)])

    @pytest.mark.slow
    @pytest.mark.parametrize("family, field, p", CASES)
    def test_unbiased_with_formula_variance(self, family, field, p):
        R = 200_000
        x, y = _unit_pair(100 + p, 4)
        spec = _spec(family=family, field=field, p=p, D=R, d=4, seed=7)
        est = _per_feature_estimates(spec, x, y)
        V = float(var_unstructured(x, y, p, moments_for(family, field)))

        assert abs(est.mean() - (x @ y) ** p) <= 4 * np.sqrt(V / R) + 1e-12

        # variance of the complex estimate, real and imaginary parts together
        sq_dev = np.abs(est - est.mean()) ** 2
        emp_var = sq_dev.mean()
        se = np.sqrt(max(np.mean(sq_dev ** 2) - emp_var ** 2, 0.0) / R)
        assert abs(emp_var - V) <= 4 * se + 1e-12

    @pytest.mark.slow
    @pytest.mark.parametrize("family", ["rademacher", "gaussian"])
    def test_complex_variance_counts_imaginary_part(self, family):
        R = 200_000
        x, y = np.eye(4)[0], np.eye(4)[1]
        est = _per_feature_estimates(_spec(family=family, field="complex", p=2, D=R, seed=5), x, y)
        V = float(var_unstructured(x, y, 2, moments_for(family, "complex")))
        assert V == pytest.approx(1.0)
        full = np.mean(np.abs(est - est.mean()) ** 2)
        real_only = np.real(est).var()
        assert full == pytest.approx(V, rel=0.05)
        assert real_only == pytest.approx(V / 2, rel=0.05)

    @pytest.mark.slow
    @pytest.mark.parametrize("field", ["real", "complex"])
    def test_unbiased_gaussian_degree_three(self, field):
        R = 200_000
        x, y = _unit_pair(103, 4)
        est = _per_feature_estimates(_spec(family="gaussian", field=field, p=3, D=R, seed=8), x, y)
        V = float(var_unstructured(x, y, 3, moments_for("gaussian", field)))
        assert abs(est.mean() - (x @ y) ** 3) <= 4 * np.sqrt(V / R)


class TestApproxKernel:

    def test_self_inner_product_nonnegative(self, rng):
        F = build_unstructured_sketch(_spec(family="gaussian")).apply(rng.standard_normal(4))
        k = approx_kernel(F.values[0], F.values[0])
        assert k.imag == 0 and k.real >= 0

    def test_hermitian_symmetry(self, rng):
        F = build_unstructured_sketch(_spec(field="complex", p=3)).apply(rng.standard_normal((2, 4)))
        a = approx_kernel(F.values[0], F.values[1])
        b = approx_kernel(F.values[1], F.values[0])
        assert a == pytest.approx(np.conj(b), abs=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            approx_kernel(np.ones(3), np.ones(4))


class TestFeatureMatrix:

    def test_real_matrix_rejects_imaginary_parts(self):
        with pytest.raises(ConfigurationError):
            FeatureMatrix(np.array([[1 + 1j]]), is_real=True)

    def test_hstack_and_diag(self):
        a = FeatureMatrix(np.array([[1.0], [2.0]]), True)
        b = FeatureMatrix(np.array([[1j], [0.0]]), False)
        stacked = FeatureMatrix.hstack([a, b])
        assert stacked.shape == (2, 2) and not stacked.is_real
        np.testing.assert_allclose(stacked.diag(), [2.0, 4.0])

    def test_scale_rows(self):
        F = FeatureMatrix(np.ones((2, 3)), True).scale_rows(np.array([2.0, 0.5]))
        np.testing.assert_array_equal(F.values.real, [[2, 2, 2], [0.5, 0.5, 0.5]])


class TestRandomFourierFeatures:

    def test_real_features_have_unit_norm(self, rng):
        X = rng.standard_normal((5, 3))
        F = rff_features(1.3, 64, 3, FieldKind.REAL, 0, X)
        assert F.is_real
        np.testing.assert_allclose(F.diag(), 1.0, atol=1e-12)

    def test_complex_modulus(self, rng):
        F = rff_features(0.7, 32, 3, "complex", 1, rng.standard_normal((4, 3)))
        np.testing.assert_allclose(np.abs(F.values), 1 / np.sqrt(32), atol=1e-15)

    def test_variance_scales_diagonal(self, rng):
        F = rff_features(1.0, 16, 2, FieldKind.REAL, 0, rng.standard_normal((3, 2)), variance=2.5)
        np.testing.assert_allclose(F.diag(), 2.5, atol=1e-12)

    def test_odd_real_width_rejected(self):
        with pytest.raises(ConfigurationError, match="even"):
            rff_features(1.0, 3, 2, FieldKind.REAL, 0, np.ones((1, 2)))

    def test_seed_shares_frequencies(self, rng):
        X = rng.standard_normal((4, 3))
        a = rff_features(1.0, 8, 3, FieldKind.REAL, 9, X)
        b = rff_features(1.0, 8, 3, FieldKind.REAL, 9, X[:2])
        np.testing.assert_array_equal(a.values[:2], b.values)

    @pytest.mark.parametrize("field", ["real", "complex"])
    def test_unbiased_for_gaussian_kernel(self, field):
        D, l = 40_000, 1.5
        x = np.array([0.3, -0.2, 0.8])
        y = np.array([-0.1, 0.4, 0.5])
        F = rff_features(l, D, 3, field, 11, np.vstack([x, y])).values
        if field == "real":
            half = D // 2
            est = (D / 2) * (F[0, :half] * F[1, :half] + F[0, half:] * F[1, half:]).real
        else:
            est = np.real(D * F[0] * np.conj(F[1]))
        target = np.exp(-np.sum((x - y) ** 2) / (2 * l ** 2))
        assert abs(est.mean() - target) <= 4 * est.std() / np.sqrt(est.size)
