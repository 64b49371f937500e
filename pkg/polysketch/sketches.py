"""
Unstructured real and complex polynomial sketches

A sketch of degree p with D features maps x to
    Phi(x)_l = D^{-1/2} prod_{i=1..p} w_{i,l}^T x
with i.i.d. weight vectors satisfying E[w conj(w)^T] = I. The approximate
kernel k_hat(x, y) = Phi(x)^T conj(Phi(y)) is unbiased for (x^T y)^p.
Random Fourier features for the Gaussian kernel live here as well.
"""
import logging
from dataclasses import dataclass

import numpy as np

from polysketch.errors import ConfigurationError, DimensionError
from polysketch.models import FieldKind, SketchFamily, SketchSpec
from polysketch.numerics import (
    ComplexWeightKind,
    RngStream,
    sample_complex_weights,
    sample_rademacher,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D block of (possibly complex) random features, one row per point"""
    values: np.ndarray
    is_real: bool

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got shape {values.shape}")
        values = values.astype(np.complex128, copy=False)
        if self.is_real and np.any(values.imag != 0):
            raise ConfigurationError("real feature matrix carries nonzero imaginary parts")
        object.__setattr__(self, 'values', values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def gram(self, other: "FeatureMatrix" = None) -> np.ndarray:
        """Approximate kernel matrix K_hat[i, j] = Phi(x_i)^T conj(Phi(y_j))"""
        other = self if other is None else other
        if other.width != self.width:
            raise DimensionError(f"feature widths differ: {self.width} vs {other.width}")
        return self.values @ other.values.conj().T

    def diag(self) -> np.ndarray:
        """k_hat(x_i, x_i) for every row, real and nonnegative"""
        return np.sum(np.abs(self.values) ** 2, axis=1)

    def scale_rows(self, g: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.values * np.asarray(g, dtype=np.float64)[:, None], self.is_real)

    @classmethod
    def hstack(cls, blocks) -> "FeatureMatrix":
        blocks = list(blocks)
        return cls(np.hstack([b.values for b in blocks]), all(b.is_real for b in blocks))


def as_rows(X, d: int = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionError(f"expected an N x d matrix, got shape {X.shape}")
    if d is not None and X.shape[1] != d:
        raise DimensionError(f"expected {d} columns, got {X.shape[1]}")
    return X


def exact_polynomial_kernel(x, y, p: int, nu: float = 0.0) -> float:
    """(x^T y + nu)^p"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"input shapes differ: {x.shape} vs {y.shape}")
    return float((x @ y + nu) ** p)


def augment_inhomogeneous(x, nu: float) -> np.ndarray:
    """
    Append sqrt(nu) so that the homogeneous kernel of the result is (x^T y + nu)^p

    Works on a single vector or on the rows of a matrix.
    """
    if nu < 0:
        raise ConfigurationError(f"nu must be nonnegative, got {nu}")
    x = np.asarray(x, dtype=np.float64)
    tail = np.full(x.shape[:-1] + (1,), np.sqrt(nu))
    return np.concatenate([x, tail], axis=-1)


def moments_kind(spec: SketchSpec):
    """Weight construction used for a spec (None for real weights)"""
    if spec.is_real:
        return None
    if spec.family is SketchFamily.GAUSSIAN:
        return ComplexWeightKind.GAUSSIAN_PAIR
    return ComplexWeightKind.RADEMACHER_ROTATED


@dataclass(frozen=True)
class UnstructuredSketch:
    """p x D x d weight tensor of an i.i.d. polynomial sketch"""
    spec: SketchSpec
    weights: np.ndarray

    def apply(self, X) -> FeatureMatrix:
        return apply_sketch(self, X)


def build_unstructured_sketch(spec: SketchSpec) -> UnstructuredSketch:
    """
    Draw the weights of an unstructured sketch

    Degree i draws its D x d weight block from stream (seed, i), so the weights
    of one degree do not depend on the others.

    Args:
        spec: Sketch description (gaussian or rademacher family)

    Returns:
        UnstructuredSketch with float64 (real) or complex128 (complex) weights
    """
    if spec.family is SketchFamily.TENSOR_SRHT:
        raise ConfigurationError("use build_tensor_srht for the tensor_srht family")
    root = RngStream(spec.seed)
    shape = (spec.num_features, spec.input_dim)
    kind = moments_kind(spec)

    blocks = []
    for i in range(spec.degree):
        stream = root.child(i)
        if kind is not None:
            blocks.append(sample_complex_weights(kind, stream, shape))
        elif spec.family is SketchFamily.RADEMACHER:
            blocks.append(sample_rademacher(stream, shape))
        else:
            blocks.append(stream.generator().standard_normal(shape))
    return UnstructuredSketch(spec, np.stack(blocks))


def apply_sketch(sk: UnstructuredSketch, X) -> FeatureMatrix:
    """Features D^{-1/2} prod_i (W_i x) for every row x of X"""
    spec = sk.spec
    X = as_rows(X, spec.input_dim)
    out = np.ones((X.shape[0], spec.num_features), dtype=sk.weights.dtype)
    for W in sk.weights:
        out = out * (X @ W.T)
    return FeatureMatrix(out / np.sqrt(spec.num_features), spec.is_real)


def approx_kernel(phi_x, phi_y) -> complex:
    """k_hat(x, y) = Phi(x)^T conj(Phi(y)); take .real for the kernel estimate"""
    phi_x = np.asarray(phi_x)
    phi_y = np.asarray(phi_y)
    if phi_x.shape != phi_y.shape:
        raise DimensionError(f"feature lengths differ: {phi_x.shape} vs {phi_y.shape}")
    return np.complex128(np.sum(phi_x * np.conj(phi_y)))


def rff_features(lengthscale: float, D: int, d: int, field: FieldKind, seed: int, X,
                 variance: float = 1.0) -> FeatureMatrix:
    """
    Random Fourier features of variance * exp(-||x - y||^2 / (2 l^2))

    Args:
        lengthscale: Kernel length scale l
        D: Output width (even for the real variant)
        d: Input dimension
        field: real uses sqrt(2/D)[cos, sin] with D/2 frequencies,
            complex uses sqrt(1/D) exp(i w^T x) with D frequencies
        seed: Frequencies are drawn from stream (seed, 0), so calls with the
            same seed share them
        X: N x d inputs
        variance: Kernel amplitude

    Returns:
        FeatureMatrix N x D
    """
    field = FieldKind(field)
    if D < 1:
        raise ConfigurationError(f"D must be positive, got {D}")
    if field is FieldKind.REAL and D % 2:
        raise ConfigurationError(f"real random Fourier features need an even D, got {D}")
    X = as_rows(X, d)
    n_freq = D // 2 if field is FieldKind.REAL else D
    omega = RngStream(seed).child(0).generator().standard_normal((n_freq, d)) / lengthscale
    Z = X @ omega.T
    amp = np.sqrt(variance)
    if field is FieldKind.REAL:
        return FeatureMatrix(amp * np.sqrt(2.0 / D) * np.hstack([np.cos(Z), np.sin(Z)]), True)
    return FeatureMatrix(amp * np.sqrt(1.0 / D) * np.exp(1j * Z), False)
