"""
Closed-form variances of polynomial sketches

All functions broadcast over leading axes, so x and y may be single vectors
of shape (d,) or stacks of pairs of shape (..., d). Variances are returned
for a single feature; divide by D for D unstructured features.

For weights z = a + ib with E[a^2] = q and E[|z|^4] = m4, one feature of a
degree-n sketch has variance

    (m4 S + |x|^2 |y|^2 - S + ((2q - 1)^2 + 1)((x^T y)^2 - S))^n - (x^T y)^(2n)

with S = sum_k x_k^2 y_k^2.
"""
import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from polysketch.errors import ConfigurationError, DimensionError, NumericalError
from polysketch.models import FieldKind, SketchFamily


@dataclass(frozen=True)
class SketchMoments:
    """Second moment q = E[Re(z)^2] and fourth moment m4 = E[|z|^4] of a weight"""
    q: float
    m4: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ConfigurationError(f"q must lie in [0, 1], got {self.q}")
        if self.m4 < 1.0:
            raise ConfigurationError(f"m4 must be at least 1, got {self.m4}")


RADEMACHER_REAL = SketchMoments(q=1.0, m4=1.0)
GAUSSIAN_REAL = SketchMoments(q=1.0, m4=3.0)
RADEMACHER_COMPLEX = SketchMoments(q=0.5, m4=1.0)
GAUSSIAN_COMPLEX = SketchMoments(q=0.5, m4=2.0)

PRESETS: Dict[str, SketchMoments] = {
    'rademacher_real': RADEMACHER_REAL,
    'gaussian_real': GAUSSIAN_REAL,
    'rademacher_complex': RADEMACHER_COMPLEX,
    'gaussian_complex': GAUSSIAN_COMPLEX,
}


def moments_for(family: SketchFamily, field: FieldKind) -> SketchMoments:
    """Moments of the weights a sketch family draws (TensorSRHT weights have unit modulus)"""
    family = SketchFamily(family)
    field = FieldKind(field)
    if family is SketchFamily.GAUSSIAN:
        return GAUSSIAN_REAL if field is FieldKind.REAL else GAUSSIAN_COMPLEX
    return RADEMACHER_REAL if field is FieldKind.REAL else RADEMACHER_COMPLEX


@dataclass(frozen=True)
class PairStats:
    """Inner product x^T y, |x|^2 |y|^2 and S = sum_k x_k^2 y_k^2 of input pairs"""
    inner: np.ndarray
    norms: np.ndarray
    cross: np.ndarray

    @classmethod
    def of(cls, x, y) -> "PairStats":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape[-1] != y.shape[-1]:
            raise DimensionError(f"input dimensions differ: {x.shape[-1]} vs {y.shape[-1]}")
        x2 = x * x
        y2 = y * y
        return cls(
            inner=np.sum(x * y, axis=-1),
            norms=np.sum(x2, axis=-1) * np.sum(y2, axis=-1),
            cross=np.sum(x2 * y2, axis=-1),
        )


@dataclass(frozen=True)
class VarianceTerms:
    """Single-feature variance, within-block covariance and same-block pair count"""
    V: np.ndarray
    cov: np.ndarray
    c_pairs: int


def variance_from_stats(stats: PairStats, n: int, moments: SketchMoments) -> np.ndarray:
    s = stats.cross
    base = (moments.m4 * s + stats.norms - s
            + ((2.0 * moments.q - 1.0) ** 2 + 1.0) * (stats.inner ** 2 - s))
    return np.maximum(base ** n - stats.inner ** (2 * n), 0.0)


def covariance_from_stats(stats: PairStats, n: int, d: int, moments: SketchMoments) -> np.ndarray:
    """Covariance of two distinct features of one TensorSRHT block"""
    v1 = variance_from_stats(stats, 1, moments)
    return (stats.inner ** 2 - v1 / (d - 1)) ** n - stats.inner ** (2 * n)


def var_unstructured(x, y, n: int, moments: SketchMoments):
    """Variance of one feature of an unstructured degree-n sketch"""
    if n < 1:
        raise ConfigurationError(f"degree must be positive, got {n}")
    return variance_from_stats(PairStats.of(x, y), n, moments)


def sigma_sq_bound(x, y, p: int, q: float):
    """
    Scaled variance constant of the concentration bound

    The m4 = 1 variance divided by |x|^{2p} |y|^{2p}.
    """
    stats = PairStats.of(x, y)
    if np.any(stats.norms <= 0):
        raise NumericalError("sigma^2 bound needs nonzero input norms")
    V = variance_from_stats(stats, p, SketchMoments(q=q, m4=1.0))
    return V / stats.norms ** p


def bernstein_feature_count(sigma_sq: float, epsilon: float, delta: float) -> int:
    """
    Smallest D with D >= 2 (2 / (3 eps) + sigma^2 / eps^2) log(2 / delta)

    Args:
        sigma_sq: Scaled variance constant from sigma_sq_bound
        epsilon: Absolute error tolerance
        delta: Failure probability, 0 < delta < 2

    Returns:
        Number of features
    """
    if epsilon <= 0 or delta <= 0:
        raise ConfigurationError(f"epsilon and delta must be positive, got {epsilon}, {delta}")
    if delta >= 2:
        raise ConfigurationError(f"delta must be below 2, got {delta}")
    if sigma_sq < 0:
        raise ConfigurationError(f"sigma^2 must be nonnegative, got {sigma_sq}")
    bound = 2.0 * (2.0 / (3.0 * epsilon) + sigma_sq / epsilon ** 2) * math.log(2.0 / delta)
    return max(1, math.ceil(bound))


def c_pairs(D: int, d: int) -> int:
    """Ordered same-block index pairs l != l' of a D-feature sketch with block size d"""
    if D < 1 or d < 1:
        raise ConfigurationError(f"D and d must be positive, got {D}, {d}")
    full, rest = divmod(D, d)
    return full * d * (d - 1) + rest * (rest - 1)


def _check_structured_dim(d: int):
    if d < 2:
        raise DimensionError(f"TensorSRHT variance needs a Hadamard size d >= 2, got {d}")


def variance_terms(x, y, n: int, D: int, d: int, moments: SketchMoments) -> VarianceTerms:
    _check_structured_dim(d)
    stats = PairStats.of(x, y)
    return VarianceTerms(
        V=variance_from_stats(stats, n, moments),
        cov=covariance_from_stats(stats, n, d, moments),
        c_pairs=c_pairs(D, d),
    )


def var_tensor_srht(x, y, n: int, D: int, d: int, moments: SketchMoments):
    """
    Variance of a D-feature TensorSRHT estimate with Hadamard size d

    V_n / D + c(D, d) / D^2 * Cov_n, clamped at zero
    """
    t = variance_terms(x, y, n, D, d, moments)
    return np.maximum(t.V / D + t.c_pairs / D ** 2 * t.cov, 0.0)


def surrogate_from_terms(V, cov, D: int, d: int):
    """Convex, decreasing-in-D replacement of the TensorSRHT variance"""
    V = np.asarray(V, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    spread = (V + (d - 1) * cov) / D
    if D > d:
        return spread
    return np.where(cov > 0, spread, (V - cov) / D + cov)


def surrogate_var_tensor_srht(x, y, n: int, D: int, d: int, moments: SketchMoments):
    t = variance_terms(x, y, n, D, d, moments)
    return surrogate_from_terms(t.V, t.cov, D, d)
