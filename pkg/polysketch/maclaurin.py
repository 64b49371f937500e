"""
Maclaurin features for dot-product and Gaussian kernels

A dot-product kernel k(x, y) = sum_n a_n (x^T y)^n (a_n >= 0) is approximated
by a constant sqrt(a_0) feature plus one polynomial sketch per degree. Two
ways of splitting the feature budget across degrees are provided:

- random Maclaurin: degrees drawn i.i.d. from mu(n) ~ c^-(n+1), truncated to
  {1..p_max}, with importance weights a_n / mu(n);
- optimized Maclaurin: a truncation degree p* and counts D_1..D_p* chosen to
  minimize an empirical bias + variance objective, using the greedy
  incremental algorithm for each candidate p.

The Gaussian kernel is handled as an exponential kernel weighted by the
per-point prefactor g(x) = exp(-|x|^2 / (2 l^2)).
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from polysketch.config import get_config
from polysketch.errors import ConfigurationError, DimensionError
from polysketch.models import (
    Allocation,
    FieldKind,
    KernelKind,
    KernelSpec,
    SketchFamily,
    SketchSpec,
)
from polysketch.numerics import HadamardDim, RngStream
from polysketch.sketches import FeatureMatrix, as_rows, build_unstructured_sketch
from polysketch.tensor_srht import build_tensor_srht
from polysketch.variance import (
    PairStats,
    covariance_from_stats,
    moments_for,
    surrogate_from_terms,
    variance_from_stats,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Kernel expansions
# ---------------------------------------------------------------------------

def maclaurin_coefficients(spec: KernelSpec, n: int) -> float:
    """Coefficient a_n of (x^T y)^n"""
    if n < 0:
        raise ConfigurationError(f"degree must be nonnegative, got {n}")
    if spec.kind is KernelKind.POLYNOMIAL:
        return spec.polynomial_coefficient(n) if n <= spec.degree else 0.0
    return spec.variance / (math.factorial(n) * spec.lengthscale ** (2 * n))


def coefficient_vector(spec: KernelSpec, p_max: int) -> np.ndarray:
    """a_0..a_{p_max}"""
    return np.array([maclaurin_coefficients(spec, n) for n in range(p_max + 1)])


def kernel_prefactor(spec: KernelSpec, X) -> np.ndarray:
    """g(x) per row: exp(-|x|^2 / (2 l^2)) for the Gaussian kernel, 1 otherwise"""
    X = as_rows(X)
    if not spec.has_prefactor:
        return np.ones(X.shape[0])
    return np.exp(-np.sum(X * X, axis=1) / (2.0 * spec.lengthscale ** 2))


def exact_kernel_matrix(spec: KernelSpec, X, Y=None) -> np.ndarray:
    """Exact kernel matrix k(x_i, y_j)"""
    X = as_rows(X)
    Y = X if Y is None else as_rows(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"input dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    if spec.kind is KernelKind.POLYNOMIAL:
        return spec.variance * (spec.gamma * (X @ Y.T) + spec.nu) ** spec.degree
    if spec.kind is KernelKind.EXPONENTIAL:
        return spec.variance * np.exp((X @ Y.T) / spec.lengthscale ** 2)
    return spec.variance * np.exp(-cdist(X, Y, 'sqeuclidean') / (2.0 * spec.lengthscale ** 2))


def kernel_diag(spec: KernelSpec, X) -> np.ndarray:
    """k(x, x) per row"""
    X = as_rows(X)
    sq = np.sum(X * X, axis=1)
    if spec.kind is KernelKind.POLYNOMIAL:
        return spec.variance * (spec.gamma * sq + spec.nu) ** spec.degree
    if spec.kind is KernelKind.EXPONENTIAL:
        return spec.variance * np.exp(sq / spec.lengthscale ** 2)
    return np.full(X.shape[0], spec.variance)


def truncated_expectation_diag(spec: KernelSpec, X, degrees: Iterable[int]) -> np.ndarray:
    """E[k_hat(x, x)] = g(x)^2 (a_0 + sum_{n in degrees} a_n |x|^(2n))"""
    X = as_rows(X)
    sq = np.sum(X * X, axis=1)
    total = np.full(X.shape[0], maclaurin_coefficients(spec, 0))
    for n in degrees:
        total = total + maclaurin_coefficients(spec, n) * sq ** n
    return kernel_prefactor(spec, X) ** 2 * total


def bias_correction(spec: KernelSpec, degrees: Iterable[int]) -> Callable[[np.ndarray], np.ndarray]:
    """
    Predictive-variance correction k(x, x) - E[k_hat(x, x)], clamped at zero

    Args:
        spec: Target kernel
        degrees: Degrees >= 1 present in the feature map

    Returns:
        Callable mapping an M x d matrix to M nonnegative corrections
    """
    degrees = sorted(set(int(n) for n in degrees))

    def correction(X):
        return np.maximum(kernel_diag(spec, X) - truncated_expectation_diag(spec, X, degrees), 0.0)

    return correction


def included_degrees(counts) -> List[int]:
    return [n for n, c in enumerate(counts, start=1) if c > 0]


def median_heuristic(X) -> float:
    """Median pairwise Euclidean distance, a common Gaussian length scale"""
    X = as_rows(X)
    if X.shape[0] < 2:
        raise ConfigurationError("median heuristic needs at least two points")
    dist = pdist(X)
    positive = dist[dist > 0]
    if positive.size == 0:
        raise ConfigurationError("median heuristic is undefined for identical points")
    return float(np.median(dist))


# ---------------------------------------------------------------------------
# Random Maclaurin
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomMaclaurinDraw:
    """Sampled degree counts D_1..D_{p_max} and the truncated measure mu"""
    counts: np.ndarray
    mu: np.ndarray

    @property
    def num_features(self) -> int:
        return int(self.counts.sum())

    def block_weights(self, coefs: np.ndarray) -> np.ndarray:
        """
        Weight of each degree block's inner product, D_n a_n / (D mu(n))

        With per-block 1/sqrt(D_n) scaling inside the sketches this gives
        the unbiased estimate a_0 + sum_n a_n (x^T y)^n over n <= p_max.
        """
        a = np.asarray(coefs, dtype=np.float64)[1:len(self.counts) + 1]
        return self.counts * a / (self.num_features * self.mu)


def degree_measure(p_max: int, c: float) -> np.ndarray:
    """mu(n) proportional to c^-(n+1), renormalized on {1..p_max}"""
    if c <= 1:
        raise ConfigurationError(f"random Maclaurin base must exceed 1, got {c}")
    if p_max < 1:
        raise ConfigurationError(f"p_max must be positive, got {p_max}")
    weights = float(c) ** -(np.arange(1, p_max + 1) + 1.0)
    return weights / weights.sum()


def random_maclaurin_assign(D_total: int, p_max: int, c: float,
                            stream: RngStream) -> RandomMaclaurinDraw:
    """Draw the degree of each of D_total features i.i.d. from the truncated measure"""
    if D_total < 1:
        raise ConfigurationError(f"D_total must be positive, got {D_total}")
    mu = degree_measure(p_max, c)
    degrees = stream.generator().choice(p_max, size=D_total, p=mu)
    counts = np.bincount(degrees, minlength=p_max)
    logger.debug(f"random Maclaurin counts: {counts.tolist()}")
    return RandomMaclaurinDraw(counts=counts, mu=mu)


# ---------------------------------------------------------------------------
# Optimized Maclaurin
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectiveTables:
    """
    U-statistics of the empirical objective, computed once per sample

    coefs:     a_0..a_{p_max}
    var_sums:  S_n, pair mean of prefactor-weighted single-feature variances, n = 1..p_max
    cov_sums:  same for the within-block TensorSRHT covariance (None if unstructured)
    bias:      bias[p] = pair mean of squared truncation residuals using degrees 0..p
    d_pad:     Hadamard size used by the structured surrogate
    """
    coefs: np.ndarray
    var_sums: np.ndarray
    bias: np.ndarray
    m: int
    cov_sums: Optional[np.ndarray] = None
    d_pad: int = 1

    @property
    def p_max(self) -> int:
        return len(self.var_sums)

    @property
    def structured(self) -> bool:
        return self.cov_sums is not None

    def active(self, n: int) -> bool:
        return self.coefs[n] > 0

    def variance_term(self, n: int, D: int) -> float:
        """Variance contributed by degree n with D features"""
        a2 = self.coefs[n] ** 2
        if self.structured:
            return float(a2 * surrogate_from_terms(self.var_sums[n - 1], self.cov_sums[n - 1],
                                                   D, self.d_pad))
        return float(a2 * self.var_sums[n - 1] / D)


def precompute_objective_tables(X_sample, spec: KernelSpec, family: SketchFamily,
                                p_max: int, field: FieldKind = FieldKind.REAL,
                                chunk_size: int = 1024) -> ObjectiveTables:
    """
    Pair means over i != j of the variance, covariance and bias terms

    Gaussian kernels weight variance terms by g(x_i)^2 g(x_j)^2 and the
    truncated expansion by g(x_i) g(x_j). Rows are processed in chunks so
    memory stays at O(chunk_size * m).

    Args:
        X_sample: m x d inputs (duplicates allowed)
        spec: Target kernel
        family: Sketch family the features will use
        p_max: Largest degree tabulated
        field: Weight field of the sketch
        chunk_size: Rows per chunk

    Returns:
        ObjectiveTables
    """
    X = as_rows(X_sample)
    m, d = X.shape
    if m < 2:
        raise ConfigurationError(f"objective tables need at least 2 points, got {m}")
    if p_max < 1:
        raise ConfigurationError(f"p_max must be positive, got {p_max}")

    coefs = coefficient_vector(spec, p_max)
    moments = moments_for(family, field)
    d_pad = HadamardDim.for_dim(d).d_pad
    structured = SketchFamily(family) is SketchFamily.TENSOR_SRHT
    if structured and d_pad < 2:
        logger.warning("TensorSRHT with d = 1 has no covariance term; using unstructured tables")
        structured = False

    g = kernel_prefactor(spec, X)
    sq = X * X
    norms = sq.sum(axis=1)
    var_sums = np.zeros(p_max)
    cov_sums = np.zeros(p_max) if structured else None
    bias = np.zeros(p_max + 1)

    for start in range(0, m, chunk_size):
        stop = min(start + chunk_size, m)
        stats = PairStats(inner=X[start:stop] @ X.T,
                          norms=np.outer(norms[start:stop], norms),
                          cross=sq[start:stop] @ sq.T)
        off = np.ones((stop - start, m), dtype=bool)
        off[np.arange(stop - start), np.arange(start, stop)] = False
        gg = np.outer(g[start:stop], g)
        w = np.where(off, gg ** 2, 0.0)
        K = exact_kernel_matrix(spec, X[start:stop], X)

        partial = coefs[0] * gg
        bias[0] += np.sum(np.where(off, (K - partial) ** 2, 0.0))
        power = np.ones_like(stats.inner)
        for n in range(1, p_max + 1):
            var_sums[n - 1] += np.sum(w * variance_from_stats(stats, n, moments))
            if structured:
                cov_sums[n - 1] += np.sum(w * covariance_from_stats(stats, n, d_pad, moments))
            power = power * stats.inner
            partial = partial + coefs[n] * gg * power
            bias[n] += np.sum(np.where(off, (K - partial) ** 2, 0.0))

    scale = 1.0 / (m * (m - 1))
    logger.debug(f"objective tables: m={m}, p_max={p_max}, structured={structured}")
    return ObjectiveTables(
        coefs=coefs,
        var_sums=var_sums * scale,
        bias=bias * scale,
        m=m,
        cov_sums=None if cov_sums is None else cov_sums * scale,
        d_pad=d_pad,
    )


def _check_counts(tables: ObjectiveTables, counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    if len(counts) > tables.p_max:
        raise ConfigurationError(f"{len(counts)} degrees exceed the tabulated p_max={tables.p_max}")
    for n, c in enumerate(counts, start=1):
        if tables.active(n) and c < 1:
            raise ConfigurationError(f"degree {n} has a_n > 0 but no features")
        if c < 0:
            raise ConfigurationError(f"negative feature count for degree {n}")
    return counts


def objective_variance(tables: ObjectiveTables, counts) -> float:
    """Variance part of the objective for counts D_1..D_p"""
    counts = _check_counts(tables, counts)
    return float(sum(tables.variance_term(n, c)
                     for n, c in enumerate(counts, start=1) if tables.active(n)))


def objective_bias(tables: ObjectiveTables, p: int) -> float:
    """Bias part of the objective when degrees 0..p are included"""
    if not 0 <= p <= tables.p_max:
        raise ConfigurationError(f"degree {p} outside the tabulated range 0..{tables.p_max}")
    return float(tables.bias[p])


def incremental_allocate(p: int, D_total: int, tables: ObjectiveTables,
                         history: Optional[List[float]] = None) -> np.ndarray:
    """
    Greedy allocation of D_total features over degrees 1..p

    Every active degree starts with one feature; each further feature goes to
    the degree whose variance term drops the most (lowest degree on ties).
    The objective is separable and convex in each count, so the result is
    a global minimizer.

    Args:
        p: Truncation degree
        D_total: Features for degrees >= 1
        tables: Precomputed objective tables
        history: If given, receives the objective value after the start and
            after every increment

    Returns:
        Integer counts D_1..D_p (zero for inactive degrees)
    """
    if p > tables.p_max:
        raise ConfigurationError(f"degree {p} exceeds tabulated p_max={tables.p_max}")
    active = [n for n in range(1, p + 1) if tables.active(n)]
    if D_total < len(active):
        raise ConfigurationError(
            f"budget {D_total} is below the {len(active)} active degrees up to {p}")

    counts = np.zeros(p, dtype=np.int64)
    if not active:
        if history is not None:
            history.append(0.0)
        return counts
    counts[np.array(active) - 1] = 1
    terms = np.array([tables.variance_term(n, 1) for n in active])
    if history is not None:
        history.append(float(terms.sum()))

    for _ in range(D_total - len(active)):
        proposed = np.array([tables.variance_term(n, counts[n - 1] + 1) for n in active])
        j = int(np.argmin(proposed - terms))
        counts[active[j] - 1] += 1
        terms[j] = proposed[j]
        if history is not None:
            history.append(float(terms.sum()))
    return counts


def extended_allocate(p_min: int, p_max: int, D_total: int, tables: ObjectiveTables,
                      constant_in_budget: Optional[bool] = None) -> Allocation:
    """
    Choose the truncation degree and counts minimizing bias + variance

    Args:
        p_min: Smallest truncation degree tried
        p_max: Largest truncation degree tried
        D_total: Total feature budget
        tables: Precomputed objective tables (tabulated up to at least p_max)
        constant_in_budget: Reserve one of D_total for the sqrt(a_0) feature;
            defaults to the config.ini setting

    Returns:
        Allocation with the smallest p among minimizers
    """
    if p_min > p_max:
        raise ConfigurationError(f"p_min={p_min} exceeds p_max={p_max}")
    if constant_in_budget is None:
        constant_in_budget = get_config().constant_in_budget
    budget = D_total - 1 if constant_in_budget else D_total

    best = None
    for p in range(max(p_min, 1), p_max + 1):
        n_active = sum(1 for n in range(1, p + 1) if tables.active(n))
        if n_active > budget or (n_active == 0 and budget > 0):
            logger.debug(f"p={p} skipped: {n_active} active degrees for budget {budget}")
            continue
        counts = incremental_allocate(p, budget, tables)
        score = objective_bias(tables, p) + objective_variance(tables, counts)
        logger.debug(f"p={p}: objective {score:.6g}, counts {counts.tolist()}")
        if best is None or score < best.objective:
            best = Allocation(p_star=p, counts=counts.tolist(), objective=score)

    if best is None:
        raise ConfigurationError(
            f"no truncation degree in [{p_min}, {p_max}] fits a budget of {D_total} features")
    logger.info(f"allocation: p*={best.p_star}, counts={best.counts}, objective={best.objective:.6g}")
    return best


# ---------------------------------------------------------------------------
# Feature assembly
# ---------------------------------------------------------------------------

def build_sketch(spec: SketchSpec):
    """Unstructured or TensorSRHT sketch for a spec"""
    if spec.family is SketchFamily.TENSOR_SRHT:
        return build_tensor_srht(spec.degree, spec.num_features, spec.input_dim,
                                 spec.field, spec.seed)
    return build_unstructured_sketch(spec)


def _assemble(spec: KernelSpec, counts, weights, family: SketchFamily, field: FieldKind,
              seed: int, X) -> FeatureMatrix:
    X = as_rows(X)
    family = SketchFamily(family)
    field = FieldKind(field)
    root = RngStream(seed)
    blocks = [FeatureMatrix(np.full((X.shape[0], 1), np.sqrt(maclaurin_coefficients(spec, 0))),
                            True)]
    for n, (D_n, w_n) in enumerate(zip(counts, weights), start=1):
        if D_n == 0:
            continue
        sketch_spec = SketchSpec(family=family, field=field, degree=n, num_features=int(D_n),
                                 input_dim=X.shape[1], seed=root.child(n).spawn_seed())
        features = build_sketch(sketch_spec).apply(X)
        blocks.append(FeatureMatrix(np.sqrt(w_n) * features.values, features.is_real))
    return FeatureMatrix.hstack(blocks).scale_rows(kernel_prefactor(spec, X))


def assemble_features(spec: KernelSpec, alloc: Allocation, family: SketchFamily,
                      field: FieldKind, seed: int, X) -> FeatureMatrix:
    """
    Optimized Maclaurin features [sqrt(a_0), sqrt(a_n) Phi_n(x) ...] times g(x)

    Degree n uses a sketch seeded from stream (seed, n), so the same seed maps
    training and test inputs through the same random features.

    Returns:
        FeatureMatrix of width 1 + sum(alloc.counts)
    """
    coefs = coefficient_vector(spec, alloc.p_star)
    return _assemble(spec, alloc.counts, coefs[1:], family, field, seed, X)


def assemble_random_maclaurin(spec: KernelSpec, draw: RandomMaclaurinDraw, family: SketchFamily,
                              field: FieldKind, seed: int, X) -> FeatureMatrix:
    """Random Maclaurin features with importance weights and the constant slot"""
    coefs = coefficient_vector(spec, len(draw.counts))
    return _assemble(spec, draw.counts, draw.block_weights(coefs), family, field, seed, X)
