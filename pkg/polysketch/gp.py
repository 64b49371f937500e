"""
Gaussian-process regression and classification in random-feature space

With features Phi (N x D, possibly complex) and noise variances sigma^2, the
posterior is computed through the D x D matrix

    B = Phi^H diag(sigma^-2) Phi + I_D

so the N x N kernel matrix is never formed. Predictions take the real part
of the complex posterior mean and variance. Multiclass classification
regresses Dirichlet-transformed labels with one heteroscedastic GP per class
and averages the softmax of latent samples.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.special import softmax

from polysketch.config import get_config
from polysketch.errors import ConfigurationError, DimensionError, NumericalError
from polysketch.numerics import RngStream
from polysketch.sketches import FeatureMatrix, as_rows

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-300


@dataclass(frozen=True)
class NoiseModel:
    """Per-observation noise variances and the initial relative jitter"""
    variances: np.ndarray
    jitter: Optional[float] = None

    def __post_init__(self):
        variances = np.atleast_1d(np.asarray(self.variances, dtype=np.float64))
        if variances.ndim != 1 or not np.all(variances > 0):
            raise ConfigurationError("noise variances must be a vector of positive values")
        object.__setattr__(self, 'variances', variances)

    @classmethod
    def constant(cls, variance: float, n: int, jitter: Optional[float] = None) -> "NoiseModel":
        return cls(np.full(n, float(variance)), jitter)


@dataclass(frozen=True)
class GPFit:
    """Lower Cholesky factor of B and the coefficients B^-1 Phi^H Sigma^-1 y"""
    chol: np.ndarray
    coef: np.ndarray
    is_real: bool
    jitter: float = 0.0
    bias_correction: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def num_features(self) -> int:
        return self.chol.shape[0]


@dataclass(frozen=True)
class PosteriorSummary:
    mean: np.ndarray
    variance: np.ndarray


def _feature_values(features: FeatureMatrix) -> np.ndarray:
    return features.values.real if features.is_real else features.values


def _cholesky_with_jitter(B: np.ndarray, scale: Optional[float] = None,
                          retries: Optional[int] = None) -> Tuple[np.ndarray, float]:
    """
    Lower Cholesky factor of a Hermitian matrix

    Tries B as is, then B + j I with j = scale * trace(B) / D multiplied by 10
    after each failure, at most `retries` escalations.
    """
    cfg = get_config()
    scale = cfg.jitter_scale if scale is None else scale
    retries = cfg.jitter_retries if retries is None else retries
    D = B.shape[0]
    base = scale * float(np.real(np.trace(B))) / D
    attempts = [0.0] + [base * 10.0 ** k for k in range(retries + 1)]

    for jitter in attempts:
        try:
            L = cholesky(B + jitter * np.eye(D), lower=True)
            if jitter:
                logger.warning(f"Cholesky needed jitter {jitter:.3e}")
            return L, jitter
        except LinAlgError:
            logger.debug(f"Cholesky failed with jitter {jitter:.3e}")
    raise NumericalError(
        f"Cholesky of the {D}x{D} system failed after jitter up to {attempts[-1]:.3e} "
        f"(trace {np.real(np.trace(B)):.3e})"
    )


def fit_gp(features: FeatureMatrix, y, noise: NoiseModel,
           bias_correction: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> GPFit:
    """
    Fit the feature-space GP posterior

    Args:
        features: N x D training features
        y: N real targets
        noise: Noise model with N variances
        bias_correction: Optional k(x,x) - E[k_hat(x,x)] closure used by predict

    Returns:
        GPFit

    Raises:
        NumericalError: If B cannot be factorized
    """
    Phi = _feature_values(features)
    y = np.asarray(y, dtype=np.float64)
    N = Phi.shape[0]
    if y.shape != (N,) or noise.variances.shape != (N,):
        raise DimensionError(
            f"{N} feature rows, {y.shape} targets and {noise.variances.shape} noise variances")

    weighted = Phi / noise.variances[:, None]
    B = Phi.conj().T @ weighted + np.eye(Phi.shape[1])
    B = 0.5 * (B + B.conj().T)
    rhs = weighted.conj().T @ y

    L, jitter = _cholesky_with_jitter(B, noise.jitter)
    coef = cho_solve((L, True), rhs)
    logger.debug(f"GP fit: N={N}, D={Phi.shape[1]}, real={features.is_real}")
    return GPFit(chol=L, coef=coef, is_real=features.is_real, jitter=jitter,
                 bias_correction=bias_correction)


def predict(fit: GPFit, features: FeatureMatrix, X=None) -> PosteriorSummary:
    """
    Posterior mean Re(Phi* coef) and variance Re(Phi*(x)^T B^-1 conj(Phi*(x)))

    Args:
        fit: Fitted GP
        features: M x D test features
        X: Test inputs, required when the fit carries a bias correction

    Returns:
        PosteriorSummary with nonnegative variances
    """
    if features.width != fit.num_features:
        raise DimensionError(f"fit has {fit.num_features} features, test matrix {features.width}")
    Phi = _feature_values(features)
    mean = np.real(Phi @ fit.coef)
    V = solve_triangular(fit.chol, Phi.conj().T, lower=True)
    variance = np.maximum(np.sum(np.abs(V) ** 2, axis=0), 0.0)

    if fit.bias_correction is not None:
        if X is None:
            raise ConfigurationError("bias-corrected predictions need the test inputs")
        variance = variance + fit.bias_correction(as_rows(X))
    return PosteriorSummary(mean=mean, variance=variance)


def exact_gp_reference(K, k_star, k_star_diag, y, noise: NoiseModel) -> PosteriorSummary:
    """
    Dense O(N^3) posterior, used as the reference for approximate GPs

    Args:
        K: N x N train covariance (Hermitian positive semidefinite)
        k_star: M x N test-train covariance
        k_star_diag: M prior variances at the test points
        y: N targets
        noise: Noise model with N variances
    """
    K = np.asarray(K)
    k_star = np.atleast_2d(np.asarray(k_star))
    N = K.shape[0]
    if K.shape != (N, N) or k_star.shape[1] != N or noise.variances.shape != (N,):
        raise DimensionError(f"shapes K {K.shape}, k* {k_star.shape}, noise {noise.variances.shape}")
    A = K + np.diag(noise.variances)
    try:
        L = cholesky(0.5 * (A + A.conj().T), lower=True)
    except LinAlgError as e:
        raise NumericalError(f"exact GP factorization failed: {e}") from e

    mean = np.real(k_star @ cho_solve((L, True), np.asarray(y, dtype=np.float64)))
    W = cho_solve((L, True), k_star.conj().T)
    variance = np.real(np.asarray(k_star_diag) - np.sum(k_star * W.T, axis=1))
    return PosteriorSummary(mean=mean, variance=np.maximum(variance, 0.0))


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ConfigurationError(f"labels must lie in 0..{num_classes - 1}")
    return np.eye(num_classes)[labels.astype(np.int64)]


def dirichlet_transform(labels, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Log-space regression targets and noise variances for one-hot labels

    sigma^2 = log(1 / (y + alpha) + 1), y_tilde = log(y + alpha) - sigma^2 / 2

    Returns:
        (y_tilde, sigma^2), both N x C
    """
    if alpha <= 0:
        raise ConfigurationError(f"alpha must be positive, got {alpha}")
    Y = np.asarray(labels, dtype=np.float64)
    if Y.ndim != 2 or not np.all((Y == 0) | (Y == 1)) or not np.all(Y.sum(axis=1) == 1):
        raise ConfigurationError("labels must be one-hot rows")
    sigma_sq = np.log(1.0 / (Y + alpha) + 1.0)
    return np.log(Y + alpha) - 0.5 * sigma_sq, sigma_sq


def fit_dirichlet_classifier(features: FeatureMatrix, labels, num_classes: int, alpha: float,
                             bias_correction=None) -> List[GPFit]:
    """One heteroscedastic GP per class on Dirichlet-transformed labels"""
    targets, variances = dirichlet_transform(one_hot(labels, num_classes), alpha)
    return [
        fit_gp(features, targets[:, c], NoiseModel(variances[:, c]), bias_correction)
        for c in range(num_classes)
    ]


def classify(fits: Sequence[GPFit], features: FeatureMatrix, n_mc: int, stream: RngStream,
             X=None) -> np.ndarray:
    """
    Class probabilities as the mean softmax of n_mc latent samples

    Returns:
        M x C matrix whose rows sum to one
    """
    if len(fits) < 2:
        raise ConfigurationError(f"classification needs at least 2 class fits, got {len(fits)}")
    widths = sorted({fit.num_features for fit in fits})
    if len(widths) != 1:
        raise ConfigurationError(f"class fits use different feature counts: {widths}")
    if n_mc < 1:
        raise ConfigurationError(f"n_mc must be positive, got {n_mc}")
    posteriors = [predict(fit, features, X) for fit in fits]
    mean = np.stack([p.mean for p in posteriors], axis=1)
    std = np.sqrt(np.stack([p.variance for p in posteriors], axis=1))
    eps = stream.generator().standard_normal((n_mc,) + mean.shape)
    return softmax(mean + std * eps, axis=-1).mean(axis=0)


def kl_diag_gaussians(mu_a, var_a, mu_e, var_e) -> float:
    """
    KL divergence of the exact posterior N(mu_e, var_e) from the approximate N(mu_a, var_a)

    0.5 * sum(var_e / var_a - log(var_e / var_a) - 1 + (mu_e - mu_a)^2 / var_a)
    """
    mu_a, var_a, mu_e, var_e = (np.atleast_1d(np.asarray(v, dtype=np.float64))
                                for v in (mu_a, var_a, mu_e, var_e))
    if not (mu_a.shape == var_a.shape == mu_e.shape == var_e.shape):
        raise DimensionError("KL inputs must have equal lengths")
    if np.any(var_a <= 0) or np.any(var_e <= 0):
        raise ConfigurationError("KL divergence needs positive variances")
    ratio = var_e / var_a
    return float(0.5 * np.sum(ratio - np.log(ratio) - 1.0 + (mu_e - mu_a) ** 2 / var_a))


def mnll(prediction: Union[PosteriorSummary, np.ndarray], y_true,
         noise_variance: float = 0.0) -> float:
    """
    Mean negative log likelihood of held-out targets

    Args:
        prediction: PosteriorSummary (regression) or M x C class probabilities
        y_true: Targets or integer class labels
        noise_variance: Observation noise added to the latent variance (regression)
    """
    y_true = np.asarray(y_true)
    if isinstance(prediction, PosteriorSummary):
        if prediction.mean.shape != y_true.shape:
            raise DimensionError(f"{prediction.mean.shape} predictions for {y_true.shape} targets")
        total = prediction.variance + noise_variance
        if np.any(total <= 0):
            raise NumericalError("predictive variance must be positive for MNLL")
        return float(np.mean(0.5 * np.log(2 * np.pi * total)
                             + (y_true - prediction.mean) ** 2 / (2 * total)))

    probs = np.asarray(prediction, dtype=np.float64)
    if probs.shape[0] != y_true.shape[0]:
        raise DimensionError(f"{probs.shape[0]} predictions for {y_true.shape[0]} labels")
    p_true = probs[np.arange(len(y_true)), y_true.astype(np.int64)]
    clamped = p_true < PROBABILITY_FLOOR
    if np.any(clamped):
        logger.warning(f"{int(clamped.sum())} true-class probabilities clamped at {PROBABILITY_FLOOR}")
    return float(np.mean(-np.log(np.maximum(p_true, PROBABILITY_FLOOR))))
