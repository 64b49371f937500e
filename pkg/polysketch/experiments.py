"""
Experiment orchestration and error metrics

run_experiment follows a fixed protocol per seed: split the data 90/10,
subsample a training subset for hyperparameters, allocation and the exact-GP
reference, build every method's feature map for every feature count, and
score it on the configured task. Seeds run in a thread pool; the report only
depends on the config.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from polysketch.config import get_config
from polysketch.data import Dataset, load_data, preprocess, subsample, train_test_split
from polysketch.errors import ConfigurationError, DimensionError, NumericalError, PolysketchError
from polysketch.gp import (
    NoiseModel,
    classify,
    dirichlet_transform,
    exact_gp_reference,
    fit_dirichlet_classifier,
    fit_gp,
    kl_diag_gaussians,
    mnll,
    one_hot,
    predict,
)
from polysketch.maclaurin import (
    assemble_features,
    assemble_random_maclaurin,
    bias_correction,
    build_sketch,
    exact_kernel_matrix,
    extended_allocate,
    included_degrees,
    kernel_diag,
    median_heuristic,
    precompute_objective_tables,
    random_maclaurin_assign,
)
from polysketch.models import (
    AggregateRecord,
    Allocation,
    ExperimentConfig,
    ExperimentKernel,
    FieldKind,
    KernelKind,
    KernelSpec,
    MethodConfig,
    MethodKind,
    Report,
    RunRecord,
    SketchFamily,
    SketchSpec,
)
from polysketch.numerics import RngStream
from polysketch.sketches import (
    FeatureMatrix,
    approx_kernel,
    augment_inhomogeneous,
    build_unstructured_sketch,
    rff_features,
)
from polysketch.variance import sigma_sq_bound

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def rel_frobenius_error(K_exact, K_hat) -> float:
    """|K - Re(K_hat)|_F / |K|_F"""
    K_exact = np.asarray(K_exact, dtype=np.float64)
    K_hat = np.asarray(K_hat)
    if K_exact.ndim != 2 or K_exact.shape[0] != K_exact.shape[1] or K_exact.shape != K_hat.shape:
        raise DimensionError(f"expected equal square matrices, got {K_exact.shape} and {K_hat.shape}")
    denom = np.linalg.norm(K_exact)
    if denom == 0:
        raise NumericalError("exact kernel matrix has zero Frobenius norm")
    return float(np.linalg.norm(K_exact - np.real(K_hat)) / denom)


def normalized_mse(y_true, y_pred) -> float:
    """Mean squared error divided by the variance of the targets"""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    scale = np.var(y_true)
    if scale == 0:
        raise NumericalError("targets have zero variance")
    return float(np.mean((y_true - y_pred) ** 2) / scale)


def error_rate(probs, labels) -> float:
    """Fraction of rows whose most probable class is wrong"""
    return float(np.mean(np.argmax(probs, axis=1) != np.asarray(labels)))


# ---------------------------------------------------------------------------
# Feature maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodSettings:
    p_min: int
    p_max: int
    m: int
    c: float
    constant_in_budget: bool

    @classmethod
    def from_config(cls, cfg: Optional[ExperimentConfig] = None) -> "MethodSettings":
        defaults = get_config()
        pick = (lambda value, fallback: fallback if value is None else value)
        return cls(
            p_min=pick(cfg and cfg.p_min, defaults.p_min),
            p_max=pick(cfg and cfg.p_max, defaults.p_max),
            m=pick(cfg and cfg.m, defaults.subsample),
            c=defaults.random_c,
            constant_in_budget=defaults.constant_in_budget,
        )


@dataclass(frozen=True)
class FeatureMap:
    """A fixed random feature map shared by training and test inputs"""
    transform: Callable[[np.ndarray], FeatureMatrix]
    correction: Optional[Callable[[np.ndarray], np.ndarray]] = None
    allocation: Optional[Allocation] = None

    def __call__(self, X) -> FeatureMatrix:
        return self.transform(X)


def _degree_budget(D: int, settings: MethodSettings) -> int:
    budget = D - 1 if settings.constant_in_budget else D
    if budget < 1:
        raise ConfigurationError(f"{D} feature(s) leave no room for degree features")
    return budget


def build_feature_map(method: MethodConfig, kernel: KernelSpec, D: int, seed: int,
                      X_fit, settings: MethodSettings) -> FeatureMap:
    """
    Random feature map of one method with D features

    Args:
        method: Method description
        kernel: Target kernel
        D: Output width (optimized and random Maclaurin add the constant slot
            inside D when constant_in_budget is set)
        seed: Seed of every random draw of the map
        X_fit: Training subset used by the optimized allocator
        settings: Allocator defaults

    Returns:
        FeatureMap
    """
    X_fit = np.asarray(X_fit, dtype=np.float64)
    d = X_fit.shape[1]
    root = RngStream(seed)

    if method.kind is MethodKind.POLYNOMIAL_SKETCH:
        if kernel.kind is not KernelKind.POLYNOMIAL:
            raise ConfigurationError("polynomial_sketch approximates polynomial kernels only")
        spec = SketchSpec(family=method.family, field=method.field, degree=kernel.degree,
                          num_features=D, input_dim=d + 1, seed=seed)
        sketch = build_sketch(spec)
        amp = np.sqrt(kernel.variance)

        def transform(X):
            aug = augment_inhomogeneous(np.sqrt(kernel.gamma) * np.asarray(X), kernel.nu)
            phi = sketch.apply(aug)
            return FeatureMatrix(amp * phi.values, phi.is_real)

        return FeatureMap(transform)

    if method.kind is MethodKind.RFF:
        if kernel.kind is not KernelKind.GAUSSIAN:
            raise ConfigurationError("rff approximates the Gaussian kernel only")
        return FeatureMap(lambda X: rff_features(kernel.lengthscale, D, d, method.field, seed, X,
                                                 kernel.variance))

    budget = _degree_budget(D, settings)
    if method.kind is MethodKind.RANDOM_MACLAURIN:
        draw = random_maclaurin_assign(budget, settings.p_max, settings.c, root.child(1))
        return FeatureMap(
            lambda X: assemble_random_maclaurin(kernel, draw, method.family, method.field, seed, X),
            correction=bias_correction(kernel, range(1, settings.p_max + 1)),
        )

    idx = subsample(X_fit.shape[0], settings.m, root.child(2))
    tables = precompute_objective_tables(X_fit[idx], kernel, method.family, settings.p_max,
                                         method.field)
    alloc = extended_allocate(settings.p_min, settings.p_max, D, tables,
                              settings.constant_in_budget)
    return FeatureMap(
        lambda X: assemble_features(kernel, alloc, method.family, method.field, seed, X),
        correction=bias_correction(kernel, included_degrees(alloc.counts)),
        allocation=alloc,
    )


def resolve_kernel(spec: ExperimentKernel, sample: Dataset) -> KernelSpec:
    """Fill data-driven hyperparameters (median length scale, label variance)"""
    variance = spec.variance
    if variance == "label_variance":
        variance = float(np.var(sample.y))
        if variance <= 0:
            raise NumericalError("label variance of the training subset is zero")
    if spec.kind is KernelKind.POLYNOMIAL:
        if spec.degree is None:
            raise ConfigurationError("polynomial kernel requires 'degree'")
        if spec.a is not None:
            return KernelSpec.polynomial_sphere(spec.degree, spec.a, variance)
        return KernelSpec.polynomial(spec.degree, spec.nu, spec.gamma, variance)
    lengthscale = spec.lengthscale
    if lengthscale is None:
        raise ConfigurationError(f"{spec.kind.value} kernel requires 'lengthscale'")
    if lengthscale == "median":
        lengthscale = median_heuristic(sample.X)
    return KernelSpec(kind=spec.kind, lengthscale=lengthscale, variance=variance)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _SeedResult:
    runs: List[RunRecord]
    timings: List[Dict[str, float]]


def _score(cfg: ExperimentConfig, fmap: FeatureMap, kernel: KernelSpec, train: Dataset,
           test: Dataset, sub: Dataset, test_sub: Dataset, stream: RngStream) -> Dict[str, float]:
    correction = fmap.correction if _use_bias_correction(cfg) else None

    if cfg.task == "frobenius":
        K = exact_kernel_matrix(kernel, test_sub.X)
        return {'rel_frobenius': rel_frobenius_error(K, fmap(test_sub.X).gram())}

    # KL between exact and approximate predictive distributions on the subsets
    K = exact_kernel_matrix(kernel, sub.X)
    k_star = exact_kernel_matrix(kernel, test_sub.X, sub.X)
    k_diag = kernel_diag(kernel, test_sub.X)
    F_sub = fmap(sub.X)
    F_test_sub = fmap(test_sub.X)

    if cfg.task == "gp_regression":
        noise = NoiseModel.constant(cfg.noise, sub.num_rows)
        exact = exact_gp_reference(K, k_star, k_diag, sub.y, noise)
        appr = predict(fit_gp(F_sub, sub.y, noise, correction), F_test_sub, test_sub.X)
        kl = kl_diag_gaussians(appr.mean, appr.variance + cfg.noise,
                               exact.mean, exact.variance + cfg.noise)

        fit = fit_gp(fmap(train.X), train.y, NoiseModel.constant(cfg.noise, train.num_rows),
                     correction)
        post = predict(fit, fmap(test.X), test.X)
        return {
            'kl': kl,
            'normalized_mse': normalized_mse(test.y, post.mean),
            'mnll': mnll(post, test.y, cfg.noise),
        }

    alpha = cfg.alpha if cfg.alpha is not None else get_config().dirichlet_alpha
    n_mc = cfg.n_mc if cfg.n_mc is not None else get_config().n_mc
    C = train.num_classes
    targets, variances = dirichlet_transform(one_hot(sub.y, C), alpha)
    kls = []
    for c in range(C):
        noise = NoiseModel(variances[:, c])
        exact = exact_gp_reference(K, k_star, k_diag, targets[:, c], noise)
        appr = predict(fit_gp(F_sub, targets[:, c], noise, correction), F_test_sub, test_sub.X)
        floor = np.finfo(np.float64).tiny
        kls.append(kl_diag_gaussians(appr.mean, np.maximum(appr.variance, floor),
                                     exact.mean, np.maximum(exact.variance, floor)))

    fits = fit_dirichlet_classifier(fmap(train.X), train.y, C, alpha, correction)
    probs = classify(fits, fmap(test.X), n_mc, stream, test.X)
    return {
        'kl': float(np.mean(kls)),
        'error_rate': error_rate(probs, test.y),
        'mnll': mnll(probs, test.y),
    }


def _use_bias_correction(cfg: ExperimentConfig) -> bool:
    return get_config().bias_correction if cfg.bias_correction is None else cfg.bias_correction


def _run_seed(cfg: ExperimentConfig, ds: Dataset, fixed_test: Optional[Dataset],
              seed: int, settings: MethodSettings) -> _SeedResult:
    root = RngStream(seed)
    if fixed_test is None:
        fraction = cfg.test_fraction if cfg.test_fraction is not None else get_config().test_fraction
        train, test = train_test_split(ds, fraction, root.child(0))
    else:
        train, test = ds, fixed_test
    sub = train.take(subsample(train.num_rows, settings.m, root.child(1)))
    m_star = cfg.m_star if cfg.m_star is not None else settings.m
    test_sub = test.take(subsample(test.num_rows, m_star, root.child(2)))
    kernel = resolve_kernel(cfg.kernel, sub)

    runs, timings = [], []
    for method in cfg.methods:
        for D in cfg.features:
            feature_seed = root.child(3, D).spawn_seed()
            try:
                started = time.perf_counter()
                fmap = build_feature_map(method, kernel, D, feature_seed, sub.X, settings)
                built = time.perf_counter()
                metrics = _score(cfg, fmap, kernel, train, test, sub, test_sub, root.child(4, D))
            except PolysketchError as e:
                raise type(e)(f"method {method.name!r}, D={D}, seed {seed}: {e}") from e
            finished = time.perf_counter()
            runs.append(RunRecord(method=method.name, num_features=D, seed=seed, metrics=metrics))
            timings.append({'build_seconds': built - started, 'score_seconds': finished - built})
    logger.info(f"seed {seed}: {len(runs)} run(s) finished")
    return _SeedResult(runs, timings)


def _aggregate(runs: List[RunRecord]) -> List[AggregateRecord]:
    groups: Dict[Tuple[str, int], List[RunRecord]] = {}
    for run in runs:
        groups.setdefault((run.method, run.num_features), []).append(run)
    out = []
    for (method, D), members in groups.items():
        for metric in members[0].metrics:
            values = np.array([r.metrics[metric] for r in members])
            out.append(AggregateRecord(method=method, num_features=D, metric=metric,
                                       mean=float(values.mean()), std=float(values.std()),
                                       runs=len(values)))
    return out


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> Report:
    """
    Run every (method, D, seed) combination of a config

    Writes the JSON report to cfg.output and per-run rows (with timing
    columns) next to it as CSV.

    Returns:
        Report
    """
    classification = cfg.task == "gp_classification"
    raw = load_data(cfg.data, classification)
    ds = preprocess(raw, cfg.preprocess)
    fixed_test = None
    if cfg.test_data is not None:
        fixed_test = preprocess(load_data(cfg.test_data, classification), cfg.preprocess,
                                center=raw.X.mean(axis=0))
    if classification and ds.num_classes < 2:
        raise ConfigurationError("classification data needs at least two classes")
    settings = MethodSettings.from_config(cfg)

    workers = cfg.workers or get_config().workers
    logger.info(f"running {len(cfg.methods)} method(s) x {len(cfg.features)} size(s) "
                f"x {len(cfg.seeds)} seed(s) on {workers} worker(s)")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda s: _run_seed(cfg, ds, fixed_test, s, settings), cfg.seeds))

    runs = [r for res in results for r in res.runs]
    report = Report(task=cfg.task, runs=runs, aggregates=_aggregate(runs))
    if write and cfg.output:
        timings = [t for res in results for t in res.timings]
        write_report(report, timings, cfg.output)
    return report


def write_report(report: Report, timings: List[Dict[str, float]], output: str):
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.with_suffix('.json').write_text(report.model_dump_json(indent=2))
    rows = [
        {'method': r.method, 'D': r.num_features, 'seed': r.seed, **r.metrics, **t}
        for r, t in zip(report.runs, timings)
    ]
    pd.DataFrame(rows).to_csv(path.with_suffix('.csv'), index=False)
    logger.info(f"report written to {path.with_suffix('.json')}")


def fig1_benchmark(d: int, D: int, p_list, trials: int, seed: int = 0) -> pd.DataFrame:
    """
    Absolute error of real vs complex Rademacher sketches at x = y = 1/sqrt(d)

    The exact kernel value is 1 for every degree. Alongside the empirical
    mean absolute error and its standard error, each row carries the
    sigma^2 constant of the concentration bound and the MAE predicted by a
    normal approximation, sqrt(2 sigma^2 / (pi D)).

    Returns:
        DataFrame with columns p, method, mae, stderr, sigma_sq, predicted_mae
    """
    if d < 1 or D < 1 or trials < 2:
        raise ConfigurationError(f"need d, D >= 1 and trials >= 2, got {d}, {D}, {trials}")
    x = np.full(d, 1.0 / np.sqrt(d))
    root = RngStream(seed)
    methods = [('real_rademacher', FieldKind.REAL, 1.0),
               ('complex_rademacher', FieldKind.COMPLEX, 0.5)]

    rows = []
    for p in p_list:
        for j, (name, field, q) in enumerate(methods):
            errors = np.empty(trials)
            for t in range(trials):
                spec = SketchSpec(family=SketchFamily.RADEMACHER, field=field, degree=p,
                                  num_features=D, input_dim=d,
                                  seed=root.child(p, j, t).spawn_seed())
                phi = build_unstructured_sketch(spec).apply(x).values[0]
                errors[t] = abs(approx_kernel(phi, phi).real - 1.0)
            sigma_sq = float(sigma_sq_bound(x, x, p, q))
            rows.append({
                'p': p,
                'method': name,
                'mae': float(errors.mean()),
                'stderr': float(errors.std(ddof=1) / np.sqrt(trials)),
                'sigma_sq': sigma_sq,
                'predicted_mae': float(np.sqrt(2.0 * sigma_sq / (np.pi * D))),
            })
        logger.debug(f"fig1: p={p} done")
    return pd.DataFrame(rows)
