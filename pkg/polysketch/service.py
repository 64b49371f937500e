"""
Command handlers shared by the CLI and the HTTP API
Each handler takes a validated command model and returns plain data
"""
import logging
from dataclasses import replace
from typing import Any, Dict

import numpy as np
import pandas as pd

from polysketch.config import get_config
from polysketch.data import load_data, preprocess, subsample
from polysketch.errors import ConfigurationError
from polysketch.experiments import MethodSettings, build_feature_map, error_rate, normalized_mse
from polysketch.gp import NoiseModel, classify, fit_dirichlet_classifier, fit_gp, mnll, predict
from polysketch.maclaurin import build_sketch, extended_allocate, precompute_objective_tables
from polysketch.models import (
    AllocateCommand,
    Allocation,
    GpCommand,
    SketchCommand,
    VarianceCommand,
)
from polysketch.numerics import HadamardDim, RngStream
from polysketch.variance import (
    PRESETS,
    RADEMACHER_COMPLEX,
    RADEMACHER_REAL,
    bernstein_feature_count,
    sigma_sq_bound,
    surrogate_var_tensor_srht,
    var_tensor_srht,
    var_unstructured,
)

logger = logging.getLogger(__name__)


def variance_report(cmd: VarianceCommand) -> Dict[str, Any]:
    """
    Closed-form variances of every sketch kind for one input pair

    Returns:
        Dictionary with single-feature and D-feature variances per preset,
        TensorSRHT variances (exact and surrogate) when d_pad >= 2, the
        sigma^2 constants and, if epsilon and delta are given, the feature
        counts of the concentration bound.
    """
    x = np.asarray(cmd.x)
    y = np.asarray(cmd.y)
    if x.shape != y.shape:
        raise ConfigurationError(f"x and y differ in length: {x.shape[0]} vs {y.shape[0]}")
    n, D = cmd.degree, cmd.num_features
    out: Dict[str, Any] = {
        'degree': n,
        'num_features': D,
        'inner_product': float(x @ y),
        'kernel': float(x @ y) ** n,
        'unstructured': {
            name: {'single': float(var_unstructured(x, y, n, mom)),
                   'total': float(var_unstructured(x, y, n, mom)) / D}
            for name, mom in PRESETS.items()
        },
    }

    d_pad = HadamardDim.for_dim(len(x)).d_pad
    if d_pad >= 2:
        out['tensor_srht'] = {
            'd_pad': d_pad,
            **{
                field: {'exact': float(var_tensor_srht(x, y, n, D, d_pad, mom)),
                        'surrogate': float(surrogate_var_tensor_srht(x, y, n, D, d_pad, mom))}
                for field, mom in (('real', RADEMACHER_REAL), ('complex', RADEMACHER_COMPLEX))
            },
        }

    if np.linalg.norm(x) > 0 and np.linalg.norm(y) > 0:
        sigma = {'real': float(sigma_sq_bound(x, y, n, 1.0)),
                 'complex': float(sigma_sq_bound(x, y, n, 0.5))}
        out['sigma_sq'] = sigma
        if cmd.epsilon is not None and cmd.delta is not None:
            out['bernstein_features'] = {
                k: bernstein_feature_count(v, cmd.epsilon, cmd.delta) for k, v in sigma.items()
            }
    return out


def allocate(cmd: AllocateCommand) -> Allocation:
    """Run the extended incremental allocator on a data sample"""
    cfg = get_config()
    p_min = cmd.p_min if cmd.p_min is not None else cfg.p_min
    p_max = cmd.p_max if cmd.p_max is not None else cfg.p_max
    m = cmd.m if cmd.m is not None else cfg.subsample

    ds = preprocess(load_data(cmd.data), cmd.preprocess)
    idx = subsample(ds.num_rows, m, RngStream(cmd.seed).child(2))
    tables = precompute_objective_tables(ds.X[idx], cmd.kernel, cmd.family, p_max, cmd.field)
    return extended_allocate(p_min, p_max, cmd.num_features, tables, cfg.constant_in_budget)


def sketch_features(cmd: SketchCommand) -> pd.DataFrame:
    """Features of every data row as real/imaginary column pairs"""
    ds = load_data(cmd.data)
    features = build_sketch(cmd.sketch).apply(ds.X)
    D = features.width
    frame = pd.DataFrame(features.values.real, columns=[f"re{k}" for k in range(D)])
    if not features.is_real:
        imag = pd.DataFrame(features.values.imag, columns=[f"im{k}" for k in range(D)])
        frame = pd.concat([frame, imag], axis=1)
    return frame


def gp_run(cmd: GpCommand) -> Dict[str, Any]:
    """
    Fit a feature-space GP on the training data and predict the test data

    Returns:
        Dictionary with 'metrics' and a 'predictions' DataFrame
    """
    cfg = get_config()
    classification = cmd.task == "classification"
    raw_train = load_data(cmd.train, classification)
    train = preprocess(raw_train, cmd.preprocess)
    test = preprocess(load_data(cmd.test, classification), cmd.preprocess,
                      center=raw_train.X.mean(axis=0))
    if classification:
        # test labels use the training class order
        raw = test.classes[test.y]
        unknown = ~np.isin(raw, train.classes)
        if unknown.any():
            raise ConfigurationError(f"test labels {np.unique(raw[unknown]).tolist()} not seen in training")
        test = replace(test, y=np.searchsorted(train.classes, raw), classes=train.classes)
    settings = MethodSettings.from_config()
    fmap = build_feature_map(cmd.method, cmd.kernel, cmd.num_features, cmd.seed, train.X,
                             settings)
    correction = fmap.correction if cfg.bias_correction else None

    if classification:
        fits = fit_dirichlet_classifier(fmap(train.X), train.y, train.num_classes,
                                        cfg.dirichlet_alpha, correction)
        probs = classify(fits, fmap(test.X), cfg.n_mc, RngStream(cmd.seed).child(4), test.X)
        frame = pd.DataFrame(probs, columns=[f"p{c}" for c in range(probs.shape[1])])
        metrics = {'error_rate': error_rate(probs, test.y), 'mnll': mnll(probs, test.y)}
    else:
        fit = fit_gp(fmap(train.X), train.y, NoiseModel.constant(cmd.noise, train.num_rows),
                     correction)
        post = predict(fit, fmap(test.X), test.X)
        frame = pd.DataFrame({'mean': post.mean, 'variance': post.variance})
        metrics = {'normalized_mse': normalized_mse(test.y, post.mean),
                   'mnll': mnll(post, test.y, cmd.noise)}
    logger.info(f"GP {cmd.task}: {metrics}")
    return {'metrics': metrics, 'predictions': frame,
            'allocation': fmap.allocation.model_dump() if fmap.allocation else None}
