"""Tests for error metrics, feature maps and the experiment runner"""
import json

import numpy as np
import pandas as pd
import pytest

from polysketch.data import Dataset
from polysketch.errors import ConfigurationError, NumericalError
from polysketch.experiments import (
    MethodSettings,
    build_feature_map,
    error_rate,
    fig1_benchmark,
    normalized_mse,
    rel_frobenius_error,
    resolve_kernel,
    run_experiment,
)
from polysketch.maclaurin import exact_kernel_matrix
from polysketch.models import ExperimentConfig, ExperimentKernel, KernelSpec, MethodConfig


def _config(**overrides) -> ExperimentConfig:
    base = {
        "data": {"synthetic": {"n": 60, "d": 3, "seed": 1}},
        "kernel": {"kind": "gaussian", "lengthscale": "median"},
        "methods": [
            {"name": "rff", "kind": "rff"},
            {"name": "rm", "kind": "random_maclaurin"},
            {"name": "om", "kind": "optimized_maclaurin", "family": "tensor_srht"},
        ],
        "features": [16],
        "seeds": [0, 1],
        "m": 30,
        "p_max": 4,
    }
    base.update(overrides)
    return ExperimentConfig.model_validate(base)


class TestMetrics:

    def test_rel_frobenius(self):
        K = np.array([[2.0, 0.0], [0.0, 2.0]])
        assert rel_frobenius_error(K, np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(0.5)
        assert rel_frobenius_error(K, np.zeros((2, 2))) == 1.0
        assert rel_frobenius_error(K, K) == 0.0

    def test_rel_frobenius_uses_real_part(self):
        assert rel_frobenius_error(np.eye(2), np.eye(2) + 3j) == 0.0

    def test_rel_frobenius_zero_norm(self):
        with pytest.raises(NumericalError):
            rel_frobenius_error(np.zeros((2, 2)), np.eye(2))

    def test_normalized_mse_of_mean(self, rng):
        y = rng.standard_normal(40)
        assert normalized_mse(y, np.full(40, y.mean())) == pytest.approx(1.0)

    def test_normalized_mse_constant_targets(self):
        with pytest.raises(NumericalError):
            normalized_mse(np.ones(3), np.zeros(3))

    def test_error_rate(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]])
        assert error_rate(probs, [0, 1, 1]) == pytest.approx(1 / 3)


class TestFeatureMaps:

    def test_polynomial_sketch_needs_polynomial_kernel(self, rng):
        method = MethodConfig(name="ps", kind="polynomial_sketch")
        with pytest.raises(ConfigurationError):
            build_feature_map(method, KernelSpec.gaussian(1.0), 8, 0, rng.standard_normal((5, 2)),
                              MethodSettings.from_config())

    def test_polynomial_sketch_is_inhomogeneous(self, rng):
        X = rng.standard_normal((4, 3))
        method = MethodConfig(name="ps", kind="polynomial_sketch", family="tensor_srht")
        kernel = KernelSpec.polynomial(1, nu=2.0)
        fmap = build_feature_map(method, kernel, 8, 3, X, MethodSettings.from_config())
        np.testing.assert_allclose(fmap(X).gram().real, exact_kernel_matrix(kernel, X), atol=1e-10)

    def test_optimized_map_carries_allocation(self, rng):
        X = rng.standard_normal((20, 3))
        method = MethodConfig(name="om", kind="optimized_maclaurin")
        fmap = build_feature_map(method, KernelSpec.gaussian(1.0), 12, 0, X,
                                 MethodSettings.from_config())
        assert fmap.allocation.num_features == 11
        assert fmap(X).width == 12

    def test_single_feature_leaves_no_budget(self, rng):
        method = MethodConfig(name="rm", kind="random_maclaurin")
        with pytest.raises(ConfigurationError):
            build_feature_map(method, KernelSpec.gaussian(1.0), 1, 0, rng.standard_normal((5, 2)),
                              MethodSettings.from_config())

    def test_resolve_kernel(self, rng):
        sample = Dataset(X=np.array([[0.0], [1.0], [3.0]]), y=np.array([1.0, 2.0, 3.0]),
                         feature_names=["x"])
        kernel = resolve_kernel(ExperimentKernel(kind="gaussian", lengthscale="median",
                                                 variance="label_variance"), sample)
        assert kernel.lengthscale == 2.0
        assert kernel.variance == pytest.approx(2 / 3)
        sphere = resolve_kernel(ExperimentKernel(kind="polynomial", degree=3, a=2.0), sample)
        assert sphere.nu == pytest.approx(0.5) and sphere.gamma == pytest.approx(0.5)


class TestRunExperiment:

    def test_frobenius_report(self, tmp_path):
        out = tmp_path / "results" / "smoke"
        report = run_experiment(_config(output=str(out)))
        assert len(report.runs) == 3 * 2
        assert all(np.isfinite(r.metrics["rel_frobenius"]) for r in report.runs)
        assert {a.method for a in report.aggregates} == {"rff", "rm", "om"}

        saved = json.loads(out.with_suffix(".json").read_text())
        assert saved["task"] == "frobenius"
        table = pd.read_csv(out.with_suffix(".csv"))
        assert {"method", "D", "seed", "rel_frobenius", "build_seconds"} <= set(table.columns)
        assert len(table) == 6

    def test_reproducible(self):
        a = run_experiment(_config(), write=False)
        b = run_experiment(_config(workers=2), write=False)
        assert a.runs == b.runs

    def test_method_name_does_not_change_draws(self):
        cfg = _config(methods=[
            {"name": "first", "kind": "optimized_maclaurin", "family": "rademacher"},
            {"name": "second", "kind": "optimized_maclaurin", "family": "rademacher"},
        ], seeds=[3])
        first, second = run_experiment(cfg, write=False).runs
        assert first.metrics == second.metrics

    def test_gp_regression_metrics(self):
        report = run_experiment(_config(task="gp_regression", noise=0.1, seeds=[0],
                                        kernel={"kind": "gaussian", "lengthscale": "median",
                                                "variance": "label_variance"}), write=False)
        for run in report.runs:
            assert set(run.metrics) == {"kl", "normalized_mse", "mnll"}
            assert run.metrics["kl"] >= 0

    def test_gp_classification_metrics(self):
        cfg = _config(task="gp_classification", seeds=[0], n_mc=16,
                      data={"synthetic": {"n": 80, "d": 2, "classes": 2, "seed": 5}})
        for run in run_experiment(cfg, write=False).runs:
            assert set(run.metrics) == {"kl", "error_rate", "mnll"}
            assert 0 <= run.metrics["error_rate"] <= 1

    def test_errors_name_the_method(self):
        cfg = _config(methods=[{"name": "ps", "kind": "polynomial_sketch"}], seeds=[0])
        with pytest.raises(ConfigurationError, match="method 'ps', D=16, seed 0"):
            run_experiment(cfg, write=False)

    def test_duplicate_method_names(self):
        with pytest.raises(ValueError):
            _config(methods=[{"name": "a", "kind": "rff"}, {"name": "a", "kind": "rff"}])

    @pytest.mark.slow
    def test_optimized_tensor_srht_beats_random_maclaurin(self):
        cfg = ExperimentConfig.model_validate({
            "data": {"synthetic": {"n": 500, "d": 16, "nonnegative": True, "seed": 0}},
            "preprocess": {"unit_normalize": True},
            "kernel": {"kind": "polynomial", "degree": 20, "a": 4.0},
            "methods": [
                {"name": "random", "kind": "random_maclaurin", "family": "rademacher"},
                {"name": "optimized", "kind": "optimized_maclaurin", "family": "tensor_srht"},
            ],
            "features": [80],
            "seeds": list(range(10)),
            "p_max": 20,
        })
        runs = run_experiment(cfg, write=False).runs
        errors = {(r.method, r.seed): r.metrics["rel_frobenius"] for r in runs}
        wins = sum(errors[("optimized", s)] < errors[("random", s)] for s in range(10))
        assert wins >= 8


class TestFig1Benchmark:

    def test_columns_and_sigma(self):
        table = fig1_benchmark(d=4, D=8, p_list=[1, 2], trials=5, seed=0)
        assert list(table.columns) == ["p", "method", "mae", "stderr", "sigma_sq", "predicted_mae"]
        assert len(table) == 4
        rows = table.set_index(["p", "method"])
        assert rows.loc[(2, "real_rademacher"), "sigma_sq"] == pytest.approx(2.5 ** 2 - 1)
        assert rows.loc[(2, "complex_rademacher"), "sigma_sq"] == pytest.approx(1.75 ** 2 - 1)

    def test_deterministic(self):
        a = fig1_benchmark(d=4, D=8, p_list=[3], trials=4, seed=2)
        b = fig1_benchmark(d=4, D=8, p_list=[3], trials=4, seed=2)
        pd.testing.assert_frame_equal(a, b)

    def test_needs_two_trials(self):
        with pytest.raises(ConfigurationError):
            fig1_benchmark(d=4, D=8, p_list=[1], trials=1)

    @pytest.mark.slow
    def test_complex_more_accurate_at_high_degree(self):
        table = fig1_benchmark(d=100, D=2000, p_list=range(5, 11), trials=50, seed=0)
        rows = table.set_index(["p", "method"])
        for p in range(5, 11):
            assert rows.loc[(p, "complex_rademacher"), "mae"] < rows.loc[(p, "real_rademacher"), "mae"]
