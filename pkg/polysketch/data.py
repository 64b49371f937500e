"""
Dataset ingestion and preprocessing
"""
import logging
import os
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from polysketch.errors import ConfigurationError, DimensionError, NumericalError
from polysketch.models import DataConfig, PreprocessFlags, SyntheticData
from polysketch.numerics import HadamardDim, RngStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    """N x d inputs with targets; class labels (if any) are 0..C-1"""
    X: np.ndarray
    y: np.ndarray
    feature_names: List[str]
    path: Optional[str] = None
    classes: Optional[np.ndarray] = None

    @property
    def num_rows(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def num_classes(self) -> int:
        return 0 if self.classes is None else len(self.classes)

    def take(self, idx) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx])


def _check_numeric(df: pd.DataFrame, path: str) -> pd.DataFrame:
    numeric = df.apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna() & df.notna()
    if bad.any().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise ConfigurationError(
            f"{path}: non-numeric cell {df.iat[row, col]!r} at row {row + 1}, "
            f"column {df.columns[col]!r}")
    missing = numeric.isna().to_numpy() | np.isinf(numeric.to_numpy(dtype=np.float64))
    if missing.any():
        row, col = np.argwhere(missing)[0]
        raise ConfigurationError(
            f"{path}: missing or infinite value at row {row + 1}, column {df.columns[col]!r}")
    return numeric


def load_csv(path: str, label_column: str, categorical: bool = False) -> Dataset:
    """
    Read a numeric CSV table with a header row

    Args:
        path: CSV file
        label_column: Column holding the targets
        categorical: Encode the targets as contiguous class labels 0..C-1

    Returns:
        Dataset with rows in file order

    Raises:
        ConfigurationError: Missing file or column, malformed row, non-numeric
            or missing cell (row numbers count data rows from 1)
    """
    if not os.path.exists(path):
        raise ConfigurationError(f"data file not found: {path}")
    try:
        df = pd.read_csv(path, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigurationError(f"{path}: {e}") from e
    if label_column not in df.columns:
        raise ConfigurationError(
            f"{path}: label column {label_column!r} not found in {list(df.columns)}")

    numeric = _check_numeric(df, path)
    features = [c for c in numeric.columns if c != label_column]
    X = numeric[features].to_numpy(dtype=np.float64)
    y = numeric[label_column].to_numpy(dtype=np.float64)

    classes = None
    if categorical:
        classes, y = np.unique(y, return_inverse=True)
    logger.info(f"Loaded {path}: {X.shape[0]} rows, {X.shape[1]} features")
    return Dataset(X=X, y=y, feature_names=[str(c) for c in features], path=path, classes=classes)


def synthetic_dataset(cfg: SyntheticData) -> Dataset:
    """
    Random inputs with a smooth target

    Inputs are standard normal (uniform on [0, 1] when nonnegative); the target
    is sin(3 x^T w / sqrt(d)) plus Gaussian noise, or its quantile class when
    `classes` is set.
    """
    rng = RngStream(cfg.seed).generator()
    if cfg.nonnegative:
        X = rng.uniform(0.0, 1.0, size=(cfg.n, cfg.d))
    else:
        X = rng.standard_normal((cfg.n, cfg.d))
    w = rng.standard_normal(cfg.d)
    latent = np.sin(3.0 * (X @ w) / np.sqrt(cfg.d))
    y = latent + cfg.noise * rng.standard_normal(cfg.n)

    classes = None
    if cfg.classes:
        edges = np.quantile(latent, np.linspace(0, 1, cfg.classes + 1)[1:-1])
        y = np.digitize(latent, edges).astype(np.float64)
        classes, y = np.unique(y, return_inverse=True)
    names = [f"x{k}" for k in range(cfg.d)]
    return Dataset(X=X, y=y, feature_names=names, classes=classes)


def load_data(cfg: DataConfig, categorical: bool = False) -> Dataset:
    if cfg.synthetic is not None:
        return synthetic_dataset(cfg.synthetic)
    if cfg.label_column is None:
        raise ConfigurationError(f"{cfg.path}: 'label_column' is required for CSV data")
    return load_csv(cfg.path, cfg.label_column, categorical)


def preprocess(ds: Dataset, flags: PreprocessFlags,
               center: Optional[np.ndarray] = None) -> Dataset:
    """
    Zero-center, then unit-normalize, then zero-pad to a power of two, as flagged

    Args:
        ds: Dataset to transform
        flags: Steps to apply
        center: Column means to subtract instead of the dataset's own (training means for held-out data)
    """
    X = ds.X.copy()
    names = list(ds.feature_names)
    if flags.zero_center:
        if center is None:
            center = X.mean(axis=0)
        center = np.asarray(center, dtype=float)
        if center.shape != (X.shape[1],):
            raise DimensionError(f"centering mean has shape {center.shape}, data has {X.shape[1]} columns")
        X = X - center
    if flags.unit_normalize:
        norms = np.linalg.norm(X, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise NumericalError(f"row {zero[0] + 1} has zero norm and cannot be unit-normalized")
        X = X / norms[:, None]
    if flags.pad_pow2:
        dim = HadamardDim.for_dim(X.shape[1])
        names += [f"pad{k}" for k in range(dim.d_pad - X.shape[1])]
        X = dim.pad(X)
    return replace(ds, X=X, feature_names=names)


def subsample(n: int, m: int, stream: RngStream) -> np.ndarray:
    """m indices drawn without replacement (all n when m >= n)"""
    if m >= n:
        return np.arange(n)
    return np.sort(stream.generator().choice(n, size=m, replace=False))


def train_test_split(ds: Dataset, test_fraction: float,
                     stream: RngStream) -> Tuple[Dataset, Dataset]:
    """Random split with round(test_fraction * N) test rows (at least one of each)"""
    n = ds.num_rows
    if n < 2:
        raise ConfigurationError(f"cannot split {n} row(s)")
    n_test = min(max(1, int(round(test_fraction * n))), n - 1)
    order = stream.generator().permutation(n)
    return ds.take(np.sort(order[n_test:])), ds.take(np.sort(order[:n_test]))
