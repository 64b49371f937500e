"""
Real and complex TensorSRHT sketches

Inputs are zero-padded to d_pad = 2^m. The features are split into
B = ceil(D / d_pad) independent blocks. Block b and degree i use the weight
matrix S = diag(z) H P_pi, where z has entries in {+1, -1} (real) or
{1, -1, i, -i} (complex), H is the unnormalized Hadamard matrix and P_pi
permutes its columns. Applying S costs one FWHT per row, so a degree-p
sketch costs O(p D log d) per point. The last block keeps only its first
D mod d_pad columns.
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.linalg import hadamard

from polysketch.models import FieldKind, SketchFamily, SketchSpec
from polysketch.numerics import (
    ComplexWeightKind,
    HadamardDim,
    RngStream,
    fwht,
    random_permutation,
    sample_complex_weights,
    sample_rademacher,
)
from polysketch.sketches import FeatureMatrix, as_rows

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TensorSrhtSketch:
    """Diagonals and permutations of every (block, degree) pair"""
    spec: SketchSpec
    dim: HadamardDim
    diagonals: np.ndarray      # (B, p, d_pad)
    permutations: np.ndarray   # (B, p, d_pad)

    @property
    def d_pad(self) -> int:
        return self.dim.d_pad

    @property
    def num_blocks(self) -> int:
        return self.diagonals.shape[0]

    def apply(self, X) -> FeatureMatrix:
        return apply_tensor_srht(self, X)


def build_tensor_srht(p: int, D: int, d: int, field: FieldKind = FieldKind.REAL,
                      seed: int = 0) -> TensorSrhtSketch:
    """
    Draw a TensorSRHT sketch

    Args:
        p: Polynomial degree
        D: Number of features
        d: Natural input dimension (padded internally)
        field: real or complex diagonal weights
        seed: Block b, degree i draw their diagonal from stream (seed, b, i, 0)
            and their permutation from stream (seed, b, i, 1)

    Returns:
        TensorSrhtSketch
    """
    spec = SketchSpec(family=SketchFamily.TENSOR_SRHT, field=field, degree=p,
                      num_features=D, input_dim=d, seed=seed)
    dim = HadamardDim.for_dim(d)
    n_blocks = -(-D // dim.d_pad)
    root = RngStream(seed)

    dtype = np.float64 if spec.is_real else np.complex128
    diagonals = np.empty((n_blocks, p, dim.d_pad), dtype=dtype)
    permutations = np.empty((n_blocks, p, dim.d_pad), dtype=np.int64)
    for b in range(n_blocks):
        for i in range(p):
            stream = root.child(b, i)
            if spec.is_real:
                diagonals[b, i] = sample_rademacher(stream.child(0), dim.d_pad)
            else:
                diagonals[b, i] = sample_complex_weights(
                    ComplexWeightKind.RADEMACHER_ROTATED, stream.child(0), dim.d_pad)
            permutations[b, i] = random_permutation(stream.child(1), dim.d_pad)

    logger.debug(f"TensorSRHT p={p} D={D} d={d}: d_pad={dim.d_pad}, {n_blocks} block(s)")
    return TensorSrhtSketch(spec, dim, diagonals, permutations)


def apply_tensor_srht(sk: TensorSrhtSketch, X) -> FeatureMatrix:
    """
    Fast path: per block and degree, FWHT(x * z) gathered by pi

    Returns:
        FeatureMatrix N x D, scaled by 1/sqrt(D)
    """
    spec = sk.spec
    X = sk.dim.pad(as_rows(X, spec.input_dim))
    blocks = []
    for b in range(sk.num_blocks):
        prod = None
        for i in range(spec.degree):
            proj = fwht(X * sk.diagonals[b, i])[:, sk.permutations[b, i]]
            prod = proj if prod is None else prod * proj
        blocks.append(prod)
    values = np.hstack(blocks)[:, :spec.num_features] / np.sqrt(spec.num_features)
    return FeatureMatrix(values, spec.is_real)


def weight_matrix_explicit(sk: TensorSrhtSketch) -> List[List[np.ndarray]]:
    """
    Explicit d_pad x d_pad matrices D_i H P_pi, indexed [block][degree]

    Column l of the matrix is the weight vector s_{i,l} = z_i * h_{pi(l)}.
    """
    H = hadamard(sk.d_pad)
    return [
        [sk.diagonals[b, i][:, None] * H[:, sk.permutations[b, i]] for i in range(sk.spec.degree)]
        for b in range(sk.num_blocks)
    ]


def apply_explicit(sk: TensorSrhtSketch, X) -> FeatureMatrix:
    """Slow path x -> prod_i (S_i^T x) with the explicit matrices, for checking"""
    spec = sk.spec
    X = sk.dim.pad(as_rows(X, spec.input_dim))
    blocks = []
    for mats in weight_matrix_explicit(sk):
        prod = np.ones((X.shape[0], sk.d_pad), dtype=mats[0].dtype)
        for S in mats:
            prod = prod * (X @ S)
        blocks.append(prod)
    values = np.hstack(blocks)[:, :spec.num_features] / np.sqrt(spec.num_features)
    return FeatureMatrix(values, spec.is_real)
