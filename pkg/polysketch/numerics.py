"""
Seeded random streams and the fast Walsh-Hadamard transform

Every random draw in polysketch goes through an RngStream. A stream is
identified by (seed, stream_id) and always builds a fresh counter-based
Philox generator, so the draws of one stream never depend on how many
other streams were consumed before it.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from polysketch.errors import ConfigurationError, DimensionError


Size = Union[int, Tuple[int, ...]]


class ComplexWeightKind(str, Enum):
    """Constructions of complex weights with E[z conj(z)] = 1 and q = 1/2"""
    RADEMACHER_ROTATED = "rademacher_rotated"
    GAUSSIAN_PAIR = "gaussian_pair"
    UNIT_CIRCLE = "unit_circle"


_ROTATIONS = np.array([1.0, -1.0, 1.0j, -1.0j], dtype=np.complex128)


@dataclass(frozen=True)
class RngStream:
    """Independent random stream addressed by a seed and a key path"""
    seed: int
    stream_id: Tuple[int, ...] = ()

    def __post_init__(self):
        if isinstance(self.stream_id, (int, np.integer)):
            object.__setattr__(self, 'stream_id', (int(self.stream_id),))
        else:
            object.__setattr__(self, 'stream_id', tuple(int(k) for k in self.stream_id))
        if self.seed < 0 or any(k < 0 for k in self.stream_id):
            raise ConfigurationError(
                f"seed and stream keys must be nonnegative, got {self.seed}, {self.stream_id}"
            )

    def child(self, *keys: int) -> "RngStream":
        """Return the sub-stream keyed by this stream's path extended with keys"""
        return RngStream(self.seed, self.stream_id + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream"""
        return np.random.Generator(np.random.Philox(self._sequence()))

    def spawn_seed(self) -> int:
        """64-bit seed derived from this stream, for components that take a plain seed"""
        hi, lo = self._sequence().generate_state(2, np.uint32)
        return (int(hi) << 32) | int(lo)

    def _sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=self.stream_id)


def _check_size(size: Size):
    dims = (size,) if np.isscalar(size) else tuple(size)
    if any(int(n) < 1 for n in dims):
        raise ConfigurationError(f"sample size must be positive, got {size}")


def sample_rademacher(stream: RngStream, size: Size) -> np.ndarray:
    """
    Draw i.i.d. uniform signs

    Args:
        stream: Source stream
        size: Number of draws or output shape

    Returns:
        float64 array with entries in {+1, -1}
    """
    _check_size(size)
    rng = stream.generator()
    return 1.0 - 2.0 * rng.integers(0, 2, size=size)


def sample_complex_weights(kind: Union[ComplexWeightKind, str], stream: RngStream,
                           size: Size) -> np.ndarray:
    """
    Draw complex weights z = a + ib with E[a^2] = E[b^2] = 1/2, E[ab] = 0

    Args:
        kind: rademacher_rotated ({1, -1, i, -i}), gaussian_pair (sqrt(1/2)(v + iw))
            or unit_circle (exp(i theta), theta uniform)
        stream: Source stream
        size: Number of draws or output shape

    Returns:
        complex128 array
    """
    try:
        kind = ComplexWeightKind(kind)
    except ValueError:
        raise ConfigurationError(f"unknown complex weight kind: {kind!r}") from None
    _check_size(size)
    rng = stream.generator()

    if kind is ComplexWeightKind.RADEMACHER_ROTATED:
        return _ROTATIONS[rng.integers(0, 4, size=size)]
    if kind is ComplexWeightKind.GAUSSIAN_PAIR:
        v = rng.standard_normal(size)
        w = rng.standard_normal(size)
        return np.sqrt(0.5) * (v + 1j * w)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=size)
    return np.exp(1j * theta)


def random_permutation(stream: RngStream, d: int) -> np.ndarray:
    """Uniform permutation of range(d)"""
    if d < 1:
        raise ConfigurationError(f"permutation length must be positive, got {d}")
    return stream.generator().permutation(d)


@dataclass(frozen=True)
class HadamardDim:
    """Hadamard size d_pad = 2^m"""
    d_pad: int

    def __post_init__(self):
        if not is_power_of_two(self.d_pad):
            raise DimensionError(f"Hadamard size must be a power of two, got {self.d_pad}")

    @classmethod
    def for_dim(cls, d: int) -> "HadamardDim":
        """Smallest power of two that holds d coordinates"""
        if d < 1:
            raise DimensionError(f"input dimension must be positive, got {d}")
        return cls(1 << (int(d) - 1).bit_length())

    def pad(self, X: np.ndarray) -> np.ndarray:
        """Append zero columns to X up to d_pad"""
        X = np.asarray(X)
        extra = self.d_pad - X.shape[-1]
        if extra < 0:
            raise DimensionError(f"{X.shape[-1]} columns do not fit in d_pad={self.d_pad}")
        if extra == 0:
            return X
        widths = [(0, 0)] * (X.ndim - 1) + [(0, extra)]
        return np.pad(X, widths)


def is_power_of_two(n: int) -> bool:
    return int(n) >= 1 and (int(n) & (int(n) - 1)) == 0


def fwht(v: np.ndarray) -> np.ndarray:
    """
    Unnormalized fast Walsh-Hadamard transform along the last axis

    Computes H v with the Sylvester recursion H_{2n} = [[H_n, H_n], [H_n, -H_n]],
    H_1 = [1], in O(d log d) per row. Works on real and complex input and on
    stacked rows (shape (..., d)). The input is not modified.

    Args:
        v: Array whose last axis has power-of-two length

    Returns:
        Transformed array of the same shape (float64 or complex128)

    Raises:
        DimensionError: If the last axis length is not a power of two
    """
    a = np.asarray(v)
    n = a.shape[-1] if a.ndim else 0
    if not is_power_of_two(n):
        raise DimensionError(f"FWHT length must be a power of two, got {n}")
    if not np.iscomplexobj(a):
        a = a.astype(np.float64, copy=False)
    lead = a.shape[:-1]

    h = 1
    while h < n:
        blocks = a.reshape(*lead, n // (2 * h), 2, h)
        top = blocks[..., 0, :]
        bottom = blocks[..., 1, :]
        a = np.stack((top + bottom, top - bottom), axis=-2).reshape(*lead, n)
        h *= 2
    return np.array(a, copy=True) if n == 1 else a
