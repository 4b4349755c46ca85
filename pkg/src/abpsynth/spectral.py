"""Orthonormal DCT-II analysis/synthesis and coefficient truncation.

Conventions: the forward transform is the orthonormal DCT-II,

    X[k] = a_k * sum_n x[n] * cos(pi/N * (n + 1/2) * k)

with a_0 = sqrt(1/N) and a_k = sqrt(2/N) for k > 0. The inverse applies the
transposed basis, so synthesis exactly inverts analysis and the transform
preserves the L2 norm. Scaling is applied symmetrically on both sides (the
unnormalized analysis / alpha-scaled synthesis pair is not self-inverse).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateInputError, ValidationError


@dataclass
class SpectralConfig:
    """Coefficient-space sizing: container length and retained prefixes."""

    q: int = 250
    q_x: int = 50
    q_y: int = 50

    def validate(self) -> None:
        if self.q < 1:
            raise ValidationError(f"q must be >= 1, got {self.q}")
        if not (0 < self.q_x <= self.q) or not (0 < self.q_y <= self.q):
            raise ValidationError(
                f"kept prefixes must lie in [1, q={self.q}]: q_x={self.q_x}, q_y={self.q_y}"
            )


@dataclass
class SpectralVector:
    """A truncated, zero-padded DCT coefficient vector.

    ``coeffs`` has length equal to the container size; entries at index
    ``kept`` and beyond are exactly zero.  ``original_len`` records the
    sample count of the waveform the coefficients came from.
    """

    coeffs: np.ndarray
    kept: int
    original_len: int

    def validate(self) -> None:
        if self.kept > len(self.coeffs):
            raise ValidationError(
                f"kept={self.kept} exceeds container length {len(self.coeffs)}"
            )
        if self.kept < len(self.coeffs) and np.any(self.coeffs[self.kept:] != 0.0):
            raise ValidationError("coefficients beyond `kept` must be exactly zero")


@lru_cache(maxsize=8)
def _basis(n: int) -> np.ndarray:
    # rows are the orthonormal DCT-II basis vectors
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    basis = np.cos(np.pi * (m + 0.5) * k / n)
    basis[0] *= np.sqrt(1.0 / n)
    basis[1:] *= np.sqrt(2.0 / n)
    return basis


def dct2(x: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II of a 1-D signal (or of each row of a 2-D array)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if x.size == 0 or n == 0:
        raise ValidationError("dct2 requires a non-empty input")
    return x @ _basis(n).T


def idct(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct2` (orthonormal DCT-III); row-wise on 2-D input."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    if coeffs.size == 0 or n == 0:
        raise ValidationError("idct requires a non-empty input")
    return coeffs @ _basis(n)


def truncate_pad(coeffs: np.ndarray, keep: int, out_len: int) -> SpectralVector:
    """Retain the first `keep` coefficients, zero the rest, resize to `out_len`."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1:
        raise ValidationError("truncate_pad expects a 1-D coefficient vector")
    if keep > len(coeffs):
        raise ValidationError(f"keep={keep} exceeds input length {len(coeffs)}")
    if keep < 0 or out_len < keep:
        raise ValidationError(f"need 0 <= keep <= out_len, got keep={keep}, out_len={out_len}")
    out = np.zeros(out_len)
    out[:keep] = coeffs[:keep]
    return SpectralVector(coeffs=out, kept=keep, original_len=len(coeffs))


def choose_keep(coeffs: np.ndarray, energy_fraction: float) -> int:
    """Smallest prefix whose cumulative squared energy reaches the given fraction."""
    coeffs = np.asarray(coeffs, dtype=float)
    if not (0.0 < energy_fraction <= 1.0):
        raise ValidationError(f"energy_fraction must be in (0, 1], got {energy_fraction}")
    energy = coeffs ** 2
    total = energy.sum()
    if total == 0.0:
        raise DegenerateInputError("cannot pick a prefix of an all-zero vector")
    cum = np.cumsum(energy)
    if energy_fraction >= 1.0:
        return int(np.flatnonzero(energy)[-1]) + 1
    return int(np.searchsorted(cum, energy_fraction * total)) + 1
