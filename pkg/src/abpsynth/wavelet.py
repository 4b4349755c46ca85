"""Daubechies-4 (8-tap) discrete wavelet transform for baseline detrending.

Self-contained single/multi-level DWT with half-point symmetric boundary
extension.  The analysis keeps exactly the coefficients whose filter
support lies fully inside the extended signal; those are the only ones
that touch original samples, so synthesis over them reconstructs the
input exactly (the filter pair is orthonormal), and a constant input
yields identically zero detail bands -- which keeps coefficient surgery
(zeroing the coarse approximation) free of boundary-step artifacts.
"""

import numpy as np

from .errors import ValidationError

# canonical 8-tap Daubechies-4 decomposition low-pass filter
DEC_LO = np.array([
    -0.010597401784997278,
    0.032883011666982945,
    0.030841381835986965,
    -0.18703481171888114,
    -0.02798376941698385,
    0.6308807679295904,
    0.7148465705525415,
    0.23037781330885523,
])
REC_LO = DEC_LO[::-1].copy()
REC_HI = np.array([(-1.0) ** k for k in range(len(DEC_LO))]) * DEC_LO
DEC_HI = REC_HI[::-1].copy()

_FLEN = len(DEC_LO)
_PAD = _FLEN - 1

MIN_INPUT_LEN = 64


def _extend(x: np.ndarray) -> np.ndarray:
    # half-point symmetric: x[-1] = x[0], x[n] = x[n-1]
    return np.concatenate([x[_PAD - 1::-1], x, x[:-_PAD - 1:-1]])


def dwt_single(x: np.ndarray):
    """One analysis level: returns (approximation, detail) coefficient arrays.

    Coefficient k is the inner product of the analysis filter with the
    extended signal at offset 2k+1, i.e. at sample position 2k - (F-2);
    the last coefficient touching the final sample is included, nothing
    beyond it.
    """
    s = _extend(np.asarray(x, dtype=float))
    approx = np.convolve(s, DEC_LO, mode="valid")[1::2]
    detail = np.convolve(s, DEC_HI, mode="valid")[1::2]
    return approx, detail


def idwt_single(approx: np.ndarray, detail: np.ndarray, out_len: int) -> np.ndarray:
    """Inverse of one analysis level, cropped back to `out_len` samples."""
    up_a = np.zeros(2 * len(approx) - 1)
    up_a[::2] = approx
    up_d = np.zeros(2 * len(detail) - 1)
    up_d[::2] = detail
    rec = np.convolve(up_a, REC_LO, mode="full") + np.convolve(up_d, REC_HI, mode="full")
    return rec[_FLEN - 2:_FLEN - 2 + out_len]


def wavedec(x: np.ndarray, levels: int = 5):
    """Multi-level analysis: returns (approx, [detail_1..detail_L], [input lengths])."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError("wavedec expects a 1-D signal")
    if len(x) < MIN_INPUT_LEN:
        raise ValidationError(
            f"signal too short for {levels}-level decomposition: "
            f"{len(x)} < {MIN_INPUT_LEN} samples"
        )
    details = []
    lengths = []
    cur = x
    for _ in range(levels):
        lengths.append(len(cur))
        cur, detail = dwt_single(cur)
        details.append(detail)
    return cur, details, lengths


def waverec(approx: np.ndarray, details, lengths) -> np.ndarray:
    """Inverse of :func:`wavedec`."""
    cur = approx
    for detail, n in zip(reversed(details), reversed(lengths)):
        cur = idwt_single(cur, detail, n)
    return cur
