"""Two-level orthonormal Haar preprocessing.

The level-2 detail band is the trace every downstream stage works on. Odd
trailing samples are dropped at each level rather than padded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class WaveletOutput:
    y_t: np.ndarray
    source_length: int
    decimation_factor: int = 4


def haar_level(x) -> tuple[np.ndarray, np.ndarray]:
    """One analysis step: ``(approx, detail)``, each half the (even) input length."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise InvalidArgumentError("haar_level needs at least 2 samples")
    even = x[0:x.size - x.size % 2:2]
    odd = x[1:x.size - x.size % 2:2]
    return (even + odd) / SQRT2, (even - odd) / SQRT2


def decompose(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(a2, d2, d1)``."""
    a1, d1 = haar_level(x)
    a2, d2 = haar_level(a1)
    return a2, d2, d1


def preprocess(signal) -> WaveletOutput:
    """Level-2 Haar detail coefficients of a capture (a signal or a bare array)."""
    x = np.asarray(getattr(signal, "samples", signal), dtype=float)
    if x.size < 4:
        raise InvalidArgumentError("preprocess needs at least 4 samples")
    # the two 1/sqrt(2) factors fold into one exact halving
    quads = x[:x.size - x.size % 4].reshape(-1, 4)
    d2 = ((quads[:, 0] + quads[:, 1]) - (quads[:, 2] + quads[:, 3])) / 2
    return WaveletOutput(d2, x.size)
