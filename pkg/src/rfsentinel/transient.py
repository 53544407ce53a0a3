"""Energy-transient fingerprints.

A preprocessed trace is turned into a spectrogram, collapsed to a normalized
per-frame peak-energy trajectory, cut at its most abrupt level change, and the
resulting transient is summarised by 15 statistics.
"""
from __future__ import annotations

import logging
from dataclasses import astuple, dataclass, fields
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateSegmentError, InvalidArgumentError, NoTransientError
from .wavelet import preprocess

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectrogramConfig:
    segment_length: int = 128
    overlap: int = 120
    dft_points: int = 256

    def __post_init__(self):
        if not 0 <= self.overlap < self.segment_length:
            raise InvalidArgumentError("overlap must be in [0, segment_length)")
        if self.dft_points < self.segment_length:
            raise InvalidArgumentError("dft_points must be >= segment_length")

    @property
    def hop(self) -> int:
        return self.segment_length - self.overlap


@dataclass(frozen=True)
class TransientConfig:
    spectrogram: SpectrogramConfig = SpectrogramConfig()
    change_mode: str = "mean"           # "mean" | "variance"
    end_fraction: float = 0.1
    entropy_mode: str = "unit_sum"      # "unit_sum" | "raw"
    segment_mode: str = "transient"     # "transient" | "full"


@dataclass(frozen=True, eq=False)
class EnergyTrajectory:
    values: np.ndarray
    frame_hop_s: float = 1.0


@dataclass(frozen=True)
class FingerprintVector:
    mean: float
    absolute_mean: float
    std_dev: float
    skewness: float
    entropy: float
    rms: float
    root: float
    kurtosis: float
    variance: float
    peak_value: float
    peak_to_peak: float
    shape_factor: float
    crest_factor: float
    impulse_factor: float
    clearance_factor: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in fields(FingerprintVector))


def spectrogram(y_t, config: SpectrogramConfig = SpectrogramConfig()) -> np.ndarray:
    """|STFT|^2 with a Hamming window; shape ``(frames, dft_points // 2 + 1)``."""
    y = np.asarray(y_t, dtype=float)
    if y.size < config.segment_length:
        raise InvalidArgumentError("trace shorter than one spectrogram segment")
    frames = sliding_window_view(y, config.segment_length)[::config.hop]
    windowed = frames * np.hamming(config.segment_length)
    return np.abs(np.fft.rfft(windowed, n=config.dft_points, axis=1)) ** 2


def energy_trajectory(spec_matrix, frame_hop_s: float = 1.0) -> EnergyTrajectory:
    s = np.asarray(spec_matrix, dtype=float)
    if s.ndim != 2 or s.size == 0:
        raise InvalidArgumentError("spectrogram must be a non-empty 2-D matrix")
    peak = s.max(axis=1)
    top = peak.max()
    if top <= 0:
        raise InvalidArgumentError("all-zero spectrogram cannot be normalized")
    return EnergyTrajectory(peak / top, frame_hop_s)


def mean_split_gains(x: np.ndarray) -> np.ndarray:
    """SSE reduction for every split ``s`` (left = x[:s], right = x[s:]), s = 1..n-1."""
    n = x.size
    c = np.cumsum(x)
    s = np.arange(1, n)
    left = c[:-1] / s
    right = (c[-1] - c[:-1]) / (n - s)
    return s * (n - s) / n * (left - right) ** 2


def variance_split_gains(x: np.ndarray) -> np.ndarray:
    """Gaussian log-likelihood gain of a two-segment mean/variance fit (segments >= 2)."""
    n = x.size
    eps = 1e-12
    c1 = np.cumsum(x)
    c2 = np.cumsum(x ** 2)
    s = np.arange(1, n)
    var_l = c2[:-1] / s - (c1[:-1] / s) ** 2
    var_r = (c2[-1] - c2[:-1]) / (n - s) - ((c1[-1] - c1[:-1]) / (n - s)) ** 2
    var_all = c2[-1] / n - (c1[-1] / n) ** 2
    gain = n * np.log(var_all + eps) - s * np.log(np.maximum(var_l, 0) + eps) \
        - (n - s) * np.log(np.maximum(var_r, 0) + eps)
    gain[(s < 2) | (n - s < 2)] = -np.inf
    return gain


def detect_energy_transient(traj, mode: str = "mean",
                            end_fraction: float = 0.1) -> tuple[int, int]:
    """Return ``(start_frame, end_frame)`` of the energy transient (inclusive end)."""
    x = np.asarray(getattr(traj, "values", traj), dtype=float)
    if x.size < 8:
        raise InvalidArgumentError("trajectory needs at least 8 frames")
    if mode == "mean":
        gains = mean_split_gains(x)
    elif mode == "variance":
        gains = variance_split_gains(x)
    else:
        raise InvalidArgumentError(f"unknown change mode {mode!r}")
    best = int(np.argmax(gains))
    if not gains[best] > 1e-12 * max(1.0, float(np.sum(x ** 2))):
        raise NoTransientError("trajectory has no level change")
    start = best + 1
    above = np.flatnonzero(x[start:] >= end_fraction * x.max())
    if above.size == 0 or above[-1] == 0:
        raise NoTransientError("no energy above threshold after the change point")
    return start, start + int(above[-1])


def _entropy(x: np.ndarray, mode: str) -> float:
    if mode == "unit_sum":
        total = x.sum()
        if total <= 0:
            raise DegenerateSegmentError("segment has no positive mass for entropy")
        q = x / total
    elif mode == "raw":
        q = x
    else:
        raise InvalidArgumentError(f"unknown entropy mode {mode!r}")
    q = q[q > 0]
    return float(-np.sum(q * np.log2(q)))


def extract_fingerprints(segment, entropy_mode: str = "unit_sum") -> FingerprintVector:
    """The 15 statistics of an energy-transient segment.

    ``std_dev``, skewness and kurtosis are centred on the absolute mean with an
    N-1 divisor, while ``variance`` is centred on the mean with N, matching the
    printed definitions; on nonnegative trajectories the two centres coincide.
    """
    x = np.asarray(segment, dtype=float)
    n = x.size
    if n < 2:
        raise InvalidArgumentError("segment needs at least 2 values")
    mu = x.mean()
    abs_mean = np.abs(x).mean()
    dev = x - abs_mean
    sigma_t = np.sqrt(np.sum(dev ** 2) / (n - 1))
    if np.ptp(x) == 0 or abs_mean == 0:
        raise DegenerateSegmentError("constant segment")
    rms = np.sqrt(np.mean(x ** 2))
    root = np.mean(np.sqrt(np.abs(x))) ** 2
    peak = x.max()
    return FingerprintVector(
        mean=float(mu),
        absolute_mean=float(abs_mean),
        std_dev=float(sigma_t),
        skewness=float(np.sum(dev ** 3) / ((n - 1) * sigma_t ** 3)),
        entropy=_entropy(x, entropy_mode),
        rms=float(rms),
        root=float(root),
        kurtosis=float(np.sum(dev ** 4) / ((n - 1) * sigma_t ** 4)),
        variance=float(np.mean((x - mu) ** 2)),
        peak_value=float(peak),
        peak_to_peak=float(peak - x.min()),
        shape_factor=float(rms / abs_mean),
        crest_factor=float(peak / rms),
        impulse_factor=float(peak / abs_mean),
        clearance_factor=float(peak / root),
    )


def capture_trajectory(signal, config: TransientConfig = TransientConfig()) -> EnergyTrajectory:
    wav = preprocess(signal)
    rate = getattr(signal, "sample_rate_hz", None)
    hop_s = config.spectrogram.hop * 4 / rate if rate else float(config.spectrogram.hop)
    return energy_trajectory(spectrogram(wav.y_t, config.spectrogram), hop_s)


def transient_segment(traj: EnergyTrajectory, config: TransientConfig = TransientConfig()) -> np.ndarray:
    """Transient slice of a trajectory; falls back to the whole trajectory when
    no transient is found or ``segment_mode == "full"``."""
    if config.segment_mode == "full":
        return traj.values
    try:
        start, end = detect_energy_transient(traj, config.change_mode, config.end_fraction)
    except NoTransientError:
        log.debug("no transient found, using full trajectory")
        return traj.values
    return traj.values[start:end + 1]


def fingerprint_capture(signal, config: TransientConfig = TransientConfig(),
                        traj: Optional[EnergyTrajectory] = None) -> FingerprintVector:
    """Preprocess, analyse and fingerprint one capture."""
    if traj is None:
        traj = capture_trajectory(signal, config)
    return extract_fingerprints(transient_segment(traj, config), config.entropy_mode)
