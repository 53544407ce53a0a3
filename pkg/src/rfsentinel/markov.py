"""Two-state Markov naive-Bayes detector (signal vs noise).

Preprocessed samples are quantized into S1 (|y| <= delta) and S2 (|y| > delta).
Each class is summarised by a 2x2 matrix of transition-pair probabilities that
is normalized over the total number of transitions, so its four cells sum to 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .wavelet import preprocess

S1, S2 = 0, 1
SIGNAL, NOISE = "signal", "noise"


@dataclass(frozen=True, eq=False)
class StateSequence:
    states: np.ndarray  # uint8, 0 = S1, 1 = S2
    delta: float


@dataclass(frozen=True, eq=False)
class TransitionMatrices:
    counts: np.ndarray  # 2x2 int
    probs: np.ndarray   # 2x2, counts / counts.sum()


@dataclass(frozen=True, eq=False)
class DetectorModel:
    delta: float
    sigma_noise: float
    probs_signal: np.ndarray
    probs_noise: np.ndarray
    prior_signal: float = 0.5

    def __post_init__(self):
        if not self.sigma_noise > 0:
            raise InvalidArgumentError("sigma_noise must be positive")
        if not self.delta > 0:
            raise InvalidArgumentError("delta must be positive")
        if not 0 < self.prior_signal < 1:
            raise InvalidArgumentError("prior_signal must lie in (0, 1)")
        for p in (self.probs_signal, self.probs_noise):
            if np.asarray(p).shape != (2, 2) or not np.all(np.asarray(p) > 0):
                raise InvalidArgumentError("smoothed probabilities must be strictly positive 2x2")

    @property
    def delta_multiple(self) -> float:
        return self.delta / self.sigma_noise

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "sigma_noise": self.sigma_noise,
            "probs_signal": np.asarray(self.probs_signal).tolist(),
            "probs_noise": np.asarray(self.probs_noise).tolist(),
            "prior_signal": self.prior_signal,
            "smoothing": "laplace1",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorModel":
        return cls(float(d["delta"]), float(d["sigma_noise"]),
                   np.array(d["probs_signal"], dtype=float),
                   np.array(d["probs_noise"], dtype=float),
                   float(d.get("prior_signal", 0.5)))


@dataclass(frozen=True)
class Detection:
    decision: str
    log_posterior_signal: float
    log_posterior_noise: float

    @property
    def is_signal(self) -> bool:
        return self.decision == SIGNAL


def _y_t(item) -> np.ndarray:
    """Accept a capture (preprocessed here) or an already-preprocessed trace."""
    if hasattr(item, "samples"):
        return preprocess(item).y_t
    if hasattr(item, "y_t"):
        return item.y_t
    return np.asarray(item, dtype=float)


def estimate_noise_sigma(noise_captures: Sequence) -> float:
    """Sample std of the concatenated preprocessed noise captures."""
    if len(noise_captures) == 0:
        raise InvalidArgumentError("no noise captures")
    y = np.concatenate([preprocess(c).y_t for c in noise_captures])
    if y.size < 100:
        raise InvalidArgumentError("need at least 100 preprocessed noise samples")
    return float(np.std(y, ddof=1))


def quantize_states(y_t, delta: float) -> StateSequence:
    y = np.asarray(y_t, dtype=float)
    if not delta > 0:
        raise InvalidArgumentError("delta must be positive")
    if y.size < 2:
        raise InvalidArgumentError("need at least 2 samples")
    return StateSequence((np.abs(y) > delta).astype(np.uint8), float(delta))


def _pair_counts(states: np.ndarray) -> np.ndarray:
    codes = 2 * states[:-1].astype(np.intp) + states[1:]
    return np.bincount(codes, minlength=4).reshape(2, 2)


def transition_counts(states) -> TransitionMatrices:
    s = np.asarray(getattr(states, "states", states))
    if s.size < 2:
        raise InvalidArgumentError("need at least 2 states")
    counts = _pair_counts(s)
    return TransitionMatrices(counts, counts / counts.sum())


def smoothed_probs(counts: np.ndarray) -> np.ndarray:
    c = np.asarray(counts, dtype=float) + 1.0
    return c / c.sum()


def log_likelihood(counts, probs) -> float:
    """sum_ij N_ij log p_ij."""
    n = np.asarray(getattr(counts, "counts", counts), dtype=float)
    p = np.asarray(probs, dtype=float)
    if np.any((p <= 0) & (n > 0)):
        raise InvalidArgumentError("zero probability for an observed transition")
    used = n > 0
    return float(np.sum(n[used] * np.log(p[used])))


def fit_detector(signal_captures: Sequence, noise_captures: Sequence, delta_multiple: float,
                 prior_signal: float = 0.5, sigma_noise: float | None = None) -> DetectorModel:
    """Pool Laplace-smoothed transition counts per class at ``delta = multiple * sigma``.

    Captures may be raw signals or preprocessed traces; ``sigma_noise`` is
    estimated from the noise captures unless given.
    """
    if len(signal_captures) == 0 or len(noise_captures) == 0:
        raise InvalidArgumentError("both classes need training captures")
    if not delta_multiple > 0:
        raise InvalidArgumentError("delta_multiple must be positive")
    sig_y = [_y_t(c) for c in signal_captures]
    noise_y = [_y_t(c) for c in noise_captures]
    if sigma_noise is None:
        sigma_noise = float(np.std(np.concatenate(noise_y), ddof=1))
    delta = delta_multiple * sigma_noise
    return model_from_counts(pooled_counts(sig_y, delta), pooled_counts(noise_y, delta),
                             delta, sigma_noise, prior_signal)


def pooled_counts(traces: Iterable[np.ndarray], delta: float) -> np.ndarray:
    total = np.zeros((2, 2), dtype=np.int64)
    for y in traces:
        total += _pair_counts((np.abs(y) > delta).astype(np.uint8))
    return total


def model_from_counts(counts_signal, counts_noise, delta, sigma_noise,
                      prior_signal=0.5) -> DetectorModel:
    return DetectorModel(float(delta), float(sigma_noise), smoothed_probs(counts_signal),
                         smoothed_probs(counts_noise), prior_signal)


def detect(y_t, model: DetectorModel) -> Detection:
    """Signal iff log L_signal + log prior >= log L_noise + log(1 - prior)."""
    counts = transition_counts(quantize_states(_y_t(y_t), model.delta))
    return decide(counts.counts, model)


def decide(counts: np.ndarray, model: DetectorModel) -> Detection:
    post_s = log_likelihood(counts, model.probs_signal) + math.log(model.prior_signal)
    post_n = log_likelihood(counts, model.probs_noise) + math.log(1 - model.prior_signal)
    return Detection(SIGNAL if post_s >= post_n else NOISE, post_s, post_n)


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    delta_multiple: float
    detection_accuracy: float
    far: float
    n_signal: int
    n_noise: int


def sweep_threshold(signal_bursts: Sequence, noise_captures: Sequence,
                    delta_multiples: Sequence[float], snr_grid: Sequence[float], *,
                    train_fraction: float = 0.5, seed: int = 0,
                    prior_signal: float = 0.5) -> list[SweepRow]:
    """Accuracy and false-alarm rate over an (SNR, threshold) grid.

    ``signal_bursts`` are noise-free emissions; each grid SNR adds fresh
    noise at that burst-support SNR. ``noise_captures`` are rescaled to the
    same noise level, so both classes share one receiver noise floor. Both
    sets are split into a training head and an evaluation tail, and the
    detector is refit for every cell.
    """
    if len(delta_multiples) == 0 or len(snr_grid) == 0:
        raise InvalidArgumentError("empty sweep grid")
    if len(signal_bursts) < 2 or len(noise_captures) < 2:
        raise InvalidArgumentError("need at least 2 captures per class")
    if not 0 < train_fraction < 1:
        raise InvalidArgumentError("train_fraction must lie in (0, 1)")
    from .signals import add_awgn_at_snr, burst_support

    powers = []
    for b in signal_bursts:
        lo, hi = burst_support(b)
        powers.append(np.mean(b.samples[lo:hi] ** 2))
    burst_power = float(np.mean(powers))
    raw_noise = [preprocess(c).y_t for c in noise_captures]
    noise_std = float(np.std(np.concatenate([c.samples for c in noise_captures])))
    if noise_std <= 0:
        raise InvalidArgumentError("noise captures have zero power")
    n_sig_train = max(1, int(round(train_fraction * len(signal_bursts))))
    n_noise_train = max(1, int(round(train_fraction * len(noise_captures))))

    rows = []
    for k, snr in enumerate(snr_grid):
        sigma = math.sqrt(burst_power / 10 ** (snr / 10))
        sig_y = [preprocess(add_awgn_at_snr(b, snr, seed + 7919 * k + i)).y_t
                 for i, b in enumerate(signal_bursts)]
        noise_y = [y * (sigma / noise_std) for y in raw_noise]
        sig_train, sig_test = sig_y[:n_sig_train], sig_y[n_sig_train:]
        noise_train, noise_test = noise_y[:n_noise_train], noise_y[n_noise_train:]
        sigma_hat = float(np.std(np.concatenate(noise_train), ddof=1))
        for mult in delta_multiples:
            delta = mult * sigma_hat
            model = model_from_counts(pooled_counts(sig_train, delta),
                                      pooled_counts(noise_train, delta),
                                      delta, sigma_hat, prior_signal)
            hits = sum(detect(y, model).is_signal for y in sig_test)
            alarms = sum(detect(y, model).is_signal for y in noise_test)
            rows.append(SweepRow(float(snr), float(mult), hits / len(sig_test),
                                 alarms / len(noise_test), len(sig_test), len(noise_test)))
    return rows
