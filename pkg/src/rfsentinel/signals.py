"""Sample-domain data types and synthetic emitters.

Everything here is a pure function of its arguments and an integer seed, so a
capture can always be regenerated from the metadata stored next to it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import InvalidArgumentError

DEFAULT_SAMPLE_RATE_HZ = 100e6
DEFAULT_CAPTURE_S = 0.25e-3

LABEL_KINDS = ("noise", "wifi", "bluetooth", "uav")


@dataclass(frozen=True, order=True)
class SignalLabel:
    """Class of a capture: ``noise``, ``wifi``, ``bluetooth:<id>`` or ``uav:<id>``."""

    kind: str
    ident: Optional[int] = None

    def __post_init__(self):
        if self.kind not in LABEL_KINDS:
            raise InvalidArgumentError(f"unknown label kind {self.kind!r}")
        if self.kind in ("bluetooth", "uav") and self.ident is None:
            raise InvalidArgumentError(f"{self.kind} label needs an id")
        if self.kind in ("noise", "wifi") and self.ident is not None:
            raise InvalidArgumentError(f"{self.kind} label takes no id")

    def __str__(self):
        return self.kind if self.ident is None else f"{self.kind}:{self.ident}"

    @classmethod
    def parse(cls, text: str) -> "SignalLabel":
        kind, _, ident = text.partition(":")
        return cls(kind, int(ident) if ident else None)


NOISE = SignalLabel("noise")
WIFI = SignalLabel("wifi")


def bluetooth(device_id: int) -> SignalLabel:
    return SignalLabel("bluetooth", device_id)


def uav(controller_id: int) -> SignalLabel:
    return SignalLabel("uav", controller_id)


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Uniformly sampled real trace plus acquisition metadata.

    ``burst_span`` is the half-open sample range occupied by the emission, when
    known; SNR is defined over that range only.
    """

    samples: np.ndarray
    sample_rate_hz: float
    label: SignalLabel = NOISE
    seed: int = 0
    snr_db: Optional[float] = None
    burst_span: Optional[tuple[int, int]] = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise InvalidArgumentError("a signal needs at least 2 samples")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("signal samples must be finite")
        if not self.sample_rate_hz > 0:
            raise InvalidArgumentError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", x)

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray, **changes) -> "SampledSignal":
        return replace(self, samples=samples, **changes)


@dataclass(frozen=True)
class FskEmitterSpec:
    """GFSK burst parameters.

    ``amplitude`` stands for sqrt(2 Eb / Tb); ``carrier_offset_hz`` is relative
    to the band center chosen at generation time.
    """

    amplitude: float
    carrier_offset_hz: float
    freq_deviation_hz: float
    symbol_duration_s: float
    burst_duration_s: float
    envelope_attack_s: float
    gaussian_bt: float = 0.5
    phase_offset_rad: float = 0.0

    def validate(self, sample_rate_hz: float, center_hz: float) -> None:
        if self.amplitude <= 0:
            raise InvalidArgumentError("amplitude must be positive")
        if self.freq_deviation_hz <= 0 or self.freq_deviation_hz >= sample_rate_hz / 4:
            raise InvalidArgumentError(
                f"deviation {self.freq_deviation_hz:g} Hz not representable at "
                f"{sample_rate_hz:g} Sa/s (needs 0 < dev < rate/4)")
        if self.symbol_duration_s * sample_rate_hz < 8:
            raise InvalidArgumentError("symbol shorter than 8 samples")
        if self.burst_duration_s <= 0 or self.envelope_attack_s <= 0:
            raise InvalidArgumentError("burst and attack durations must be positive")
        if not 0 < self.gaussian_bt <= 1:
            raise InvalidArgumentError("gaussian_bt must lie in (0, 1]")
        carrier = center_hz + self.carrier_offset_hz
        if carrier - self.freq_deviation_hz <= 0 or carrier + self.freq_deviation_hz >= sample_rate_hz / 2:
            raise InvalidArgumentError(f"carrier {carrier:g} Hz outside (0, Nyquist)")


@dataclass(frozen=True)
class WidebandEmitterSpec:
    occupied_bandwidth_hz: float
    burst_duration_s: float
    amplitude: float = 1.0

    def validate(self, sample_rate_hz: float, center_hz: float) -> None:
        bw = self.occupied_bandwidth_hz
        if bw <= 0 or bw >= sample_rate_hz / 2:
            raise InvalidArgumentError(
                f"bandwidth {bw:g} Hz must be below Nyquist {sample_rate_hz / 2:g} Hz")
        if center_hz - bw / 2 < 0 or center_hz + bw / 2 > sample_rate_hz / 2:
            raise InvalidArgumentError("band does not fit between 0 Hz and Nyquist")
        if self.burst_duration_s <= 0 or self.amplitude <= 0:
            raise InvalidArgumentError("burst duration and amplitude must be positive")


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _capture_geometry(sample_rate_hz, burst_duration_s, onset_s, capture_duration_s):
    if onset_s < 0:
        raise InvalidArgumentError("onset must be non-negative")
    if capture_duration_s is None:
        capture_duration_s = onset_s + burst_duration_s
    n = int(round(sample_rate_hz * capture_duration_s))
    start = int(round(sample_rate_hz * onset_s))
    stop = min(n, start + int(round(sample_rate_hz * burst_duration_s)))
    if n < 2 or stop - start < 2:
        raise InvalidArgumentError("burst does not fit inside the capture window")
    return n, start, stop


def generate_noise(n_samples: int, sigma: float, seed: int,
                   sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> SampledSignal:
    """Zero-mean white Gaussian noise labelled ``noise``."""
    if n_samples < 2:
        raise InvalidArgumentError("n_samples must be >= 2")
    if not sigma > 0:
        raise InvalidArgumentError("sigma must be positive")
    x = _rng(seed).normal(0.0, sigma, n_samples)
    return SampledSignal(x, sample_rate_hz, NOISE, seed)


def gfsk_frequency_pulse(bits: np.ndarray, n: int, samples_per_symbol: float,
                         bt: float) -> np.ndarray:
    """NRZ bit stream at sample resolution, smoothed by a Gaussian of bandwidth-time ``bt``."""
    idx = np.minimum((np.arange(n) / samples_per_symbol).astype(int), bits.size - 1)
    nrz = bits[idx].astype(float)
    # Gaussian pulse-shaping filter: sigma_t = sqrt(ln 2) / (2 pi B), B = BT / Tb
    sigma = math.sqrt(math.log(2)) / (2 * math.pi * bt) * samples_per_symbol
    return gaussian_filter1d(nrz, sigma, mode="nearest", truncate=4.0)


def raised_cosine_attack(n: int, attack_samples: float) -> np.ndarray:
    t = np.arange(n, dtype=float)
    env = np.ones(n)
    rising = t < attack_samples
    env[rising] = 0.5 * (1 - np.cos(np.pi * t[rising] / attack_samples))
    return env


def generate_fsk_burst(spec: FskEmitterSpec, sample_rate_hz: float, seed: int, *,
                       onset_s: float = 0.0, capture_duration_s: Optional[float] = None,
                       center_hz: Optional[float] = None, bits: Optional[Sequence[int]] = None,
                       label: SignalLabel = uav(0)) -> SampledSignal:
    """Noise-free GFSK burst starting at ``onset_s`` inside a capture window.

    The band center defaults to 3/16 of the sample rate, which sits inside the
    pass band of the two-level Haar detail filter. ``bits`` overrides the seeded
    random +/-1 sequence.
    """
    if center_hz is None:
        center_hz = 3 * sample_rate_hz / 16
    spec.validate(sample_rate_hz, center_hz)
    n, start, stop = _capture_geometry(sample_rate_hz, spec.burst_duration_s,
                                       onset_s, capture_duration_s)
    m = stop - start
    sps = spec.symbol_duration_s * sample_rate_hz
    n_bits = int(math.ceil(m / sps)) + 1
    if bits is None:
        bits = _rng(seed).choice(np.array([-1, 1]), size=n_bits)
    else:
        bits = np.asarray(bits)
        if bits.size < n_bits:
            bits = np.resize(bits, n_bits)
    pulse = gfsk_frequency_pulse(bits, m, sps, spec.gaussian_bt)
    inst_freq = center_hz + spec.carrier_offset_hz + spec.freq_deviation_hz * pulse
    phase = spec.phase_offset_rad + 2 * np.pi * np.cumsum(inst_freq) / sample_rate_hz
    env = raised_cosine_attack(m, spec.envelope_attack_s * sample_rate_hz)
    x = np.zeros(n)
    x[start:stop] = spec.amplitude * env * np.cos(phase)
    return SampledSignal(x, sample_rate_hz, label, seed, None, (start, stop))


def generate_wideband_burst(spec: WidebandEmitterSpec, sample_rate_hz: float, seed: int, *,
                            onset_s: float = 0.0, capture_duration_s: Optional[float] = None,
                            center_hz: Optional[float] = None,
                            label: SignalLabel = WIFI) -> SampledSignal:
    """Band-limited Gaussian burst (Wi-Fi stand-in), centred at rate/4 by default.

    Power is scaled to match a tone of the same ``amplitude``.
    """
    if center_hz is None:
        center_hz = sample_rate_hz / 4
    spec.validate(sample_rate_hz, center_hz)
    n, start, stop = _capture_geometry(sample_rate_hz, spec.burst_duration_s,
                                       onset_s, capture_duration_s)
    m = stop - start
    spectrum = np.fft.rfft(_rng(seed).normal(size=m))
    freqs = np.fft.rfftfreq(m, 1 / sample_rate_hz)
    half = spec.occupied_bandwidth_hz / 2
    spectrum[np.abs(freqs - center_hz) > half] = 0
    burst = np.fft.irfft(spectrum, m)
    burst *= (spec.amplitude / math.sqrt(2)) / np.sqrt(np.mean(burst ** 2))
    x = np.zeros(n)
    x[start:stop] = burst
    return SampledSignal(x, sample_rate_hz, label, seed, None, (start, stop))


def burst_support(signal: SampledSignal) -> tuple[int, int]:
    if signal.burst_span is not None:
        return signal.burst_span
    nz = np.flatnonzero(signal.samples)
    if nz.size == 0:
        raise InvalidArgumentError("signal has no nonzero burst")
    return int(nz[0]), int(nz[-1]) + 1


def add_awgn_at_snr(signal: SampledSignal, snr_db: float, seed: int) -> SampledSignal:
    """Add white Gaussian noise over the whole window at a burst-support SNR.

    ``snr_db = inf`` returns the input samples unchanged.
    """
    start, stop = burst_support(signal)
    p_burst = float(np.mean(signal.samples[start:stop] ** 2))
    if p_burst <= 0:
        raise InvalidArgumentError("zero-power burst")
    if math.isinf(snr_db) and snr_db > 0:
        return signal.with_samples(signal.samples.copy(), snr_db=math.inf)
    sigma = math.sqrt(p_burst / 10 ** (snr_db / 10))
    noisy = signal.samples + _rng(seed).normal(0.0, sigma, signal.n_samples)
    return signal.with_samples(noisy, snr_db=float(snr_db))


def measure_snr(signal, noise_reference) -> float:
    """10 log10 of the mean-power ratio of two traces (arrays or signals)."""
    s = np.asarray(getattr(signal, "samples", signal), dtype=float)
    r = np.asarray(getattr(noise_reference, "samples", noise_reference), dtype=float)
    if s.size == 0 or r.size == 0:
        raise InvalidArgumentError("empty input")
    p_noise = float(np.mean(r ** 2))
    if p_noise == 0:
        raise InvalidArgumentError("noise reference has zero power")
    return 10 * math.log10(float(np.mean(s ** 2)) / p_noise)
