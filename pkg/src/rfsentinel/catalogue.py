"""Synthetic emitter catalogue used for datasets, training and evaluation.

UAV controllers differ in rise time, deviation, symbol duration and carrier
offset. The 17-controller variant appends two entries that reuse earlier specs
and only differ by seed, standing in for two units of the same model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .signals import (DEFAULT_CAPTURE_S, DEFAULT_SAMPLE_RATE_HZ, NOISE, WIFI, FskEmitterSpec,
                      SampledSignal, SignalLabel, WidebandEmitterSpec, add_awgn_at_snr, bluetooth,
                      generate_fsk_burst, generate_noise, generate_wideband_burst, uav)

_ATTACK_US = (2, 4, 7, 11, 16, 22, 30, 40, 3, 6, 9, 14, 20, 27, 35)
_DEVIATION_KHZ = (150, 400, 800, 250, 600, 1000, 200, 500, 900, 300, 700, 120, 450, 850, 350)
_SYMBOL_US = (1, 2, 3, 1.5, 4, 1, 2.5, 1.2, 3.5, 2, 1, 3, 1.5, 2, 4)
# controllers 15 and 16 are second units of controllers 3 and 9
DUPLICATED_PAIRS = ((3, 15), (9, 16))

_BT_DEVIATION_KHZ = (160, 185, 205, 225, 250, 275)
_BT_OFFSET_MHZ = (-2.5, -1.5, -0.5, 0.5, 1.5, 2.5)


def _uav_specs(n: int, burst_s: float) -> tuple[FskEmitterSpec, ...]:
    offsets = np.linspace(-3e6, 3e6, 15)
    base = [FskEmitterSpec(1.0, float(offsets[i]), _DEVIATION_KHZ[i] * 1e3, _SYMBOL_US[i] * 1e-6,
                           burst_s, _ATTACK_US[i] * 1e-6) for i in range(15)]
    for src, _ in DUPLICATED_PAIRS:
        base.append(base[src])
    return tuple(base[:n])


def _bluetooth_specs(burst_s: float) -> tuple[FskEmitterSpec, ...]:
    return tuple(FskEmitterSpec(1.0, off * 1e6, dev * 1e3, 0.5e-6, burst_s, 1e-6)
                 for off, dev in zip(_BT_OFFSET_MHZ, _BT_DEVIATION_KHZ))


@dataclass(frozen=True)
class Catalogue:
    """Emitter specs plus capture geometry.

    Bursts start at a seeded onset in ``onset_range_s`` and run to the end of
    the capture window, so captures are dominated by the emission.
    """

    n_uav: int = 15
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    capture_s: float = DEFAULT_CAPTURE_S
    onset_range_s: tuple[float, float] = (20e-6, 40e-6)
    wifi_bandwidth_hz: float = 25e6
    uav_specs: tuple[FskEmitterSpec, ...] = field(init=False, repr=False)
    bluetooth_specs: tuple[FskEmitterSpec, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.n_uav <= 15 + len(DUPLICATED_PAIRS):
            raise InvalidArgumentError(f"n_uav must be in [1, {15 + len(DUPLICATED_PAIRS)}]")
        lo, hi = self.onset_range_s
        if not 0 <= lo <= hi < self.capture_s:
            raise InvalidArgumentError("onset range must lie inside the capture")
        burst = self.capture_s
        object.__setattr__(self, "uav_specs", _uav_specs(self.n_uav, burst))
        object.__setattr__(self, "bluetooth_specs", _bluetooth_specs(burst))

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.capture_s))

    @property
    def wifi_spec(self) -> WidebandEmitterSpec:
        return WidebandEmitterSpec(self.wifi_bandwidth_hz, self.capture_s)

    def uav_labels(self) -> list[SignalLabel]:
        return [uav(i) for i in range(self.n_uav)]

    def labels(self) -> list[SignalLabel]:
        return ([NOISE, WIFI] + [bluetooth(i) for i in range(len(self.bluetooth_specs))]
                + self.uav_labels())

    def spec_for(self, label: SignalLabel) -> FskEmitterSpec:
        if label.kind == "uav":
            specs = self.uav_specs
        elif label.kind == "bluetooth":
            specs = self.bluetooth_specs
        else:
            raise InvalidArgumentError(f"{label} has no FSK spec")
        if not 0 <= label.ident < len(specs):
            raise InvalidArgumentError(f"{label} not in catalogue")
        return specs[label.ident]

    def clean_burst(self, label: SignalLabel, seed: int) -> SampledSignal:
        """Noise-free emission for a label (not valid for ``noise``)."""
        onset = float(np.random.default_rng([seed, 1]).uniform(*self.onset_range_s))
        if label == WIFI:
            return generate_wideband_burst(self.wifi_spec, self.sample_rate_hz, seed,
                                           onset_s=onset, capture_duration_s=self.capture_s)
        return generate_fsk_burst(self.spec_for(label), self.sample_rate_hz, seed, onset_s=onset,
                                  capture_duration_s=self.capture_s, label=label)

    def noise_sigma(self, snr_db: float) -> float:
        """Noise level that puts a unit-amplitude emission at ``snr_db``."""
        return math.sqrt(0.5 / 10 ** (snr_db / 10))

    def synthesize(self, label: SignalLabel, snr_db: float, seed: int) -> SampledSignal:
        """One capture; noise captures use the noise level of ``snr_db``."""
        if label == NOISE:
            if not math.isfinite(snr_db):
                raise InvalidArgumentError("noise captures need a finite SNR")
            sig = generate_noise(self.n_samples, self.noise_sigma(snr_db), seed, self.sample_rate_hz)
            return sig.with_samples(sig.samples, snr_db=float(snr_db))
        burst = self.clean_burst(label, seed)
        return add_awgn_at_snr(burst, snr_db, seed + 0x5EED)


def capture_seed(base_seed: int, label: SignalLabel, index: int) -> int:
    """Stable per-capture seed; duplicated controllers get distinct seeds by construction."""
    kind = ("noise", "wifi", "bluetooth", "uav").index(label.kind)
    ident = label.ident if label.ident is not None else 0
    return int(np.random.SeedSequence([base_seed, kind, ident, index]).generate_state(1)[0])
