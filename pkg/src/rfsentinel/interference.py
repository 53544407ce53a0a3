"""Second-stage triage of detected emissions: Wi-Fi, Bluetooth or UAV candidate.

Wi-Fi is recognised by occupied bandwidth alone. Narrowband emissions are
mixed to complex baseband, decimated, FM-demodulated from the phase
derivative, and the demodulated trace yields a frequency deviation and a
symbol duration that place the emission inside or outside the Bluetooth
region.
"""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import filtfilt, firwin, hilbert

from .errors import (AliasingError, InvalidArgumentError, NoSignalFoundError,
                     NoTransitionsError, NumericError, UnreliablePhaseError)

WIFI, BLUETOOTH, UAV_CANDIDATE, NARROWBAND = "wifi", "bluetooth", "uav_candidate", "narrowband"


@dataclass(frozen=True)
class InterferenceConfig:
    wifi_threshold_hz: float = 20e6
    power_fraction: float = 0.99
    subtract_noise_floor: bool = True
    target_rate_hz: float = 10e6
    filter_margin: float = 3.0
    # start-point search
    window: int = 256
    hop: int = 64
    k_max: int = 8
    fd_margin: float = 0.15
    noise_fd: Optional[float] = None
    guard_windows: int = 1
    deviation_method: str = "plateau"
    # Bluetooth region
    bt_symbol_s: float = 0.5e-6
    bt_symbol_tol_s: float = 0.1e-6
    bt_max_deviation_hz: float = 350e3
    rule: str = "region"  # "region" | "nearest_centroid"
    centroids: Optional[dict] = None


@dataclass(frozen=True)
class ModulationFeatures:
    occupied_bandwidth_hz: float
    freq_deviation_hz: float = math.nan
    symbol_duration_s: float = math.nan
    start_index: int = -1


@dataclass(frozen=True)
class InterferenceVerdict:
    verdict: str
    features: ModulationFeatures

    def to_record(self, file: str = "") -> dict:
        f = self.features
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v
        return {"file": file, "verdict": self.verdict,
                "bandwidth_hz": num(f.occupied_bandwidth_hz),
                "freq_deviation_hz": num(f.freq_deviation_hz),
                "symbol_duration_s": num(f.symbol_duration_s),
                "start_index": f.start_index}


@dataclass(frozen=True, eq=False)
class Baseband:
    samples: np.ndarray  # complex
    sample_rate_hz: float
    shift_hz: float


def _samples_and_rate(signal, sample_rate_hz=None):
    x = np.asarray(getattr(signal, "samples", signal))
    rate = getattr(signal, "sample_rate_hz", sample_rate_hz)
    if rate is None:
        raise InvalidArgumentError("sample rate required for a bare array")
    return x, float(rate)


def periodogram(x: np.ndarray, rate: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Hann-windowed periodogram ``(freqs, power)``."""
    p = np.abs(np.fft.rfft(x * np.hanning(x.size))) ** 2
    return np.fft.rfftfreq(x.size, 1 / rate), p


def noise_floor(power: np.ndarray, quantile: float = 0.1) -> float:
    """Mean noise level per bin, from a low quantile of exponentially distributed bins."""
    return float(np.quantile(power, quantile) / -np.log1p(-quantile))


def occupied_band(signal, fraction: float = 0.99, sample_rate_hz: Optional[float] = None,
                  subtract_floor: bool = False) -> tuple[float, float, float]:
    """Smallest contiguous band around the spectral peak holding ``fraction`` of the power.

    Returns ``(low_hz, high_hz, peak_hz)``; the band spans whole bins, so its
    width is ``high_hz - low_hz``. With ``subtract_floor`` the white-noise
    floor is removed from every bin first, which keeps broadband receiver noise
    from inflating the estimate at moderate SNR.
    """
    x, rate = _samples_and_rate(signal, sample_rate_hz)
    x = np.asarray(x, dtype=float)
    if x.size < 256:
        raise InvalidArgumentError("bandwidth analysis needs at least 256 samples")
    freqs, p = periodogram(x, rate)
    if subtract_floor:
        p = np.maximum(p - noise_floor(p), 0.0)
    total = p.sum()
    if total <= 0:
        raise InvalidArgumentError("all-zero signal has no bandwidth")
    k = int(np.argmax(p))
    cum = np.concatenate(([0.0], np.cumsum(p)))
    target = fraction * total
    lefts = np.arange(k + 1)
    # smallest r >= k with cum[r + 1] - cum[l] >= target
    rights = np.searchsorted(cum, cum[lefts] + target * (1 - 1e-12), side="left") - 1
    rights = np.maximum(rights, k)
    ok = rights < p.size
    widths = np.where(ok, rights - lefts + 1, np.iinfo(np.int64).max)
    best = int(np.argmin(widths))
    l, r = int(lefts[best]), int(rights[best])
    df = rate / x.size
    return freqs[l] - df / 2, freqs[r] + df / 2, float(freqs[k])


def occupied_bandwidth(signal, fraction: float = 0.99, sample_rate_hz: Optional[float] = None,
                       subtract_floor: bool = False) -> float:
    lo, hi, _ = occupied_band(signal, fraction, sample_rate_hz, subtract_floor)
    return hi - lo


def classify_bandwidth(bw_hz: float, wifi_threshold_hz: float = 20e6) -> str:
    return WIFI if bw_hz >= wifi_threshold_hz else NARROWBAND


def baseband_shift_decimate(signal, decimation: int, *, center_hz: Optional[float] = None,
                            bandwidth_hz: Optional[float] = None, filter_margin: float = 3.0,
                            sample_rate_hz: Optional[float] = None) -> Baseband:
    """Mix the occupied band to 0 Hz, low-pass and keep every ``decimation``-th sample.

    The shift frequency defaults to the middle of the occupied band. The
    low-pass cutoff is the new Nyquist frequency, narrowed to
    ``filter_margin * bandwidth / 2`` when the emission bandwidth is known.
    """
    x, rate = _samples_and_rate(signal, sample_rate_hz)
    x = np.asarray(x, dtype=float)
    if decimation < 1:
        raise InvalidArgumentError("decimation must be >= 1")
    if center_hz is None or bandwidth_hz is None:
        lo, hi, _ = occupied_band(x, sample_rate_hz=rate)
        center_hz = (lo + hi) / 2 if center_hz is None else center_hz
        bandwidth_hz = hi - lo if bandwidth_hz is None else bandwidth_hz
    new_rate = rate / decimation
    if new_rate < 4 * bandwidth_hz and decimation > 1:
        raise AliasingError(f"rate {new_rate:g} Sa/s below 4 x bandwidth {bandwidth_hz:g} Hz")
    n = np.arange(x.size)
    z = hilbert(x) * np.exp(-2j * np.pi * center_hz / rate * n)
    cutoff = lowpass_cutoff(rate, decimation, bandwidth_hz, filter_margin)
    return Baseband(_lowpass(z, cutoff, rate, decimation)[::decimation], new_rate, float(center_hz))


def lowpass_cutoff(rate: float, decimation: int, bandwidth_hz: float, filter_margin: float) -> float:
    return min(rate / decimation / 2, filter_margin * bandwidth_hz / 2)


def _lowpass(z: np.ndarray, cutoff: float, rate: float, decimation: int) -> np.ndarray:
    if cutoff >= 0.99 * rate / 2:
        return z
    taps = firwin(64 * decimation + 1, cutoff, fs=rate)
    return filtfilt(taps, [1.0], z)


def fsk_demodulate(baseband, sample_rate_hz: Optional[float] = None) -> np.ndarray:
    """Instantaneous frequency (Hz) from the wrapped phase step between samples."""
    z = np.asarray(getattr(baseband, "samples", baseband))
    rate = getattr(baseband, "sample_rate_hz", sample_rate_hz)
    if rate is None:
        raise InvalidArgumentError("sample rate required")
    if z.size < 2:
        raise InvalidArgumentError("need at least 2 baseband samples")
    mag = np.abs(z)
    top = mag.max()
    if top == 0 or np.mean(mag <= 1e-12 * top) > 0.01:
        raise UnreliablePhaseError("too many zero-magnitude samples")
    return rate / (2 * np.pi) * np.angle(z[1:] * np.conj(z[:-1]))


def higuchi_fd(x, k_max: int = 8) -> float:
    """Higuchi fractal dimension (slope of log L(k) against log 1/k)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if k_max < 2 or n < 2 * k_max:
        raise InvalidArgumentError("need k_max >= 2 and length >= 2 * k_max")
    lengths = np.empty(k_max)
    for k in range(1, k_max + 1):
        lk = []
        for m in range(k):
            steps = (n - 1 - m) // k
            if steps < 1:
                continue
            curve = np.abs(np.diff(x[m::k][:steps + 1])).sum()
            lk.append(curve * (n - 1) / (steps * k) / k)
        lengths[k - 1] = np.mean(lk)
    if np.any(lengths <= 0):
        raise NumericError("fractal dimension undefined for a constant sequence")
    ks = np.arange(1, k_max + 1)
    slope = np.polyfit(np.log(1.0 / ks), np.log(lengths), 1)[0]
    return float(slope)


@lru_cache(maxsize=64)
def chain_noise_fd(cutoff_hz: float, rate: float, decimation: int, window: int = 256,
                   k_max: int = 8, n_windows: int = 16) -> float:
    """Median windowed FD of white noise pushed through the same filter and demodulator.

    The low-pass before decimation smooths noise, so its demodulated FD sits
    below the white-noise value of 2; start-point detection compares against
    this calibrated reference instead.
    """
    rng = np.random.default_rng(20190301)
    n = (n_windows * window + 1) * decimation
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    z = _lowpass(z, cutoff_hz, rate, decimation)[::decimation]
    trace = fsk_demodulate(z, rate / decimation)
    return float(np.median(windowed_fd(trace, window, window, k_max)))


def windowed_fd(trace, window: int = 256, hop: int = 64, k_max: int = 8) -> np.ndarray:
    x = np.asarray(trace, dtype=float)
    starts = range(0, x.size - window + 1, hop)
    out = []
    for s in starts:
        seg = x[s:s + window]
        out.append(higuchi_fd(seg, k_max) if np.ptp(seg) > 0 else 1.0)
    return np.array(out)


def detect_start_point(demod_trace, window: int = 256, hop: int = 64, k_max: int = 8,
                       margin: float = 0.15, noise_fd: Optional[float] = None) -> int:
    """Leading index of the first window whose Higuchi FD falls below ``noise_fd - margin``.

    ``noise_fd`` defaults to 2, the dimension of white noise.
    """
    x = np.asarray(demod_trace, dtype=float)
    if x.size < 4 * window:
        raise InvalidArgumentError("trace shorter than 4 windows")
    fd = windowed_fd(x, window, hop, k_max)
    ref = 2.0 if noise_fd is None else noise_fd
    hits = np.flatnonzero(fd < ref - margin)
    if hits.size == 0:
        raise NoSignalFoundError("no window departs from the noise fractal dimension")
    return int(hits[0] * hop)


def _plateau_level(values: np.ndarray) -> float:
    """Mean of the samples in the densest histogram bin (Freedman-Diaconis widths)."""
    edges = np.histogram_bin_edges(values, bins="fd")
    if edges.size > 201:
        edges = np.linspace(values.min(), values.max(), 201)
    counts, edges = np.histogram(values, edges)
    i = int(np.argmax(counts))
    inside = values[(values >= edges[i]) & (values <= edges[i + 1])]
    return float(inside.mean())


def _binarize(x: np.ndarray, split: float) -> np.ndarray:
    binary = (x > split).astype(np.int8)
    # majority of three drops single-sample noise crossings near edges
    binary[1:-1] = (binary[:-2] + binary[1:-1] + binary[2:]) >= 2
    return binary


def _long_run_levels(x: np.ndarray, split: float, symbol_samples: float,
                     min_symbols: tuple[float, ...] = (2.5, 1.75)) -> list[Optional[float]]:
    """Median level inside long runs as ``[low, high]``; ``None`` when a
    polarity has no run reaching any of the ``min_symbols`` floors."""
    binary = _binarize(x, split)
    edges = np.r_[0, np.flatnonzero(np.diff(binary)) + 1, x.size]
    guard = int(round(0.75 * symbol_samples))
    starts, ends = edges[:-1], edges[1:]
    levels: list[Optional[float]] = [None, None]
    for polarity in (0, 1):
        for floor in min_symbols:
            inner = [x[s + guard:e - guard] for s, e in zip(starts, ends)
                     if binary[s] == polarity and e - s >= floor * symbol_samples
                     and e - s > 2 * guard]
            if inner:
                levels[polarity] = float(np.median(np.concatenate(inner)))
                break
    return levels


def _edge_misalignment(x: np.ndarray, split: float, period: float) -> float:
    """Lattice phase of falling edges minus that of rising edges, in samples.

    Zero when ``split`` sits midway between the tones; negative above it,
    where high runs shrink from both ends.
    """
    step = np.diff(_binarize(x, split).astype(np.int8))
    rising, falling = np.flatnonzero(step > 0), np.flatnonzero(step < 0)
    if rising.size < 2 or falling.size < 2:
        return math.nan
    phase = [np.angle(np.exp(2j * np.pi * e / period).sum()) for e in (rising, falling)]
    return float(np.angle(np.exp(1j * (phase[1] - phase[0])))) * period / (2 * np.pi)


def tone_centre(trace, symbol_samples: float, n_splits: int = 41) -> Optional[float]:
    """Threshold at which rising and falling edges share one symbol lattice.

    Scans splits between the 5th and 95th percentiles for sign changes of
    :func:`_edge_misalignment`, skipping jumps where the phase wraps. Heavy
    intersymbol interference moves edges by whole symbols as the split
    crosses isolated-symbol peaks, so several crossings can appear; the one
    whose long-run levels are centred on it wins. ``None`` when no crossing
    exists.
    """
    x = np.asarray(trace, dtype=float)
    splits = np.linspace(*np.percentile(x, [5, 95]), n_splits)
    m = np.array([_edge_misalignment(x, s, symbol_samples) for s in splits])
    crossings = []
    for i in range(n_splits - 1):
        a, b = m[i], m[i + 1]
        if a >= 0 > b and a - b < symbol_samples / 2:
            crossings.append((a - b, float(splits[i] + (splits[i + 1] - splits[i]) * a / (a - b))))
    if not crossings:
        return None

    def off_centre(c: float) -> float:
        lo, hi = _long_run_levels(x, c, symbol_samples)
        if lo is None or hi is None or hi <= lo:
            return math.inf
        return abs((lo + hi) / 2 - c) / (hi - lo)

    return min(crossings, key=lambda jc: (off_centre(jc[1]), jc[0]))[1]


def tone_levels(trace, symbol_samples: Optional[float] = None,
                iterations: int = 4) -> tuple[float, float]:
    """Lower and upper tone levels of a two-tone trace.

    Histogram plateaus give a first estimate; the split between them starts at
    the trace mean and moves to their midpoint, so an unequal share of high
    and low symbols does not bias it. Given ``symbol_samples``, the levels are
    re-measured inside runs of two and a half symbols or more, because with
    strong Gaussian shaping an isolated symbol never reaches the full deviation
    and can form its own, inner histogram peak. Those runs are cut at
    :func:`tone_centre`; a tone without long runs is mirrored about it.
    """
    x = np.asarray(trace, dtype=float)
    split = x.mean()
    lo = hi = split
    for _ in range(iterations):
        upper, lower = x[x > split], x[x <= split]
        if upper.size == 0 or lower.size == 0:
            return lo, hi
        lo, hi = _plateau_level(lower), _plateau_level(upper)
        split = (lo + hi) / 2
    if symbol_samples is None:
        return lo, hi
    centre = tone_centre(x, symbol_samples)
    if centre is None:
        long_lo, long_hi = _long_run_levels(x, split, symbol_samples)
        return (lo if long_lo is None else long_lo), (hi if long_hi is None else long_hi)
    long_lo, long_hi = _long_run_levels(x, centre, symbol_samples)
    if long_lo is None and long_hi is None:
        return lo, hi
    if long_lo is None:
        long_lo = 2 * centre - long_hi
    if long_hi is None:
        long_hi = 2 * centre - long_lo
    return long_lo, long_hi


def estimate_freq_deviation(demod_trace, start: int, method: str = "plateau",
                            low_pct: float = 0.5, high_pct: float = 99.5,
                            symbol_samples: Optional[float] = None) -> float:
    """Half the peak-to-peak frequency swing of the trace after ``start``.

    ``"plateau"`` takes the swing between the two tone levels of
    :func:`tone_levels`, which ignores noise spikes and filter overshoot at
    symbol edges. ``"percentile"`` uses the ``low_pct``/``high_pct``
    percentiles.
    """
    x = np.asarray(demod_trace, dtype=float)
    if not 0 <= start < x.size or x.size - start < 100:
        raise InvalidArgumentError("need at least 100 samples after the start point")
    x = x[start:]
    if method == "percentile":
        lo, hi = np.percentile(x, [low_pct, high_pct])
    elif method == "plateau":
        lo, hi = tone_levels(x, symbol_samples)
    else:
        raise InvalidArgumentError(f"unknown deviation method {method!r}")
    return float(hi - lo) / 2


def transition_edges(demod_trace, start: int, split: Optional[float] = None) -> np.ndarray:
    """Sample indices (relative to ``start``) where the binarized trace flips;
    the threshold defaults to the midpoint of the histogram tone levels."""
    x = np.asarray(demod_trace, dtype=float)[start:]
    if x.size < 2 or np.ptp(x) <= 1e-9 * max(np.max(np.abs(x)), 1.0):
        return np.empty(0, dtype=np.intp)  # rounding jitter only
    if split is None:
        split = float(np.mean(tone_levels(x)))
    return np.flatnonzero(np.diff(_binarize(x, split)))


def transition_intervals(demod_trace, start: int, split: Optional[float] = None) -> np.ndarray:
    return np.diff(transition_edges(demod_trace, start, split))


def estimate_symbol_duration(demod_trace, start: int, sample_rate_hz: float,
                             bin_samples: int = 2, refine: bool = True,
                             split: Optional[float] = None) -> float:
    """Dominant interval between transitions of the binarized trace.

    The modal histogram bin is refined to the mean of the intervals in it and
    its two neighbours. With ``refine`` the estimate comes from the edge
    lattice instead, with the histogram value only bounding the search.
    """
    if not 0 <= start < np.asarray(demod_trace).size:
        raise InvalidArgumentError("start outside the trace")
    edges = transition_edges(demod_trace, start, split)
    intervals = np.diff(edges)
    if intervals.size < 1:
        raise NoTransitionsError("fewer than 2 transitions after the start point")
    bins = np.arange(0, intervals.max() + 2 * bin_samples, bin_samples)
    counts, bins = np.histogram(intervals, bins)
    mode = int(np.argmax(counts))
    lo, hi = bins[max(mode - 1, 0)], bins[min(mode + 2, bins.size - 1)]
    period = float(intervals[(intervals >= lo) & (intervals < hi)].mean())
    if refine and edges.size >= 4:
        # the median run keeps a tie won by noise runts from capping the search
        bound = 1.6 * max(period, float(np.median(intervals)))
        lattice = _lattice_period(edges.astype(float), bin_samples, bound)
        if lattice is not None:
            period = lattice
    return period / sample_rate_hz


def _lattice_period(edges: np.ndarray, min_period: float, max_period: float,
                    relative: float = 0.75, floor: float = 0.25,
                    steps_per_octave: int = 400) -> Optional[float]:
    """Longest period on which rising and falling edges each fall on a lattice.

    A threshold away from the centre of the two tones shifts every rising edge
    one way and every falling edge the other, so each polarity keeps its own
    phase and the spacing within a polarity stays a whole number of symbols.
    Coherence is the phase-aligned edge count over the total. Whole fractions
    of the period are exactly as coherent as the period itself, so the longest
    peak within ``relative`` of the best one wins. Timing jitter lowers every
    peak together, which is why the cut is relative.
    """
    groups = [edges[0::2], edges[1::2]]
    if max_period <= min_period or min(g.size for g in groups) < 2:
        return None
    n = int(np.ceil(steps_per_octave * np.log2(max_period / min_period))) + 1
    periods = np.geomspace(min_period, max_period, n)
    power = sum(np.abs(np.exp(2j * np.pi * g[None, :] / periods[:, None]).sum(axis=1)) ** 2
                for g in groups)
    score = power / sum(g.size ** 2 for g in groups)
    cut = max(floor, relative * score.max())
    peaks = np.flatnonzero((score[1:-1] >= cut) & (score[1:-1] >= score[:-2])
                           & (score[1:-1] >= score[2:])) + 1
    if peaks.size == 0:
        return None
    guess = periods[peaks[-1]]
    # least squares on whole-symbol counts with one phase per polarity
    rows, offsets, targets = [], [], []
    for col, g in enumerate(groups):
        k = np.rint((g - g[0]) / guess)
        rows.append(k)
        offsets.append(np.full(g.size, col))
        targets.append(g)
    k, col, y = np.concatenate(rows), np.concatenate(offsets), np.concatenate(targets)
    design = np.column_stack([k, col == 0, col == 1]).astype(float)
    solution, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(solution[0])


def classify_interference(features: ModulationFeatures,
                          config: InterferenceConfig = InterferenceConfig()) -> InterferenceVerdict:
    if classify_bandwidth(features.occupied_bandwidth_hz, config.wifi_threshold_hz) == WIFI:
        return InterferenceVerdict(WIFI, features)
    dev, sym = features.freq_deviation_hz, features.symbol_duration_s
    if config.rule == "nearest_centroid":
        if not config.centroids:
            raise InvalidArgumentError("nearest_centroid rule needs centroids")
        point = np.array([dev / config.bt_max_deviation_hz, sym / config.bt_symbol_s])
        best = min(config.centroids.items(),
                   key=lambda kv: np.sum((point - np.array(kv[1])) ** 2))
        return InterferenceVerdict(best[0], features)
    if config.rule != "region":
        raise InvalidArgumentError(f"unknown rule {config.rule!r}")
    in_symbol = abs(sym - config.bt_symbol_s) <= config.bt_symbol_tol_s
    if in_symbol and dev < config.bt_max_deviation_hz:
        return InterferenceVerdict(BLUETOOTH, features)
    return InterferenceVerdict(UAV_CANDIDATE, features)


def choose_decimation(sample_rate_hz: float, bandwidth_hz: float, target_rate_hz: float) -> int:
    wanted = max(1, int(round(sample_rate_hz / target_rate_hz)))
    limit = max(1, int(sample_rate_hz // (4 * bandwidth_hz))) if bandwidth_hz > 0 else wanted
    return min(wanted, limit)


def modulation_features(signal, config: InterferenceConfig = InterferenceConfig()) -> ModulationFeatures:
    """Full narrowband feature chain for one capture."""
    lo, hi, _ = occupied_band(signal, config.power_fraction,
                              subtract_floor=config.subtract_noise_floor)
    bw = hi - lo
    if classify_bandwidth(bw, config.wifi_threshold_hz) == WIFI:
        return ModulationFeatures(bw)
    rate = signal.sample_rate_hz
    decim = choose_decimation(rate, bw, config.target_rate_hz)
    bb = baseband_shift_decimate(signal, decim, center_hz=(lo + hi) / 2, bandwidth_hz=bw,
                                 filter_margin=config.filter_margin)
    trace = fsk_demodulate(bb)
    noise_fd = config.noise_fd
    if noise_fd is None:
        cutoff = lowpass_cutoff(rate, decim, bw, config.filter_margin)
        noise_fd = chain_noise_fd(cutoff, rate, decim, config.window, config.k_max)
    start = detect_start_point(trace, config.window, config.hop, config.k_max,
                               config.fd_margin, noise_fd)
    analysis_start = min(start + config.guard_windows * config.window, trace.size - 100)
    tail, bb_rate = trace[analysis_start:], bb.sample_rate_hz
    sym = estimate_symbol_duration(tail, 0, bb_rate)
    # second pass: long-run tone levels give a centred threshold for the symbol fit
    lo_level, hi_level = tone_levels(tail, sym * bb_rate)
    sym = estimate_symbol_duration(tail, 0, bb_rate, split=(lo_level + hi_level) / 2)
    dev = estimate_freq_deviation(tail, 0, config.deviation_method, symbol_samples=sym * bb_rate)
    return ModulationFeatures(bw, dev, sym, int(start * decim))


def analyze_interference(signal, config: InterferenceConfig = InterferenceConfig()) -> InterferenceVerdict:
    return classify_interference(modulation_features(signal, config), config)
