import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfsentinel import interference as itf
from rfsentinel.catalogue import Catalogue
from rfsentinel.errors import (AliasingError, InvalidArgumentError, NoSignalFoundError,
                               NoTransitionsError, NumericError, UnreliablePhaseError)
from rfsentinel.signals import (FskEmitterSpec, SampledSignal, WidebandEmitterSpec,
                                add_awgn_at_snr, bluetooth, generate_fsk_burst,
                                generate_wideband_burst, uav)

RATE = 100e6
N = 25_000
BIN = RATE / N


def capture(spec, snr_db=25.0, seed=0, onset_s=30e-6):
    burst = generate_fsk_burst(spec, RATE, seed, onset_s=onset_s, capture_duration_s=N / RATE)
    return add_awgn_at_snr(burst, snr_db, seed + 1)


def square_trace(levels, run_lengths):
    return np.concatenate([np.full(n, levels[i % 2]) for i, n in enumerate(run_lengths)])


# bandwidth ----------------------------------------------------------------------

def test_tone_bandwidth_is_a_few_bins():
    x = np.cos(2 * np.pi * 5e6 * np.arange(N) / RATE)
    assert itf.occupied_bandwidth(x, sample_rate_hz=RATE) <= 3 * BIN


def test_bluetooth_bandwidth_near_two_megahertz():
    cat = Catalogue()
    bw = itf.occupied_bandwidth(cat.synthesize(bluetooth(2), 25, 5), subtract_floor=True)
    assert 1e6 <= bw <= 4e6


def test_wideband_bandwidth_round_trip():
    sig = add_awgn_at_snr(generate_wideband_burst(WidebandEmitterSpec(25e6, 200e-6), RATE, 1,
                                                  onset_s=20e-6, capture_duration_s=N / RATE),
                          25, 2)
    assert abs(itf.occupied_bandwidth(sig, subtract_floor=True) - 25e6) <= 2.5e6


def test_bandwidth_rule_boundary():
    assert itf.classify_bandwidth(20e6) == itf.WIFI
    assert itf.classify_bandwidth(19.9e6) == itf.NARROWBAND
    assert itf.classify_bandwidth(1e6) == itf.NARROWBAND


def test_noise_floor_of_exponential_bins():
    p = np.random.default_rng(1).exponential(3.0, 200_000)
    assert itf.noise_floor(p) == pytest.approx(3.0, rel=0.02)


# baseband and demodulation -------------------------------------------------------

def test_tone_mixes_to_zero():
    x = np.cos(2 * np.pi * 5e6 * np.arange(N) / RATE)
    bb = itf.baseband_shift_decimate(x, 10, sample_rate_hz=RATE)
    assert bb.sample_rate_hz == RATE / 10
    spec = np.abs(np.fft.fft(bb.samples))
    f = np.fft.fftfreq(bb.samples.size, 1 / bb.sample_rate_hz)
    assert abs(f[np.argmax(spec)]) < bb.sample_rate_hz / bb.samples.size


def test_unit_decimation_keeps_the_rate():
    x = np.cos(2 * np.pi * 5e6 * np.arange(4096) / RATE)
    bb = itf.baseband_shift_decimate(x, 1, sample_rate_hz=RATE)
    assert bb.sample_rate_hz == RATE and bb.samples.size == 4096


def test_decimation_that_aliases_is_rejected():
    x = np.cos(2 * np.pi * 5e6 * np.arange(4096) / RATE)
    with pytest.raises(AliasingError):
        itf.baseband_shift_decimate(x, 50, sample_rate_hz=RATE, center_hz=5e6, bandwidth_hz=1e6)
    with pytest.raises(InvalidArgumentError):
        itf.baseband_shift_decimate(x, 0, sample_rate_hz=RATE)


def test_complex_exponential_demodulates_to_its_frequency():
    f0 = 1.234e6
    z = np.exp(2j * np.pi * f0 * np.arange(5000) / 10e6)
    trace = itf.fsk_demodulate(z, 10e6)
    np.testing.assert_allclose(trace, f0, rtol=1e-6)


def test_zero_baseband_has_unreliable_phase():
    with pytest.raises(UnreliablePhaseError):
        itf.fsk_demodulate(np.zeros(100, dtype=complex), 1e6)


def test_alternating_bits_swing_between_tones():
    spec = FskEmitterSpec(1.0, 0.0, 250e3, 4e-6, 200e-6, 1e-6, gaussian_bt=1.0)
    sig = generate_fsk_burst(spec, RATE, 0, bits=[1, -1])
    bb = itf.baseband_shift_decimate(sig, 10, center_hz=3 * RATE / 16, bandwidth_hz=1e6)
    trace = itf.fsk_demodulate(bb)[500:-500]
    # Gaussian-shaped transitions occupy part of each symbol; check the plateaus
    assert np.percentile(trace, 90) == pytest.approx(250e3, rel=0.05)
    assert np.percentile(trace, 10) == pytest.approx(-250e3, rel=0.05)


def test_decimation_leaves_deviation_unchanged():
    spec = FskEmitterSpec(1.0, 0.0, 250e3, 2e-6, 250e-6, 1e-6)
    sig = capture(spec, 30, 3, onset_s=0.0)
    center = 3 * RATE / 16
    devs = []
    for decim in (1, 10):
        bb = itf.baseband_shift_decimate(sig, decim, center_hz=center, bandwidth_hz=1.2e6)
        trace = itf.fsk_demodulate(bb)
        devs.append(itf.estimate_freq_deviation(trace, trace.size // 10))
    assert devs[1] == pytest.approx(devs[0], rel=0.05)


# fractal dimension and start point -------------------------------------------------

def test_ramp_has_dimension_one():
    assert itf.higuchi_fd(np.linspace(0, 5, 1000)) == pytest.approx(1.0, abs=0.05)


def test_white_noise_dimension_near_two():
    fd = itf.higuchi_fd(np.random.default_rng(3).normal(size=10_000), k_max=8)
    assert 1.9 <= fd <= 2.05


def test_constant_sequence_has_no_dimension():
    with pytest.raises(NumericError):
        itf.higuchi_fd(np.ones(100))


def fsk_baseband(n, rate, dev, sym_s, seed):
    rng = np.random.default_rng(seed)
    sps = int(round(sym_s * rate))
    bits = rng.choice([-1.0, 1.0], size=n // sps + 1)
    freq = np.repeat(bits, sps)[:n] * dev
    return np.exp(2j * np.pi * np.cumsum(freq) / rate)


def test_start_point_after_noise_prefix():
    rng = np.random.default_rng(8)
    rate = 10e6
    noise = rng.normal(size=5000) + 1j * rng.normal(size=5000)
    burst = 10 * fsk_baseband(20_000, rate, 250e3, 1e-6, 9)
    burst += 0.3 * (rng.normal(size=burst.size) + 1j * rng.normal(size=burst.size))
    trace = itf.fsk_demodulate(np.r_[noise, burst], rate)
    assert abs(itf.detect_start_point(trace) - 5000) <= 2 * 256


def test_burst_from_first_sample_starts_at_zero():
    trace = itf.fsk_demodulate(fsk_baseband(8000, 10e6, 250e3, 1e-6, 2), 10e6)
    assert itf.detect_start_point(trace) == 0


def test_pure_noise_has_no_start_point():
    rng = np.random.default_rng(4)
    rejected = 0
    for _ in range(100):
        try:
            itf.detect_start_point(rng.normal(size=4096))
        except NoSignalFoundError:
            rejected += 1
    assert rejected >= 95


def test_capture_start_point_near_onset():
    spec = FskEmitterSpec(1.0, 0.0, 400e3, 2e-6, 200e-6, 2e-6)
    sig = capture(spec, 25, 6, onset_s=60e-6)
    feats = itf.modulation_features(sig)
    decim = itf.choose_decimation(RATE, feats.occupied_bandwidth_hz, 10e6)
    assert abs(feats.start_index - sig.burst_span[0]) <= 2 * 256 * decim


# deviation and symbol duration ---------------------------------------------------------

@pytest.mark.parametrize("method", ["plateau", "percentile"])
def test_half_peak_to_peak(method):
    runs = np.random.default_rng(0).integers(5, 30, size=400)
    trace = square_trace((275.56e3, -275.56e3), runs)
    assert itf.estimate_freq_deviation(trace, 0, method) == pytest.approx(275.56e3, rel=1e-9)


def test_constant_trace_has_no_deviation():
    assert itf.estimate_freq_deviation(np.full(500, 3e5), 0) == 0.0


def test_deviation_round_trip_at_25_db():
    spec = FskEmitterSpec(1.0, 5e5, 250e3, 1e-6, 250e-6, 2e-6)
    assert itf.modulation_features(capture(spec, 25, 11)).freq_deviation_hz == \
        pytest.approx(250e3, rel=0.05)


def test_bluetooth_symbol_within_one_bin():
    cat = Catalogue()
    feats = itf.modulation_features(cat.synthesize(bluetooth(4), 25, 21))
    decim = itf.choose_decimation(RATE, feats.occupied_bandwidth_hz, 10e6)
    one_bin = 2 * decim / RATE
    assert abs(feats.symbol_duration_s - 0.5e-6) <= one_bin


def test_constant_bits_have_no_transitions():
    trace = itf.fsk_demodulate(np.exp(2j * np.pi * 2.5e5 * np.arange(4000) / 10e6), 10e6)
    with pytest.raises(NoTransitionsError):
        itf.estimate_symbol_duration(trace, 0, 10e6)


def test_jittered_symbols():
    rng = np.random.default_rng(5)
    runs = 10 * rng.integers(1, 4, size=600) + rng.integers(-1, 2, size=600)
    trace = square_trace((2.5e5, -2.5e5), runs) + rng.normal(0, 2e4, runs.sum())
    assert itf.estimate_symbol_duration(trace, 0, 10e6) == pytest.approx(1e-6, rel=0.05)


# triage -------------------------------------------------------------------------------

def test_region_rule_examples():
    cfg = itf.InterferenceConfig()
    bt = itf.ModulationFeatures(2e6, 275e3, 0.5e-6)
    assert itf.classify_interference(bt, cfg).verdict == itf.BLUETOOTH
    assert itf.classify_interference(itf.ModulationFeatures(25e6), cfg).verdict == itf.WIFI
    uavish = itf.ModulationFeatures(4e6, 800e3, 2e-6)
    assert itf.classify_interference(uavish, cfg).verdict == itf.UAV_CANDIDATE


def test_nearest_centroid_rule():
    cfg = itf.InterferenceConfig(rule="nearest_centroid",
                                 centroids={itf.BLUETOOTH: (0.7, 1.0), itf.UAV_CANDIDATE: (2.0, 4.0)})
    verdict = itf.classify_interference(itf.ModulationFeatures(2e6, 240e3, 0.55e-6), cfg)
    assert verdict.verdict == itf.BLUETOOTH
    with pytest.raises(InvalidArgumentError):
        itf.classify_interference(itf.ModulationFeatures(2e6, 1, 1),
                                  itf.InterferenceConfig(rule="nearest_centroid"))


def test_catalogue_routes_bluetooth_and_uav():
    cat = Catalogue()
    assert itf.analyze_interference(cat.synthesize(bluetooth(0), 25, 1)).verdict == itf.BLUETOOTH
    assert itf.analyze_interference(cat.synthesize(uav(4), 25, 1)).verdict == itf.UAV_CANDIDATE


def test_verdict_record_drops_nan():
    rec = itf.InterferenceVerdict(itf.WIFI, itf.ModulationFeatures(25e6)).to_record("a.f32")
    assert rec["verdict"] == itf.WIFI and rec["freq_deviation_hz"] is None


specs = st.builds(
    lambda dev, sym, bt, off: FskEmitterSpec(1.0, off, dev, sym, N / RATE, 2e-6, gaussian_bt=bt),
    st.floats(100e3, 1e6), st.floats(0.5e-6, 4e-6), st.floats(0.3, 1.0), st.floats(-3e6, 3e6))


@settings(max_examples=50)
@given(specs, st.sampled_from([20.0, 25.0]), st.integers(0, 2**16))
def test_fsk_round_trip(spec, snr, seed):
    feats = itf.modulation_features(capture(spec, snr, seed))
    assert feats.freq_deviation_hz == pytest.approx(spec.freq_deviation_hz, rel=0.05)
    assert feats.symbol_duration_s == pytest.approx(spec.symbol_duration_s, rel=0.05)


@settings(max_examples=10)
@given(specs, st.floats(10e-6, 80e-6))
def test_estimates_ignore_burst_position(spec, onset_s):
    base = itf.modulation_features(capture(spec, 25.0, 3))
    moved = itf.modulation_features(capture(spec, 25.0, 3, onset_s=onset_s))
    assert moved.freq_deviation_hz == pytest.approx(base.freq_deviation_hz, rel=0.05)
    assert moved.symbol_duration_s == pytest.approx(base.symbol_duration_s, rel=0.05)
