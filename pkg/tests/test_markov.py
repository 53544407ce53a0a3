import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rfsentinel.catalogue import Catalogue, capture_seed
from rfsentinel.errors import InvalidArgumentError
from rfsentinel.markov import (DetectorModel, decide, detect, estimate_noise_sigma,
                               fit_detector, log_likelihood, quantize_states, smoothed_probs,
                               sweep_threshold, transition_counts)
from rfsentinel.signals import NOISE, generate_noise, uav
from rfsentinel.wavelet import preprocess


def test_quantize_examples():
    assert quantize_states([0.2, -5.0, 3.0, 0.1], 1.0).states.tolist() == [0, 1, 1, 0]
    assert quantize_states([0.5, -0.9, 1.0], 1.0).states.tolist() == [0, 0, 0]
    assert quantize_states([1.0, 1.0 + 1e-9], 1.0).states.tolist() == [0, 1]


def test_quantize_preconditions():
    with pytest.raises(InvalidArgumentError):
        quantize_states([1.0, 2.0], 0.0)
    with pytest.raises(InvalidArgumentError):
        quantize_states([1.0], 1.0)


def test_hand_counted_transitions():
    tm = transition_counts([0, 1, 1, 0])
    assert tm.counts.tolist() == [[0, 1], [1, 1]]
    np.testing.assert_allclose(tm.probs, [[0, 1 / 3], [1 / 3, 1 / 3]])


def test_all_s1_sequence():
    tm = transition_counts(np.zeros(9, dtype=np.uint8))
    assert tm.counts.tolist() == [[8, 0], [0, 0]]
    assert tm.probs[0, 0] == 1.0


def test_single_state_is_rejected():
    with pytest.raises(InvalidArgumentError):
        transition_counts([0])


def test_log_likelihood_examples():
    counts = np.array([[0, 1], [1, 1]])
    assert log_likelihood(counts, np.full((2, 2), 0.25)) == pytest.approx(3 * math.log(0.25))
    assert log_likelihood(np.zeros((2, 2)), np.full((2, 2), 0.25)) == 0.0
    with pytest.raises(InvalidArgumentError):
        log_likelihood(counts, np.array([[0.5, 0.0], [0.25, 0.25]]))


def test_laplace_smoothing():
    np.testing.assert_allclose(smoothed_probs([[0, 1], [1, 1]]), [[1 / 7, 2 / 7], [2 / 7, 2 / 7]])


def test_identical_models_tie_to_signal():
    p = smoothed_probs([[5, 2], [2, 1]])
    model = DetectorModel(1.0, 1.0, p, p.copy())
    assert decide(np.array([[3, 1], [1, 0]]), model).is_signal


def test_invalid_delta_multiple():
    noise = [generate_noise(1000, 1.0, 0)]
    with pytest.raises(InvalidArgumentError):
        fit_detector(noise, noise, 0.0)


def test_noise_sigma_estimate():
    caps = [generate_noise(25_000, 1.0, s) for s in range(4)]
    # Haar detail bands are orthonormal, so white noise keeps its std
    assert 0.98 <= estimate_noise_sigma(caps) <= 1.02
    with pytest.raises(InvalidArgumentError):
        estimate_noise_sigma([])


def test_model_round_trip():
    p = smoothed_probs([[4, 1], [1, 9]])
    q = smoothed_probs([[9, 1], [1, 1]])
    m = DetectorModel(3.5, 1.0, p, q, 0.4)
    back = DetectorModel.from_dict(m.to_dict())
    assert back.delta == m.delta and back.prior_signal == 0.4
    np.testing.assert_array_equal(back.probs_signal, p)


@pytest.fixture(scope="module")
def detector_10db():
    cat = Catalogue()
    sig = [cat.synthesize(uav(i % 15), 10, capture_seed(1, uav(i % 15), i)) for i in range(60)]
    noise = [cat.synthesize(NOISE, 10, capture_seed(1, NOISE, i)) for i in range(60)]
    return cat, fit_detector(sig, noise, 3.5)


def test_trained_models_have_the_expected_shape(detector_10db):
    _, model = detector_10db
    ps, pn = model.probs_signal, model.probs_noise
    assert ps[1, 1] > max(ps[0, 0], ps[0, 1], ps[1, 0])
    assert pn[0, 0] > max(pn[0, 1], pn[1, 0], pn[1, 1])


def test_noise_captures_are_rejected(detector_10db):
    cat, model = detector_10db
    verdicts = [detect(cat.synthesize(NOISE, 10, capture_seed(2, NOISE, i)), model).is_signal
                for i in range(200)]
    assert np.mean(verdicts) <= 0.05


def test_bursts_are_detected(detector_10db):
    cat, model = detector_10db
    hits = [detect(cat.synthesize(uav(i % 15), 10, capture_seed(2, uav(i % 15), i)), model).is_signal
            for i in range(200)]
    assert np.mean(hits) >= 0.99


@given(arrays(float, st.integers(2, 300), elements=st.floats(-50, 50)),
       st.floats(0.01, 10), st.floats(0.01, 10))
def test_high_state_occupancy_shrinks_with_threshold(y, d1, d2):
    lo, hi = sorted((d1, d2))
    assert quantize_states(y, hi).states.sum() <= quantize_states(y, lo).states.sum()


@given(arrays(np.uint8, st.integers(2, 200), elements=st.integers(0, 1)))
def test_counts_cover_every_transition(states):
    tm = transition_counts(states)
    assert tm.counts.sum() == states.size - 1
    assert tm.probs.sum() == pytest.approx(1.0)


def test_sweep_rows_and_validation():
    cat = Catalogue()
    bursts = [cat.clean_burst(uav(i), i) for i in range(6)]
    noise = [generate_noise(cat.n_samples, 1.0, 100 + i) for i in range(6)]
    rows = sweep_threshold(bursts, noise, [0.5, 3.5], [10.0])
    assert [(r.snr_db, r.delta_multiple) for r in rows] == [(10.0, 0.5), (10.0, 3.5)]
    assert all(r.n_signal == 3 and r.n_noise == 3 for r in rows)
    with pytest.raises(InvalidArgumentError):
        sweep_threshold(bursts, noise, [], [10.0])


def test_detect_accepts_preprocessed_traces(detector_10db):
    cat, model = detector_10db
    cap = cat.synthesize(NOISE, 10, 77)
    assert detect(cap, model) == detect(preprocess(cap), model)
