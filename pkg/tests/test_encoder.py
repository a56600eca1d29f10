import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdftpp import autodiff as ad
from cdftpp import encoder as enc
from cdftpp.synthetic import EventSequence


def scalar_params(w_h=0.0, w_x=1.0, b=0.0):
    return enc.EncoderParams(W_h=[[w_h]], W_x=[[w_x]], b_h=[b])


def test_step_all_zero_weights_gives_zero_state():
    params = scalar_params(w_h=0.0, w_x=0.0, b=0.0)
    h = enc.rnn_step(np.array([0.7]), 3.0, params)
    assert np.array_equal(h, [0.0])


def test_step_clamps_negative_activation():
    params = scalar_params()
    h = enc.rnn_step(np.zeros(1), -2.0, params)
    assert np.array_equal(h, [0.0])


def test_step_positive_input_passes_tanh():
    params = scalar_params()
    h = enc.rnn_step(np.zeros(1), 1.0, params)
    assert h[0] == pytest.approx(math.tanh(1.0), abs=1e-6)


def test_featurize_reference_points():
    assert enc.featurize(1.0) == pytest.approx(0.0, abs=1e-7)
    assert enc.featurize(math.e) == pytest.approx(1.0, abs=1e-7)
    assert enc.featurize(1e-8) == pytest.approx(math.log(2e-8))
    assert enc.featurize(2.5, mode="raw") == 2.5


def test_featurize_rejects_nonpositive():
    with pytest.raises(ValueError):
        enc.featurize(0.0)
    with pytest.raises(ValueError):
        enc.featurize(np.array([1.0, -0.5]))


def test_encode_empty_and_single_event():
    rng = np.random.default_rng(0)
    params = enc.init_encoder(4, rng)
    empty = EventSequence(np.array([]), 1.0)
    states = enc.encode_sequence(empty, params)
    assert states.shape == (1, 4)
    assert np.all(states == 0.0)
    one = EventSequence(np.array([2.0]), 2.0)
    states = enc.encode_sequence(one, params)
    assert states.shape == (1, 4)
    assert np.all(states == 0.0)


def test_encode_matches_manual_unroll():
    rng = np.random.default_rng(1)
    params = enc.init_encoder(5, rng)
    seq = EventSequence(np.array([0.5, 1.7, 4.0]), 4.0)
    states = enc.encode_sequence(seq, params)
    xs = enc.featurize(seq.intervals())
    h0 = np.zeros(5)
    h1 = enc.rnn_step(h0, xs[0], params)
    h2 = enc.rnn_step(h1, xs[1], params)
    np.testing.assert_array_equal(states[0], h0)
    np.testing.assert_array_equal(states[1], h1)
    np.testing.assert_array_equal(states[2], h2)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_states_are_componentwise_nonnegative(seed):
    rng = np.random.default_rng(seed)
    params = enc.init_encoder(8, rng)
    times = np.cumsum(rng.exponential(1.0, size=12))
    seq = EventSequence(times, times[-1])
    states = enc.encode_sequence(seq, params)
    assert np.all(states >= 0.0)


def test_prefix_causality():
    rng = np.random.default_rng(3)
    params = enc.init_encoder(6, rng)
    times = np.cumsum(rng.exponential(1.0, size=20))
    full = EventSequence(times, times[-1])
    prefix = EventSequence(times[:9], times[8])
    s_full = enc.encode_sequence(full, params)
    s_prefix = enc.encode_sequence(prefix, params)
    np.testing.assert_array_equal(s_full[:9], s_prefix)


def test_graph_encoder_matches_numpy_path():
    rng = np.random.default_rng(4)
    params = enc.init_encoder(7, rng)
    sequences = []
    for k in range(3):
        times = np.cumsum(rng.exponential(1.0, size=6))
        sequences.append(EventSequence(times, times[-1]))
    features = np.stack([enc.featurize(s.intervals()) for s in sequences])

    tape = ad.Tape()
    w_h = tape.leaf(params.W_h)
    w_x = tape.leaf(params.W_x)
    b_h = tape.leaf(params.b_h)
    states = enc.encode_states_graph(tape, w_h, w_x, b_h, features)
    assert len(states) == 6
    for j, seq in enumerate(sequences):
        expected = enc.encode_sequence(seq, params)
        got = np.stack([states[i].value[j] for i in range(6)])
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-14)
