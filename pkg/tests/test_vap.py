import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmvap.errors import InvalidDistribution, OutOfRange, SessionTooShort, WrongLength
from mmvap.va import DyadVa
from mmvap.vap import (BIN_OFFSETS, HORIZON, N_STATES, bin_frame_counts, bits_to_index,
                       decode_state, dump_labels, encode_window, labels_for_session,
                       load_labels, shift_probability, shift_state_mask, swap_speakers_index)

import oracles


def test_bins():
    assert bin_frame_counts() == [10, 20, 30, 40]
    assert sum(bin_frame_counts()) == HORIZON == 100
    assert BIN_OFFSETS == (0, 10, 30, 60)


def test_encode_examples():
    z, o = np.zeros(100), np.ones(100)
    assert encode_window(z, z) == 0
    assert encode_window(o, z) == 15
    half = np.zeros(100); half[:5] = 1
    assert encode_window(half, z) == 1
    just_under = np.zeros(100); just_under[:4] = 1
    assert encode_window(just_under, z) == 0


def test_encode_wrong_length():
    with pytest.raises(WrongLength):
        encode_window(np.zeros(99), np.zeros(100))


def test_decode_examples():
    assert not decode_state(0).any()
    assert decode_state(255).all()
    assert decode_state(15).tolist() == [[True] * 4, [False] * 4]
    with pytest.raises(OutOfRange):
        decode_state(256)


def test_decode_encode_identity_exhaustive():
    for i in range(N_STATES):
        bits = decode_state(i)
        assert bits_to_index(bits) == i
        fa = np.concatenate([np.full(n, bits[0, k]) for k, n in enumerate(bin_frame_counts())])
        fb = np.concatenate([np.full(n, bits[1, k]) for k, n in enumerate(bin_frame_counts())])
        assert encode_window(fa, fb) == i


def test_silent_session_labels():
    z = np.zeros(150, np.uint8)
    index, mask = labels_for_session(DyadVa.from_arrays(z, z))
    assert mask.sum() == 50 and not mask[-100:].any()
    assert (index[mask] == 0).all()


def test_too_short():
    z = np.zeros(60, np.uint8)
    with pytest.raises(SessionTooShort):
        labels_for_session(DyadVa.from_arrays(z, z))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_labels_match_oracle(seed):
    r = np.random.default_rng(seed)
    a, b = (r.random(260) < 0.5).astype(np.uint8), (r.random(260) < 0.3).astype(np.uint8)
    index, mask = labels_for_session(DyadVa.from_arrays(a, b))
    for t in range(160):
        assert mask[t] and index[t] == oracles.vap_label(a, b, t)


def test_label_depends_only_on_future():
    r = np.random.default_rng(0)
    a, b = (r.random(300) < 0.5).astype(np.uint8), (r.random(300) < 0.5).astype(np.uint8)
    base, _ = labels_for_session(DyadVa.from_arrays(a, b))
    a2 = a.copy(); a2[:120] ^= 1  # change the past and present of frame 119
    changed, _ = labels_for_session(DyadVa.from_arrays(a2, b))
    assert np.array_equal(base[119:200], changed[119:200])


def test_shift_probability_uniform_is_quarter():
    u = np.full(N_STATES, 1 / N_STATES)
    assert shift_probability(u, "a") == pytest.approx(0.25, abs=1e-15)
    assert shift_probability(u, "b") == pytest.approx(0.25, abs=1e-15)
    # enumeration of the states behind the marginal
    states = [i for i in range(N_STATES) if decode_state(i)[1, 2] and decode_state(i)[1, 3]]
    assert len(states) == 64 and shift_state_mask("a").sum() == 64


def test_shift_probability_point_masses():
    p = np.zeros(N_STATES); p[0] = 1
    assert shift_probability(p, "a") == 0
    target = bits_to_index([[1, 1, 0, 0], [0, 0, 1, 1]])
    q = np.zeros(N_STATES); q[target] = 1
    assert shift_probability(q, "a") == 1.0 and shift_probability(q, "b") == 0.0


def test_invalid_distribution():
    with pytest.raises(InvalidDistribution):
        shift_probability(np.full(N_STATES, 0.5), "a")
    with pytest.raises(InvalidDistribution):
        shift_probability(np.ones(10) / 10, "a")


@given(st.lists(st.floats(0, 1), min_size=N_STATES, max_size=N_STATES).filter(lambda v: sum(v) > 0))
def test_swap_speakers_swaps_roles(values):
    p = np.asarray(values) / sum(values)
    perm = swap_speakers_index(np.arange(N_STATES))
    swapped = np.empty_like(p)
    swapped[perm] = p
    assert shift_probability(swapped, "b") == pytest.approx(shift_probability(p, "a"))
    assert 0 <= shift_probability(p, "a") <= 1


def test_swap_is_bit_level_exchange():
    for i in range(N_STATES):
        j = int(swap_speakers_index(i))
        assert np.array_equal(decode_state(j), decode_state(i)[::-1])
        assert int(swap_speakers_index(j)) == i


def test_label_dump_round_trip():
    r = np.random.default_rng(3)
    index, mask = r.integers(0, 256, 1001), r.random(1001) < 0.8
    blob = dump_labels(index, mask)
    i2, m2 = load_labels(blob)
    assert np.array_equal(i2, index) and np.array_equal(m2, mask)
    assert dump_labels(i2, m2) == blob
    assert len(blob) == 4 + 4 + 1001 + 126
