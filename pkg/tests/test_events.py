import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmvap.events import (EventGroup, TurnEvent, corpus_statistics, events_to_csv_string,
                          extract_events, extract_gap_events, extract_overlap_shifts,
                          group_by_min_fto, merge_statistics, read_events_csv)
from mmvap.va import DyadVa

import oracles


def dyad(n, a_spans, b_spans):
    a, b = np.zeros(n, np.uint8), np.zeros(n, np.uint8)
    for s, e in a_spans:
        a[int(round(s * 50)):int(round(e * 50))] = 1
    for s, e in b_spans:
        b[int(round(s * 50)):int(round(e * 50))] = 1
    return DyadVa.from_arrays(a, b)


def test_shift_example():
    ev = extract_gap_events(dyad(500, [(0, 5)], [(5.5, 10)]), 0.25)
    assert len(ev) == 1 and ev[0].kind == "shift" and ev[0].fto == pytest.approx(0.5)
    assert (ev[0].prev_speaker, ev[0].next_speaker) == ("a", "b")


def test_hold_example():
    ev = extract_gap_events(dyad(500, [(0, 5), (5.4, 10)], []), 0.25)
    assert len(ev) == 1 and ev[0].kind == "hold" and ev[0].fto == pytest.approx(0.4)


def test_backchannel_in_pre_window_blocks_event():
    d = dyad(500, [(0, 5)], [(4.5, 4.7), (5.5, 10)])
    assert extract_gap_events(d, 0.25) == []


def test_fto_comparison_is_strict():
    d = dyad(500, [(0, 5)], [(5.25, 10)])
    assert extract_gap_events(d, 0.25) == []
    assert len(extract_gap_events(d, 0.2)) == 1


def test_overlap_shift_example():
    ev = extract_overlap_shifts(dyad(350, [(0, 5)], [(4.6, 7)]))
    assert len(ev) == 1 and ev[0].kind == "overlap_shift"
    assert ev[0].fto == pytest.approx(-0.4) and ev[0].gap_start == pytest.approx(4.6)


def test_overlap_backchannel_is_excluded():
    assert extract_overlap_shifts(dyad(350, [(0, 7)], [(4.6, 5.0)])) == []


def test_short_overlap_is_ignored():
    assert extract_overlap_shifts(dyad(350, [(0, 5)], [(4.8, 7)])) == []


def test_truncated_windows_disqualify():
    # silence begins 0.6 s into the session: no full second before it
    assert extract_gap_events(dyad(500, [(0, 0.6), (1.2, 10)], []), 0.25) == []


def _as_tuples(events):
    return [(e.kind, e.prev_speaker, e.next_speaker, int(round(e.gap_start * 50)),
             int(round(e.gap_end * 50))) for e in events]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.0, 0.25, 0.5]))
def test_gap_events_match_oracle(seed, min_fto):
    a, b = oracles.random_dyad(np.random.default_rng(seed))
    got = _as_tuples(extract_gap_events(DyadVa.from_arrays(a, b), min_fto))
    assert got == oracles.gap_events(a, b, min_fto)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_overlap_shifts_match_oracle(seed):
    a, b = oracles.random_dyad(np.random.default_rng(seed))
    got = _as_tuples(extract_overlap_shifts(DyadVa.from_arrays(a, b)))
    assert got == oracles.overlap_events(a, b)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_event_invariants(seed):
    a, b = oracles.random_dyad(np.random.default_rng(seed))
    d = DyadVa.from_arrays(a, b)
    for ev in extract_events(d, 0.0):
        assert (ev.prev_speaker == ev.next_speaker) == (ev.kind == "hold")
        assert ev.gap_start - 1.0 >= -1e-9 and ev.gap_end + 1.0 <= d.duration + 1e-9
        if ev.kind != "overlap_shift":
            assert ev.fto == pytest.approx(ev.gap_end - ev.gap_start)
        else:
            assert ev.fto < 0
    # nesting across thresholds
    low = set(_as_tuples(extract_gap_events(d, 0.25)))
    high = set(_as_tuples(extract_gap_events(d, 0.75)))
    assert high <= low


def _ev(fto, kind="hold"):
    return TurnEvent(kind, "a", "a" if kind == "hold" else "b", fto, 1.0, 1.0 + max(fto, 0), "s")


def test_group_sizes():
    groups = group_by_min_fto([_ev(0.1), _ev(0.3), _ev(0.9)], [0, 0.25, 0.5])
    assert [len(g.events) for g in groups] == [3, 2, 1]
    assert all(len(g.events) == 0 for g in group_by_min_fto([], [0, 0.25]))


def test_overlap_group_holds_overlap_shifts_only():
    evs = [_ev(0.3), TurnEvent("overlap_shift", "a", "b", -0.4, 4.6, 5.0, "s")]
    (g,) = group_by_min_fto(evs, [-0.25])
    assert [e.kind for e in g.events] == ["overlap_shift"]


def test_statistics_table_row():
    g = EventGroup(-0.25, [_ev(0.5, "shift")] * 42 + [_ev(0.5)] * 111)
    (row,) = corpus_statistics([g], 100.0)
    assert (round(row.shifts_per_min, 2), round(row.holds_per_min, 2)) == (0.42, 1.11)
    assert round(row.shift_proportion, 2) == 0.38


def test_statistics_degenerate():
    (none_shift,) = corpus_statistics([EventGroup(0.0, [_ev(0.5)] * 3)], 10.0)
    assert none_shift.shifts_per_min == 0 and none_shift.shift_proportion == 0
    (no_holds,) = corpus_statistics([EventGroup(0.0, [_ev(0.5, "shift")] * 10)], 10.0)
    assert no_holds.shift_proportion is None


def test_statistics_merge_is_commutative():
    g1 = [EventGroup(0.0, [_ev(0.5, "shift")] * 3 + [_ev(0.5)] * 4)]
    g2 = [EventGroup(0.0, [_ev(0.5, "shift")] * 1 + [_ev(0.5)] * 6)]
    s1, s2 = corpus_statistics(g1, 5.0), corpus_statistics(g2, 7.0)
    assert merge_statistics(s1, s2, 5.0, 7.0) == merge_statistics(s2, s1, 7.0, 5.0)
    (m,) = merge_statistics(s1, s2, 5.0, 7.0)
    assert (m.n_shifts, m.n_holds) == (4, 10)


def test_events_csv_round_trip(small_sessions):
    events = [e for s in small_sessions for e in extract_events(s.dyad, 0.0, session_id=s.session_id)]
    text = events_to_csv_string(events)
    again = events_to_csv_string(read_events_csv(io.StringIO(text)))
    assert text == again
    assert text.splitlines()[0] == "session_id,kind,prev_speaker,next_speaker,fto_s,gap_start_s,gap_end_s"


def test_synthetic_corpus_group_sizes_monotone(small_sessions):
    events = [e for s in small_sessions for e in extract_events(s.dyad, 0.0)]
    sizes = [len(g.events) for g in group_by_min_fto(events, [0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5])]
    assert sizes == sorted(sizes, reverse=True) and sizes[0] > 0
