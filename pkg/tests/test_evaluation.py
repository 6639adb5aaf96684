import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmvap.errors import OutOfRange, SingleClassValidation, WindowOutOfSession
from mmvap.evaluation import (EvalReport, EventScore, FtoPoint, build_report, candidate_thresholds,
                              event_anchor, event_window, fto_curve, read_fto_curve, score_event,
                              score_events, select_thresholds, write_fto_curve)
from mmvap.events import TurnEvent
from mmvap.metrics import confusion, metric_bundle
from mmvap.vap import N_STATES, bits_to_index

import oracles


def ev(kind="shift", gap_start=5.0, fto=0.5, sid="s", prev="a"):
    nxt = prev if kind == "hold" else ("b" if prev == "a" else "a")
    return TurnEvent(kind, prev, nxt, fto, gap_start, gap_start + max(fto, 0), sid)


def test_windows():
    assert event_window(ev(), "mutual_silence") == (5.0, 5.2)
    assert event_window(ev(), "end_of_turn") == (4.8, 5.0)
    assert event_window(ev("overlap_shift", 4.6, -0.4), "pre_overlap") == (4.4, 4.6)
    with pytest.raises(WindowOutOfSession):
        event_window(ev(gap_start=0.1), "end_of_turn")
    with pytest.raises(ValueError):
        event_window(ev(), "pre_overlap")


def test_anchor_rules():
    assert event_anchor(ev("hold"), "pre_overlap") == "end_of_turn"
    assert event_anchor(ev("shift"), "pre_overlap") is None
    assert event_anchor(ev("overlap_shift", fto=-0.4), "mutual_silence") is None


def test_score_examples():
    uniform = np.full((400, N_STATES), 1 / N_STATES)
    assert score_event(uniform, (5.0, 5.2), "a") == pytest.approx(2.5, abs=1e-12)
    zero = np.zeros((400, N_STATES)); zero[:, 0] = 1
    assert score_event(zero, (5.0, 5.2), "a") == 0
    q = 0.3
    mix = np.zeros((400, N_STATES))
    mix[:, bits_to_index([[0, 0, 0, 0], [0, 0, 1, 1]])] = q
    mix[:, 0] = 1 - q
    assert score_event(mix, (5.0, 5.2), "a") == pytest.approx(10 * q, abs=1e-12)
    with pytest.raises(OutOfRange):
        score_event(uniform, (7.9, 8.1), "a")


def test_score_events_window_frames():
    probs = np.zeros((500, N_STATES)); probs[:, 0] = 1
    target = bits_to_index([[0, 0, 0, 0], [0, 0, 1, 1]])
    probs[250:260] = 0; probs[250:260, target] = 1  # frames of [5.0, 5.2)
    (s,) = score_events(probs, [ev()], "mutual_silence")
    assert s.score == pytest.approx(10) and s.truth == 1
    (s,) = score_events(probs, [ev()], "end_of_turn")
    assert s.score == 0


def test_threshold_perfect_separation():
    thr = select_thresholds([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
    assert thr.for_bacc == pytest.approx(0.5) and thr.for_f1 == pytest.approx(0.5)
    assert not thr.degenerate


def test_threshold_degenerate_and_single_class():
    thr = select_thresholds([0.4] * 4, [1, 0, 1, 0])
    assert thr.degenerate and thr.for_bacc == pytest.approx(-0.6)
    with pytest.raises(SingleClassValidation):
        select_thresholds([0.1, 0.2], [1, 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_threshold_is_brute_force_max(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(4, 40))
    scores = np.round(r.random(n) * 10, 1)
    truths = r.random(n) < 0.4
    truths[0], truths[1] = True, False
    thr = select_thresholds(scores, truths)
    u = sorted(set(scores.tolist()))
    cands = [u[0] - 1.0] + [(a + b) / 2 for a, b in zip(u, u[1:])] + [u[-1]]
    best = max(oracles.bacc_direct(scores, truths, c) for c in cands)
    assert oracles.bacc_direct(scores, truths, thr.for_bacc) == pytest.approx(best, abs=1e-12)
    first = next(c for c in cands if abs(oracles.bacc_direct(scores, truths, c) - best) < 1e-12)
    assert thr.for_bacc == pytest.approx(first)
    assert len(candidate_thresholds(scores)) == len(cands)


def _scores(r, n, sid="s", fto=None, kinds=None):
    out = []
    for i in range(n):
        truth = int(r.random() < 0.4) if kinds is None else kinds[i]
        f = float(r.choice([0.1, 0.3, 0.6, 0.9, 1.2, 1.6])) if fto is None else fto
        e = ev("shift" if truth else "hold", 2.0 + i, f, sid)
        out.append(EventScore(e, (2.0 + i, 2.2 + i), float(r.random() * 3 + truth * r.random()), truth))
    return out


def test_confusion_partition(rng):
    s = _scores(rng, 50)
    for thr in candidate_thresholds([e.score for e in s]):
        c = confusion([e.score for e in s], [e.truth for e in s], thr)
        assert c.tp + c.fn == sum(e.truth for e in s) and c.tn + c.fp == sum(1 - e.truth for e in s)


def test_report_json_round_trip(rng):
    val = _scores(rng, 40, "v")
    test = _scores(rng, 30, "t1") + _scores(rng, 30, "t2")
    rep = build_report(val, test, "mutual_silence", 0.25, meta={"fold": 0})
    text = rep.to_json()
    again = EvalReport.from_json(text)
    assert again == rep and again.to_json() == text
    assert rep.baseline["balanced_accuracy"] == 0.5
    truths = [e.truth for e in test]
    direct = metric_bundle(confusion([e.score for e in test], truths, rep.thresholds["for_f1"]))
    assert rep.f1_weighted == pytest.approx(direct["f1_weighted"], abs=1e-12)
    assert set(rep.per_session) == {"t1", "t2"}


def _independent_curve(folds, groups):
    """Group, threshold and score with the direct oracles only."""
    out = []
    for g in groups:
        vals, n = [], 0
        for val, test in folds:
            v = [e for e in val if e.event.fto > g + 1e-9]
            t = [e for e in test if e.event.fto > g + 1e-9]
            if len({e.truth for e in v}) < 2 or len({e.truth for e in t}) < 2:
                continue
            vs, vt = [e.score for e in v], [e.truth for e in v]
            u = sorted(set(vs))
            cands = [u[0] - 1.0] + [(a + b) / 2 for a, b in zip(u, u[1:])] + [u[-1]]
            accs = [oracles.bacc_direct(vs, vt, c) for c in cands]
            thr = cands[accs.index(max(accs))]
            vals.append(oracles.bacc_direct([e.score for e in t], [e.truth for e in t], thr))
            n += len(t)
        if vals:
            out.append((g, sum(vals) / len(vals), n))
    return out


def test_fto_curve_matches_independent_recomputation(rng):
    folds = [(_scores(rng, 80, "v"), _scores(rng, 60, "t")) for _ in range(5)]
    groups = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5]
    got = fto_curve(folds, groups)
    ref = _independent_curve(folds, groups)
    assert [(p.min_fto, p.n_events) for p in got] == [(g, n) for g, _, n in ref]
    for p, (_, mean, _) in zip(got, ref):
        assert abs(p.mean_bacc - mean) <= 1e-12
    counts = [p.n_events for p in got]
    assert counts == sorted(counts, reverse=True)


def test_fto_curve_omits_single_class_group():
    r = np.random.default_rng(0)
    val = _scores(r, 10, kinds=[1, 0] * 5, fto=0.3) + _scores(r, 4, kinds=[0] * 4, fto=1.0)
    test = _scores(r, 10, kinds=[1, 0] * 5, fto=0.3) + _scores(r, 4, kinds=[0] * 4, fto=1.0)
    got = fto_curve([(val, test)], [0.0, 0.5])
    assert [p.min_fto for p in got] == [0.0] and math.isnan(got[0].stderr)


def test_fto_csv_round_trip():
    pts = [FtoPoint(0.0, 0.71234567891234, 0.0123, 50), FtoPoint(0.25, 0.6, float("nan"), 20)]
    buf = io.StringIO()
    write_fto_curve(pts, buf)
    back = read_fto_curve(io.StringIO(buf.getvalue()))
    buf2 = io.StringIO()
    write_fto_curve(back, buf2)
    assert buf.getvalue() == buf2.getvalue() and back[0] == pts[0]
