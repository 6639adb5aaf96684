"""Event-window scoring, threshold selection, reports and FTO-grouped curves."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import OutOfRange, SingleClassValidation, WindowOutOfSession
from .events import TurnEvent, in_group
from .metrics import (always_hold_counts, balanced_accuracy, confusion,
                      metric_bundle)
from .va import FRAME_RATE, time_to_frame
from .vap import shift_probability

WINDOW_S = 0.2
WINDOW_FRAMES = int(round(WINDOW_S * FRAME_RATE))
ANCHORS = ("mutual_silence", "end_of_turn", "pre_overlap")
FTO_GROUPS = tuple(round(0.25 * i, 2) for i in range(7))
REPORT_SCHEMA = 1


@dataclass(frozen=True)
class EventScore:
    event: TurnEvent
    window: tuple
    score: float
    truth: int  # 1 shift, 0 hold


def event_window(event: TurnEvent, anchor: str, duration: float | None = None) -> tuple[float, float]:
    if anchor not in ANCHORS:
        raise ValueError(f"unknown anchor {anchor!r}")
    overlap = event.kind == "overlap_shift"
    if (anchor == "pre_overlap") != overlap:
        raise ValueError(f"anchor {anchor} does not apply to {event.kind} events")
    if anchor == "mutual_silence":
        window = (event.gap_start, event.gap_start + WINDOW_S)
    else:  # end_of_turn and pre_overlap both end where the previous speaker alone stops
        window = (event.gap_start - WINDOW_S, event.gap_start)
    if window[0] < -1e-9 or (duration is not None and window[1] > duration + 1e-9):
        raise WindowOutOfSession(f"window {window} outside session")
    return round(window[0], 6), round(window[1], 6)


def score_event(probs, window: tuple, active_speaker: str) -> float:
    """Sum of per-frame shift probabilities over the 10 frames of ``window``."""
    probs = np.asarray(probs)
    first = time_to_frame(window[0])
    if first < 0 or first + WINDOW_FRAMES > len(probs):
        raise OutOfRange(f"window {window} outside model output of {len(probs)} frames")
    return float(shift_probability(probs[first:first + WINDOW_FRAMES], active_speaker).sum())


def event_anchor(event: TurnEvent, anchor: str) -> str | None:
    """Window rule applied to ``event`` under an evaluation anchor, or None to skip.

    The overlap evaluation contrasts overlap-shifts with holds, so holds are
    scored before their end of turn there; gap shifts take no part.
    """
    if anchor == "pre_overlap":
        return {"overlap_shift": "pre_overlap", "hold": "end_of_turn"}.get(event.kind)
    return None if event.kind == "overlap_shift" else anchor


def score_events(probs, events: Sequence[TurnEvent], anchor: str,
                 duration: float | None = None) -> list[EventScore]:
    """Score every event taking part under ``anchor``; others are skipped."""
    out = []
    for ev in events:
        rule = event_anchor(ev, anchor)
        if rule is None:
            continue
        try:
            window = event_window(ev, rule, duration)
        except WindowOutOfSession:
            continue
        out.append(EventScore(ev, window, score_event(probs, window, ev.prev_speaker),
                              int(ev.is_shift)))
    return out


@dataclass(frozen=True)
class Thresholds:
    for_f1: float
    for_bacc: float
    degenerate: bool = False


def candidate_thresholds(scores) -> np.ndarray:
    """Midpoints between adjacent distinct scores plus one below and one at the top."""
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.concatenate([[u[0] - 1.0], mids, [u[-1]]])


def _metric_grid(scores, truths, cands) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truths).astype(bool)
    f1w, bacc = np.empty(len(cands)), np.empty(len(cands))
    for i, thr in enumerate(cands):
        m = metric_bundle(confusion(s, t, thr))
        f1w[i], bacc[i] = m["f1_weighted"], m["balanced_accuracy"]
    return f1w, bacc


def select_thresholds(scores, truths) -> Thresholds:
    """Thresholds maximising weighted F1 and balanced accuracy; ties go low."""
    truths = np.asarray(truths).astype(bool)
    if truths.all() or not truths.any():
        raise SingleClassValidation("validation events contain a single class")
    cands = candidate_thresholds(scores)
    f1w, bacc = _metric_grid(scores, truths, cands)
    degenerate = len(np.unique(scores)) == 1
    return Thresholds(float(cands[int(np.argmax(f1w))]), float(cands[int(np.argmax(bacc))]),
                      degenerate)


def _metrics_dict(scores, truths, thr: Thresholds) -> dict:
    at_f1 = metric_bundle(confusion(scores, truths, thr.for_f1))
    at_bacc = metric_bundle(confusion(scores, truths, thr.for_bacc))
    return {"f1_shift": at_f1["f1_shift"], "f1_hold": at_f1["f1_hold"],
            "f1_weighted": at_f1["f1_weighted"],
            "balanced_accuracy": at_bacc["balanced_accuracy"]}


@dataclass
class EvalReport:
    anchor: str
    min_fto: float
    f1_shift: float
    f1_hold: float
    f1_weighted: float
    balanced_accuracy: float
    thresholds: dict
    rho_s: float
    rho_h: float
    n_events: int
    baseline: dict
    fto_curve: list = field(default_factory=list)
    significance: dict = field(default_factory=dict)
    per_session: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        if data.get("schema_version") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {data.get('schema_version')}")
        return cls(**data)


def baseline_metrics(truths) -> dict:
    """Always-hold dummy model."""
    return metric_bundle(always_hold_counts(truths))


def build_report(val: Sequence[EventScore], test: Sequence[EventScore], anchor: str,
                 min_fto: float, meta: dict | None = None) -> EvalReport:
    """Thresholds from ``val``, metrics on ``test``."""
    thr = select_thresholds([e.score for e in val], [e.truth for e in val])
    scores = np.array([e.score for e in test])
    truths = np.array([e.truth for e in test])
    if truths.all() or not truths.any():
        raise SingleClassValidation("test events contain a single class")
    m = _metrics_dict(scores, truths, thr)
    rho_s = float(truths.mean())
    per_session = {}
    for sid in sorted({e.event.session_id for e in test}):
        idx = [i for i, e in enumerate(test) if e.event.session_id == sid]
        t = truths[idx]
        if t.all() or not t.any():
            continue
        per_session[sid] = {
            "balanced_accuracy": balanced_accuracy(confusion(scores[idx], t, thr.for_bacc)),
            "baseline_balanced_accuracy": 0.5,
            "n_events": len(idx)}
    return EvalReport(anchor=anchor, min_fto=min_fto, thresholds=asdict(thr),
                      rho_s=rho_s, rho_h=1.0 - rho_s, n_events=len(test),
                      baseline=baseline_metrics(truths), per_session=per_session,
                      meta=meta or {}, **m)


@dataclass(frozen=True)
class FtoPoint:
    min_fto: float
    mean_bacc: float
    stderr: float
    n_events: int


def group_bacc(val: Sequence[EventScore], test: Sequence[EventScore]) -> float | None:
    """Balanced accuracy on ``test`` with the threshold re-selected on ``val``;
    None when either side lacks a class."""
    if not test or len({e.truth for e in val}) < 2 or len({e.truth for e in test}) < 2:
        return None
    thr = select_thresholds([e.score for e in val], [e.truth for e in val])
    counts = confusion([e.score for e in test], [e.truth for e in test], thr.for_bacc)
    return balanced_accuracy(counts)


def fto_curve(folds: Sequence[tuple], groups: Sequence[float] = FTO_GROUPS) -> list[FtoPoint]:
    """Per-group balanced accuracy, mean and standard error over folds.

    ``folds`` holds (validation scores, evaluation scores) per fold.  Groups use
    ``fto > min_fto``; groups with a missing class are omitted.
    """
    points = []
    for g in groups:
        values, n_events = [], 0
        for val, test in folds:
            sel = [e for e in test if in_group(e.event, g)]
            b = group_bacc([e for e in val if in_group(e.event, g)], sel)
            if b is not None:
                values.append(b)
                n_events += len(sel)
        if not values:
            continue
        mean = float(np.mean(values))
        se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else float("nan")
        points.append(FtoPoint(g, mean, se, n_events))
    return points


def write_fto_curve(points: Sequence[FtoPoint], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["min_fto", "mean_bacc", "stderr", "n_events"])
    for p in points:
        w.writerow([f"{p.min_fto:.2f}", repr(p.mean_bacc), repr(p.stderr), p.n_events])


def read_fto_curve(fh) -> list[FtoPoint]:
    return [FtoPoint(float(r["min_fto"]), float(r["mean_bacc"]), float(r["stderr"]),
                     int(r["n_events"])) for r in csv.DictReader(fh)]
