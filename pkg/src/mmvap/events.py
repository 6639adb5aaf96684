"""Hold / shift / overlap-shift extraction and corpus statistics.

All extraction happens on the 50 Hz frame grid.  Times on :class:`TurnEvent`
are frame boundaries converted to seconds.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .va import FRAME_RATE, FRAME_S, DyadVa, state_runs

CONTEXT_S = 1.0
CONTEXT_FRAMES = int(CONTEXT_S * FRAME_RATE)

# frame counts are compared against second thresholds with this slack so that
# e.g. 25 frames is not "greater than" 0.5 s
_EPS = 1e-9

SPEAKERS = ("a", "b")
EVENT_FIELDS = ["session_id", "kind", "prev_speaker", "next_speaker",
                "fto_s", "gap_start_s", "gap_end_s"]


@dataclass(frozen=True)
class TurnEvent:
    kind: str  # hold | shift | overlap_shift
    prev_speaker: str
    next_speaker: str
    fto: float
    gap_start: float
    gap_end: float
    session_id: str = ""

    @property
    def is_shift(self) -> bool:
        return self.kind != "hold"


def _longer_than(n: int, seconds: float) -> bool:
    return n > seconds * FRAME_RATE + _EPS


def extract_gap_events(dyad: DyadVa, min_fto: float = 0.25,
                       session_id: str = "") -> list[TurnEvent]:
    """Holds and shifts across mutual silences longer than ``min_fto``.

    A silence qualifies when exactly one speaker is active somewhere in the
    second before it, exactly one in the second after, the earlier speaker
    is talking in the last frame before the silence and the later speaker in
    its first frame after.  Windows that run off either end of the session
    disqualify the silence.
    """
    if min_fto < 0:
        raise ValueError("min_fto must be >= 0")
    va = dyad.stacked()
    n = va.shape[1]
    events = []
    for s, e, kind in state_runs(dyad):
        if kind != "mutual_silence" or not _longer_than(e - s, min_fto):
            continue
        if s - CONTEXT_FRAMES < 0 or e + CONTEXT_FRAMES > n:
            continue
        pre = va[:, s - CONTEXT_FRAMES:s].any(axis=1)
        post = va[:, e:e + CONTEXT_FRAMES].any(axis=1)
        if pre.sum() != 1 or post.sum() != 1:
            continue
        prev, nxt = int(np.argmax(pre)), int(np.argmax(post))
        if not va[prev, s - 1] or not va[nxt, e]:
            continue
        events.append(TurnEvent(
            kind="hold" if prev == nxt else "shift",
            prev_speaker=SPEAKERS[prev], next_speaker=SPEAKERS[nxt],
            fto=(e - s) * FRAME_S, gap_start=s * FRAME_S, gap_end=e * FRAME_S,
            session_id=session_id))
    return events


def extract_overlap_shifts(dyad: DyadVa, min_overlap: float = 0.25,
                           session_id: str = "") -> list[TurnEvent]:
    """Speaker changes that happen through overlapping speech.

    The overlap must exceed ``min_overlap``, be preceded by one second in which
    only the previous speaker talks, and be followed by one second in which the
    previous speaker is silent and the interrupter holds the floor from the
    first frame.  Overlaps after which the previous speaker keeps talking are
    backchannels and yield nothing.
    """
    va = dyad.stacked()
    n = va.shape[1]
    events = []
    for s, e, kind in state_runs(dyad):
        if kind != "overlap" or not _longer_than(e - s, min_overlap):
            continue
        if s - CONTEXT_FRAMES < 0 or e + CONTEXT_FRAMES > n:
            continue
        pre = va[:, s - CONTEXT_FRAMES:s].any(axis=1)
        if pre.sum() != 1:
            continue
        prev = int(np.argmax(pre))
        nxt = 1 - prev
        post = va[:, e:e + CONTEXT_FRAMES]
        if post[prev].any() or not post[nxt, 0]:
            continue
        events.append(TurnEvent(
            kind="overlap_shift", prev_speaker=SPEAKERS[prev],
            next_speaker=SPEAKERS[nxt], fto=-(e - s) * FRAME_S,
            gap_start=s * FRAME_S, gap_end=e * FRAME_S, session_id=session_id))
    return events


def extract_events(dyad: DyadVa, min_fto: float = 0.0, min_overlap: float = 0.25,
                   session_id: str = "") -> list[TurnEvent]:
    """Gap events and overlap shifts of one session, sorted by time."""
    events = (extract_gap_events(dyad, min_fto, session_id)
              + extract_overlap_shifts(dyad, min_overlap, session_id))
    return sorted(events, key=lambda ev: ev.gap_start)


@dataclass
class EventGroup:
    min_fto: float
    events: list = field(default_factory=list)

    @property
    def n_shifts(self) -> int:
        return sum(ev.is_shift for ev in self.events)

    @property
    def n_holds(self) -> int:
        return sum(not ev.is_shift for ev in self.events)


def in_group(ev: TurnEvent, threshold: float) -> bool:
    """Membership rule for one FTO group.

    Non-negative thresholds select gap events with ``fto > threshold``;
    negative thresholds select overlap events whose overlap is longer than
    ``-threshold``.
    """
    if threshold < 0:
        return ev.kind == "overlap_shift" and ev.fto < threshold - _EPS
    return ev.kind != "overlap_shift" and ev.fto > threshold + _EPS


def group_by_min_fto(events: Sequence[TurnEvent],
                     thresholds: Sequence[float]) -> list[EventGroup]:
    if list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    return [EventGroup(t, [ev for ev in events if in_group(ev, t)]) for t in thresholds]


@dataclass(frozen=True)
class GroupStatistics:
    min_fto: float
    n_shifts: int
    n_holds: int
    shifts_per_min: float
    holds_per_min: float
    shift_proportion: float | None  # None when there are no holds


def corpus_statistics(groups: Iterable[EventGroup],
                      total_minutes: float) -> list[GroupStatistics]:
    if total_minutes <= 0:
        raise ValueError("total_minutes must be positive")
    rows = []
    for g in groups:
        s, h = g.n_shifts, g.n_holds
        rows.append(GroupStatistics(
            min_fto=g.min_fto, n_shifts=s, n_holds=h,
            shifts_per_min=s / total_minutes, holds_per_min=h / total_minutes,
            shift_proportion=(s / h) if h else None))
    return rows


def merge_statistics(a: list[GroupStatistics], b: list[GroupStatistics],
                     minutes_a: float, minutes_b: float) -> list[GroupStatistics]:
    """Combine per-corpus tables; the counts add and rates are re-derived."""
    total = minutes_a + minutes_b
    out = []
    for ra, rb in zip(a, b):
        if ra.min_fto != rb.min_fto:
            raise ValueError("statistics tables use different thresholds")
        s, h = ra.n_shifts + rb.n_shifts, ra.n_holds + rb.n_holds
        out.append(GroupStatistics(ra.min_fto, s, h, s / total, h / total,
                                   (s / h) if h else None))
    return out


def format_fto(x: float) -> str:
    return f"{x:.2f}"


def write_events_csv(events: Iterable[TurnEvent], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EVENT_FIELDS)
    for ev in events:
        w.writerow([ev.session_id, ev.kind, ev.prev_speaker, ev.next_speaker,
                    format_fto(ev.fto), format_fto(ev.gap_start), format_fto(ev.gap_end)])


def read_events_csv(fh) -> list[TurnEvent]:
    reader = csv.DictReader(fh)
    if reader.fieldnames != EVENT_FIELDS:
        raise ValueError(f"unexpected events header {reader.fieldnames}")
    return [TurnEvent(kind=r["kind"], prev_speaker=r["prev_speaker"],
                      next_speaker=r["next_speaker"], fto=float(r["fto_s"]),
                      gap_start=float(r["gap_start_s"]), gap_end=float(r["gap_end_s"]),
                      session_id=r["session_id"])
            for r in reader]


def events_to_csv_string(events: Iterable[TurnEvent]) -> str:
    buf = io.StringIO()
    write_events_csv(events, buf)
    return buf.getvalue()


def write_statistics_tsv(rows: Iterable[GroupStatistics], fh) -> None:
    fh.write("min_fto_ms\tn_shifts\tn_holds\tshift_proportion\tshifts_per_min\tholds_per_min\n")
    for r in rows:
        prop = "NA" if r.shift_proportion is None else f"{r.shift_proportion:.2f}"
        fh.write(f"{round(r.min_fto * 1000)}\t{r.n_shifts}\t{r.n_holds}\t{prop}\t"
                 f"{r.shifts_per_min:.2f}\t{r.holds_per_min:.2f}\n")
