"""Facial action unit intensity around holds and shifts.

For every hold/shift with FTO above ``min_fto`` the per-event statistic is the
maximum raw (0-5) intensity of each FAU in the 200 ms before the previous
speaker stops.  Controls are random 200 ms windows of speech and of silence
at least 1 s away from any turn boundary of the sampled participant; each
session contributes as many of each as it has events.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus_io import FAU_COLUMNS
from .errors import InsufficientEvents
from .events import TurnEvent, extract_gap_events
from .stats import mann_whitney_u
from .va import FRAME_RATE

WINDOW_S = 0.2
MARGIN_S = 1.0
BRIDGE_S = 0.25
ALPHA = 0.05
MIN_EVENTS = 10

EVENT_CONDITIONS = ("speaker_before_hold", "listener_before_hold",
                    "future_speaker_before_shift", "current_speaker_before_shift")
CONTROL_CONDITIONS = ("random_speech", "random_silence")
CONDITIONS = EVENT_CONDITIONS + CONTROL_CONDITIONS
CONTROL_FOR = {"speaker_before_hold": "random_speech",
               "listener_before_hold": "random_silence",
               "future_speaker_before_shift": "random_silence",
               "current_speaker_before_shift": "random_speech"}
SHIFT_CONDITIONS = ("future_speaker_before_shift", "current_speaker_before_shift")

_SPK = {"a": 0, "b": 1}


@dataclass
class FauAnalysis:
    medians: dict  # condition -> array(17)
    pvalues: dict  # event condition -> array(17)
    counts: dict = field(default_factory=dict)

    def suppressed(self, condition: str) -> np.ndarray:
        if condition in CONTROL_CONDITIONS:
            return np.zeros(len(FAU_COLUMNS), dtype=bool)
        return self.pvalues[condition] > ALPHA

    def cell(self, fau: str, condition: str):
        j = FAU_COLUMNS.index(fau)
        return None if self.suppressed(condition)[j] else float(self.medians[condition][j])


def window_max(timestamps: np.ndarray, faus: np.ndarray, t0: float, t1: float) -> np.ndarray:
    lo, hi = np.searchsorted(timestamps, [t0 - 1e-9, t1 - 1e-9])
    if hi <= lo:  # window narrower than one video frame
        hi = min(lo + 1, len(timestamps))
    return faus[lo:hi].max(axis=0)


def bridged(va: np.ndarray, max_gap_s: float = BRIDGE_S) -> np.ndarray:
    """Fill silences of at most ``max_gap_s`` that sit between speech."""
    out = va.astype(bool).copy()
    idx = np.flatnonzero(out)
    if len(idx) < 2:
        return out
    limit = max_gap_s * FRAME_RATE + 1e-9
    for a, b in zip(idx[:-1], idx[1:]):
        if 1 < b - a and b - a - 1 <= limit:
            out[a + 1:b] = True
    return out


def control_starts(va: np.ndarray, speech: bool) -> np.ndarray:
    """Frames f such that [f-1s, f+200ms+1s) is uniformly speech (or silence)."""
    margin = int(MARGIN_S * FRAME_RATE)
    width = int(round(WINDOW_S * FRAME_RATE))
    target = bridged(va) if speech else ~bridged(va)
    span = 2 * margin + width
    if len(target) < span:
        return np.array([], dtype=int)
    csum = np.concatenate([[0], np.cumsum(target)])
    full = (csum[span:] - csum[:-span]) == span
    return np.flatnonzero(full) + margin


def fau_event_analysis(sessions: Sequence, events: Sequence[TurnEvent] | None = None,
                       seed: int = 0, min_fto: float = 0.25) -> FauAnalysis:
    """``sessions`` need ``session_id``, ``dyad`` and ``raw_faus`` (see data.SessionData)."""
    rng = np.random.default_rng(seed)
    samples = {c: [] for c in CONDITIONS}
    by_session = {}
    if events is not None:
        for ev in events:
            by_session.setdefault(ev.session_id, []).append(ev)
    for s in sessions:
        evs = (by_session.get(s.session_id, []) if events is not None
               else extract_gap_events(s.dyad, min_fto, s.session_id))
        evs = [e for e in evs if e.kind != "overlap_shift" and e.fto > min_fto + 1e-9]
        for ev in evs:
            t0, t1 = ev.gap_start - WINDOW_S, ev.gap_start
            prev = _SPK[ev.prev_speaker]
            cur = window_max(*s.raw_faus[prev], t0, t1)
            other = window_max(*s.raw_faus[1 - prev], t0, t1)
            if ev.kind == "hold":
                samples["speaker_before_hold"].append(cur)
                samples["listener_before_hold"].append(other)
            else:
                samples["current_speaker_before_shift"].append(cur)
                samples["future_speaker_before_shift"].append(other)
        va = s.dyad.stacked()
        for cond, speech in (("random_speech", True), ("random_silence", False)):
            starts = [control_starts(va[p], speech) for p in (0, 1)]
            for _ in range(len(evs)):
                p = int(rng.integers(2))
                if len(starts[p]) == 0:
                    p = 1 - p
                if len(starts[p]) == 0:
                    break
                f = int(starts[p][rng.integers(len(starts[p]))])
                t0 = f / FRAME_RATE
                samples[cond].append(window_max(*s.raw_faus[p], t0, t0 + WINDOW_S))
    counts = {c: len(v) for c, v in samples.items()}
    short = [c for c, n in counts.items() if n < MIN_EVENTS]
    if short:
        raise InsufficientEvents(f"fewer than {MIN_EVENTS} samples for {', '.join(short)}")
    arrays = {c: np.array(v) for c, v in samples.items()}
    medians = {c: np.median(a, axis=0) for c, a in arrays.items()}
    pvalues = {}
    for cond in EVENT_CONDITIONS:
        ctrl = arrays[CONTROL_FOR[cond]]
        pvalues[cond] = np.array([mann_whitney_u(arrays[cond][:, j], ctrl[:, j]).p
                                  for j in range(len(FAU_COLUMNS))])
    return FauAnalysis(medians, pvalues, counts)


def heatmap_rows(analysis: FauAnalysis) -> list[list[str]]:
    rows = []
    for j, fau in enumerate(FAU_COLUMNS):
        row = [fau]
        for cond in CONDITIONS:
            row.append("ns" if analysis.suppressed(cond)[j] else f"{analysis.medians[cond][j]:.3f}")
        rows.append(row)
    return rows


def write_heatmap_tsv(rows: list[list[str]], fh) -> None:
    w = csv.writer(fh, delimiter="\t", lineterminator="\n")
    w.writerow(["fau"] + list(CONDITIONS))
    w.writerows(rows)


def read_heatmap_tsv(fh) -> list[list[str]]:
    reader = csv.reader(fh, delimiter="\t")
    header = next(reader)
    if header != ["fau"] + list(CONDITIONS):
        raise ValueError(f"unexpected heatmap header {header}")
    rows = [list(r) for r in reader]
    for r in rows:
        for cell in r[1:]:
            if cell != "ns":
                float(cell)
    return rows
