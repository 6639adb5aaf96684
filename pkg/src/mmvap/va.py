"""50 Hz binary voice-activity timelines built from word alignments."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import OutOfRange, ShapeMismatch, WordBeyondDuration

FRAME_RATE = 50
FRAME_S = 1.0 / FRAME_RATE

# float slack when converting seconds to frame boundaries
_EPS = 1e-9


def n_frames(duration: float) -> int:
    return int(math.ceil(duration * FRAME_RATE - _EPS))


def time_to_frame(t: float) -> int:
    """Index of the first frame whose start is at or after ``t``."""
    return int(math.ceil(t * FRAME_RATE - _EPS))


@dataclass(frozen=True)
class VaStream:
    frames: np.ndarray  # uint8, 1 = speech
    frame_rate: int = FRAME_RATE

    def __post_init__(self):
        object.__setattr__(self, "frames", np.asarray(self.frames, dtype=np.uint8))

    def __len__(self):
        return len(self.frames)

    @property
    def duration(self) -> float:
        return len(self.frames) / self.frame_rate

    def to_runs(self) -> list[dict]:
        """Run-length encoding as ``[{"start_s", "end_s", "active"}]``."""
        runs = []
        for start, end, value in _runs(self.frames):
            runs.append({"start_s": round(start * FRAME_S, 6),
                         "end_s": round(end * FRAME_S, 6),
                         "active": bool(value)})
        return runs

    def to_json(self) -> str:
        return json.dumps(self.to_runs())

    @classmethod
    def from_runs(cls, runs: Iterable[dict]) -> "VaStream":
        runs = list(runs)
        total = time_to_frame(runs[-1]["end_s"]) if runs else 0
        frames = np.zeros(total, dtype=np.uint8)
        for r in runs:
            if r["active"]:
                frames[time_to_frame(r["start_s"]):time_to_frame(r["end_s"])] = 1
        return cls(frames)


@dataclass(frozen=True)
class DyadVa:
    a: VaStream
    b: VaStream

    def __post_init__(self):
        if len(self.a) != len(self.b) or self.a.frame_rate != self.b.frame_rate:
            raise ShapeMismatch(
                f"speaker streams differ: {len(self.a)} vs {len(self.b)} frames")

    def __len__(self):
        return len(self.a)

    @property
    def duration(self) -> float:
        return self.a.duration

    def stacked(self) -> np.ndarray:
        """(2, n_frames) array, row 0 = speaker A."""
        return np.stack([self.a.frames, self.b.frames])

    @classmethod
    def from_arrays(cls, a, b) -> "DyadVa":
        return cls(VaStream(a), VaStream(b))


@dataclass(frozen=True)
class Interval:
    start: float
    end: float
    kind: str  # mutual_silence | overlap | solo_a | solo_b


def va_from_words(words: Sequence, duration: float) -> VaStream:
    """Frame ``i`` is speech iff its midpoint falls inside some word's [start, end)."""
    n = n_frames(duration)
    frames = np.zeros(n, dtype=np.uint8)
    for w in words:
        if w.end > duration + _EPS:
            raise WordBeyondDuration(
                f"word {w.word!r} ends at {w.end:.3f}s beyond duration {duration:.3f}s")
        # midpoint (i + 0.5)/50 in [start, end)  <=>  start*50 - 0.5 <= i < end*50 - 0.5
        first = int(math.ceil(w.start * FRAME_RATE - 0.5 - _EPS))
        stop = int(math.ceil(w.end * FRAME_RATE - 0.5 - _EPS))
        frames[max(first, 0):min(stop, n)] = 1
    return VaStream(frames)


def _runs(values: np.ndarray):
    """Yield (start, end, value) for maximal constant runs."""
    values = np.asarray(values)
    if len(values) == 0:
        return
    change = np.flatnonzero(np.diff(values)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [len(values)]])
    for s, e in zip(starts, ends):
        yield int(s), int(e), values[s]


_KINDS = {0: "mutual_silence", 1: "solo_a", 2: "solo_b", 3: "overlap"}


def frame_states(dyad: DyadVa) -> np.ndarray:
    """Per-frame code: 0 silence, 1 solo A, 2 solo B, 3 overlap."""
    return dyad.a.frames.astype(np.int8) + 2 * dyad.b.frames.astype(np.int8)


def classify_intervals(dyad: DyadVa) -> list[Interval]:
    return [Interval(s * FRAME_S, e * FRAME_S, _KINDS[int(v)])
            for s, e, v in _runs(frame_states(dyad))]


def state_runs(dyad: DyadVa) -> list[tuple[int, int, str]]:
    """Same partition as :func:`classify_intervals` but in frame indices."""
    return [(s, e, _KINDS[int(v)]) for s, e, v in _runs(frame_states(dyad))]


def window_speakers(dyad: DyadVa, t_start: float, t_end: float) -> dict:
    if not (0 <= t_start < t_end <= dyad.duration + _EPS):
        raise OutOfRange(f"window [{t_start}, {t_end}) outside [0, {dyad.duration})")
    lo, hi = time_to_frame(t_start), time_to_frame(t_end)
    return {"a_active": bool(dyad.a.frames[lo:hi].any()),
            "b_active": bool(dyad.b.frames[lo:hi].any())}
