"""Readers and writers for session manifests, transcripts, visual CSVs and audio."""

from __future__ import annotations

import csv
import json
import math
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (BadSampleRate, ChannelCountNot2, EmptyFile, MissingColumn,
                     MissingFile, NonMonotonicTimes, SchemaViolation)

SAMPLE_RATE = 16000
VIDEO_RATE = 30

AU_NAMES = ["AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12",
            "AU14", "AU15", "AU17", "AU20", "AU23", "AU25", "AU26", "AU45"]
FAU_COLUMNS = [f"{au}_r" for au in AU_NAMES]
GAZE_COLUMNS = [f"gaze_{e}_{ax}" for e in (0, 1) for ax in "xyz"]
HEAD_POS_COLUMNS = ["pose_Tx", "pose_Ty", "pose_Tz"]
HEAD_ROT_COLUMNS = ["pose_Rx", "pose_Ry", "pose_Rz"]
LANDMARK_COLUMNS = [f"{ax}_{i}" for i in range(15) for ax in "xy"]
CONFIDENCE_COLUMN = "confidence"

# canonical in-memory channel order
CHANNELS = (FAU_COLUMNS + GAZE_COLUMNS + HEAD_POS_COLUMNS + HEAD_ROT_COLUMNS
            + LANDMARK_COLUMNS + [CONFIDENCE_COLUMN])
assert len(CHANNELS) == 60

# column order of the CSV files we write
CSV_HEADER = (["frame", "timestamp", "confidence"] + GAZE_COLUMNS + HEAD_POS_COLUMNS
              + HEAD_ROT_COLUMNS + FAU_COLUMNS + LANDMARK_COLUMNS)


@dataclass(frozen=True)
class ChannelSpec:
    participant_id: str
    audio_path: Path
    transcript_path: Path
    visual_csv_path: Path


@dataclass(frozen=True)
class SessionManifest:
    session_id: str
    duration_s: float
    channels: tuple[ChannelSpec, ChannelSpec]
    path: Path | None = None

    def to_json(self) -> dict:
        base = self.path.parent if self.path else None

        def rel(p: Path) -> str:
            if base is not None:
                try:
                    return str(Path(p).relative_to(base))
                except ValueError:
                    pass
            return str(p)

        return {"session_id": self.session_id, "duration_s": self.duration_s,
                "channels": [{"participant_id": c.participant_id, "audio": rel(c.audio_path),
                              "transcript": rel(c.transcript_path),
                              "visual_csv": rel(c.visual_csv_path)}
                             for c in self.channels]}


@dataclass(frozen=True)
class WordAlignment:
    word: str
    start: float
    end: float


class Transcript(list):
    """List of :class:`WordAlignment` sorted by start, plus parse warnings."""

    def __init__(self, words=(), warnings=()):
        super().__init__(words)
        self.warnings = list(warnings)


@dataclass
class RawVisualTrack:
    """Visual features at the extractor's frame rate.

    ``values`` holds the 60 channels in :data:`CHANNELS` order; gap rows are NaN
    and flagged in ``gap_mask``.
    """
    frame_rate: float
    timestamps: np.ndarray
    values: np.ndarray
    gap_mask: np.ndarray

    def __len__(self):
        return len(self.timestamps)

    @property
    def n_gaps(self) -> int:
        return int(self.gap_mask.sum())

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, CHANNELS.index(name)]

    @property
    def faus(self):
        return self.values[:, :17]

    @property
    def gaze(self):
        return self.values[:, 17:23].reshape(-1, 2, 3)

    @property
    def head_pos(self):
        return self.values[:, 23:26]

    @property
    def head_rot(self):
        return self.values[:, 26:29]

    @property
    def landmarks(self):
        return self.values[:, 29:59].reshape(-1, 15, 2)

    @property
    def confidence(self):
        return self.values[:, 59]


def _require(obj: dict, key: str, kind, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaViolation(f"{where}{key}", "missing")
    value = obj[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaViolation(f"{where}{key}", f"expected {getattr(kind, '__name__', kind)}")
    return value


def _load_json(path: Path):
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(str(path), f"invalid JSON ({exc})") from exc


def parse_manifest(path) -> SessionManifest:
    path = Path(path)
    data = _load_json(path)
    if not isinstance(data, dict):
        raise SchemaViolation("manifest", "expected a JSON object")
    session_id = _require(data, "session_id", str, "")
    duration = float(_require(data, "duration_s", float, ""))
    if not duration > 0 or not math.isfinite(duration):
        raise SchemaViolation("duration_s", "must be positive")
    channels = _require(data, "channels", list, "")
    if len(channels) != 2:
        raise ChannelCountNot2(len(channels))
    base = path.parent
    specs = []
    for i, ch in enumerate(channels):
        where = f"channels[{i}]."
        fields = [_require(ch, k, str, where)
                  for k in ("participant_id", "audio", "transcript", "visual_csv")]
        specs.append(ChannelSpec(fields[0], *(base / f for f in fields[1:])))
    if specs[0].participant_id == specs[1].participant_id:
        raise SchemaViolation("channels.participant_id", "participant ids must differ")
    return SessionManifest(session_id, duration, tuple(specs), path)


def write_manifest(manifest: SessionManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_json(), indent=2) + "\n")


def discover_manifests(root) -> list[Path]:
    """A manifest file itself, or every ``manifest.json`` below a directory."""
    root = Path(root)
    if root.is_file():
        return [root]
    if not root.is_dir():
        raise MissingFile(str(root))
    return sorted(root.rglob("manifest.json"))


def parse_transcript(path) -> Transcript:
    path = Path(path)
    data = _load_json(path)
    if not isinstance(data, list):
        raise SchemaViolation("transcript", "expected a JSON array")
    words = []
    for i, entry in enumerate(data):
        where = f"[{i}]."
        word = _require(entry, "word", str, where)
        start = float(_require(entry, "start_s", float, where))
        end = float(_require(entry, "end_s", float, where))
        if not end > start:
            raise NonMonotonicTimes(f"{path.name}{where[:-1]}: end_s {end} <= start_s {start}")
        if start < 0:
            raise SchemaViolation(f"{where}start_s", "negative time")
        words.append(WordAlignment(word, start, end))
    words.sort(key=lambda w: (w.start, w.end))
    warnings = [f"words {i} and {i + 1} overlap ({a.word!r} ends {a.end} after {b.word!r} starts {b.start})"
                for i, (a, b) in enumerate(zip(words, words[1:])) if b.start < a.end]
    return Transcript(words, warnings)


def write_transcript(words: Sequence[WordAlignment], path) -> None:
    payload = [{"word": w.word, "start_s": w.start, "end_s": w.end} for w in words]
    Path(path).write_text(json.dumps(payload) + "\n")


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def parse_visual_csv(path) -> RawVisualTrack:
    """Read an OpenFace-style CSV; rows that fail to parse become gaps."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFile(str(path)) from None
        index = {name: i for i, name in enumerate(header)}
        for name in ["frame", "timestamp"] + CHANNELS:
            if name not in index:
                raise MissingColumn(name)
        cols = [index[c] for c in CHANNELS]
        ts_col, frame_col = index["timestamp"], index["frame"]
        timestamps, rows, gaps = [], [], []
        for row in reader:
            if not row:
                continue
            try:
                ts = _float(row[ts_col])
            except (ValueError, IndexError):
                try:
                    ts = (int(row[frame_col]) - 1) / VIDEO_RATE
                except (ValueError, IndexError):
                    ts = math.nan
            try:
                values = [_float(row[c]) for c in cols]
                gap = False
            except (ValueError, IndexError):
                values = [math.nan] * len(cols)
                gap = True
            timestamps.append(ts)
            rows.append(values)
            gaps.append(gap)
    if not rows:
        raise EmptyFile(str(path))
    timestamps = np.array(timestamps)
    missing = np.isnan(timestamps)
    if missing.any():
        # rows with no usable time sit on the nominal grid
        timestamps[missing] = np.flatnonzero(missing) / VIDEO_RATE
    if len(timestamps) > 1 and not (np.diff(timestamps) > 0).all():
        raise SchemaViolation("timestamp", "timestamps must be strictly increasing")
    rate = VIDEO_RATE
    if len(timestamps) > 2:
        rate = float(round(1.0 / np.median(np.diff(timestamps))))
    return RawVisualTrack(rate, timestamps, np.array(rows, dtype=np.float64),
                          np.array(gaps, dtype=bool))


def write_visual_csv(track: RawVisualTrack, path, decimals: int = 4) -> None:
    order = [CHANNELS.index(c) for c in CSV_HEADER[3:]]
    conf = CHANNELS.index(CONFIDENCE_COLUMN)
    fmt = f"{{:.{decimals}f}}"
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, (ts, vals, gap) in enumerate(zip(track.timestamps, track.values, track.gap_mask)):
            if gap:
                w.writerow([i + 1, f"{ts:.3f}"] + ["nan"] * (len(CSV_HEADER) - 2))
                continue
            w.writerow([i + 1, f"{ts:.3f}", fmt.format(vals[conf])]
                       + [fmt.format(vals[j]) for j in order])


def read_wav(path, target_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Mono float samples in [-1, 1] at ``target_rate``."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    with wave.open(str(path), "rb") as wf:
        rate, width, n_ch = wf.getframerate(), wf.getsampwidth(), wf.getnchannels()
        raw = wf.readframes(wf.getnframes())
    if width != 2:
        raise BadSampleRate(f"{path.name}: only 16-bit PCM is supported")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_ch > 1:
        pcm = pcm.reshape(-1, n_ch).mean(axis=1)
    if rate != target_rate:
        from scipy.signal import resample_poly

        g = math.gcd(rate, target_rate)
        pcm = resample_poly(pcm, target_rate // g, rate // g)
    return pcm


def write_wav(path, pcm: np.ndarray, rate: int = SAMPLE_RATE) -> None:
    data = np.clip(np.round(np.asarray(pcm) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(data.tobytes())
