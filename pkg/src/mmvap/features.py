"""Visual feature normalisation/resampling and the audio feature extractor contract."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus_io import (CHANNELS, FAU_COLUMNS, GAZE_COLUMNS,
                        HEAD_POS_COLUMNS, HEAD_ROT_COLUMNS, LANDMARK_COLUMNS,
                        SAMPLE_RATE, VIDEO_RATE, RawVisualTrack)
from .errors import BadSampleRate, RateMismatch, ShapeMismatch, TrackingTooSparse
from .va import FRAME_RATE

MAX_GAP_FRACTION = 0.10
AUDIO_DIMS = 256
HOP = SAMPLE_RATE // FRAME_RATE  # 320 samples = 20 ms
WIN = SAMPLE_RATE * 25 // 1000  # 400 samples = 25 ms

POSE_GAZE = GAZE_COLUMNS + HEAD_POS_COLUMNS + HEAD_ROT_COLUMNS

SUBSETS = {
    "gaze": GAZE_COLUMNS,
    "pose": HEAD_POS_COLUMNS + HEAD_ROT_COLUMNS,
    "faus": FAU_COLUMNS,
    "landmarks": LANDMARK_COLUMNS,
    "all": CHANNELS,
}


@dataclass(frozen=True)
class FeatureSubset:
    name: str

    def __post_init__(self):
        if self.name not in SUBSETS:
            raise ValueError(f"unknown feature subset {self.name!r}; choose from {sorted(SUBSETS)}")

    @property
    def columns(self) -> list[str]:
        return list(SUBSETS[self.name])

    @property
    def dims(self) -> int:
        return len(SUBSETS[self.name])


@dataclass(frozen=True)
class FeatureTrack:
    frame_rate: float
    values: np.ndarray  # frames x channels
    channels: tuple
    gap_mask: np.ndarray

    def __len__(self):
        return len(self.values)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.channels.index(name)]

    @classmethod
    def from_raw(cls, raw: RawVisualTrack) -> "FeatureTrack":
        return cls(raw.frame_rate, raw.values.copy(), tuple(CHANNELS), raw.gap_mask.copy())


@dataclass(frozen=True)
class ParticipantStats:
    """Per-channel statistics over one participant's whole session."""
    minimum: np.ndarray
    maximum: np.ndarray

    @classmethod
    def of(cls, values: np.ndarray) -> "ParticipantStats":
        return cls(np.nanmin(values, axis=0), np.nanmax(values, axis=0))


def fill_gaps(track: RawVisualTrack) -> RawVisualTrack:
    """Linearly bridge gap rows; leading/trailing gaps copy the nearest valid row."""
    n = len(track)
    gaps = track.gap_mask | np.isnan(track.values).any(axis=1)
    if n == 0 or gaps.sum() > MAX_GAP_FRACTION * n or gaps.all():
        raise TrackingTooSparse(f"{int(gaps.sum())} of {n} frames untracked "
                                f"(limit {MAX_GAP_FRACTION:.0%})")
    if not gaps.any():
        return track
    values = track.values.copy()
    valid = ~gaps
    t_valid = track.timestamps[valid]
    for c in range(values.shape[1]):
        values[gaps, c] = np.interp(track.timestamps[gaps], t_valid, values[valid, c])
    return replace(track, values=values, gap_mask=gaps)


def minmax_scale(track: FeatureTrack, stats: ParticipantStats | None = None) -> FeatureTrack:
    stats = stats or ParticipantStats.of(track.values)
    span = stats.maximum - stats.minimum
    flat = span <= 0
    scaled = (track.values - stats.minimum) / np.where(flat, 1.0, span)
    scaled[:, flat] = 0.0
    return replace(track, values=scaled)


def zero_mean_pose_gaze(track: FeatureTrack, means: np.ndarray | None = None) -> FeatureTrack:
    cols = [track.channels.index(c) for c in POSE_GAZE if c in track.channels]
    values = track.values.copy()
    if means is None:
        means = values[:, cols].mean(axis=0)
    values[:, cols] -= means
    return replace(track, values=values)


def resample_length(n_in: int, rate_in: float = VIDEO_RATE, rate_out: float = FRAME_RATE) -> int:
    return int(np.ceil(n_in * rate_out / rate_in - 1e-9))


def resample_to_50hz(track: FeatureTrack, strict_causal: bool = False) -> FeatureTrack:
    """30 Hz -> 50 Hz.  Output frame k sits at k/50 s.

    The default interpolates linearly between the bracketing input frames,
    which lets up to one 30 Hz frame of future leak in; ``strict_causal``
    instead holds the most recent input frame.
    """
    if round(track.frame_rate) != VIDEO_RATE:
        raise RateMismatch(f"expected {VIDEO_RATE} Hz input, got {track.frame_rate}")
    n_in = len(track)
    n_out = resample_length(n_in)
    pos = np.arange(n_out) * (VIDEO_RATE / FRAME_RATE)
    if strict_causal:
        idx = np.minimum(np.floor(pos + 1e-9).astype(int), n_in - 1)
        values = track.values[idx]
        gaps = track.gap_mask[idx]
    else:
        src = np.arange(n_in)
        values = np.stack([np.interp(pos, src, track.values[:, c])
                           for c in range(track.values.shape[1])], axis=1)
        gaps = track.gap_mask[np.minimum(np.round(pos).astype(int), n_in - 1)]
    return FeatureTrack(FRAME_RATE, values, track.channels, gaps)


def select_subset(track: FeatureTrack, subset: FeatureSubset | str) -> FeatureTrack:
    if isinstance(subset, str):
        subset = FeatureSubset(subset)
    cols = [track.channels.index(c) for c in subset.columns]
    return replace(track, values=track.values[:, cols], channels=tuple(subset.columns))


def prepare_visual(raw: RawVisualTrack, subset: FeatureSubset | str = "all",
                   strict_causal: bool = False) -> FeatureTrack:
    """Fixed pipeline: fill gaps, min-max scale, zero-mean pose/gaze, 50 Hz, subset."""
    track = FeatureTrack.from_raw(fill_gaps(raw))
    track = minmax_scale(track)
    track = zero_mean_pose_gaze(track)
    track = resample_to_50hz(track, strict_causal=strict_causal)
    return select_subset(track, subset)


def fit_length(values: np.ndarray, n: int) -> np.ndarray:
    """Trim, or pad by repeating the last row, to exactly ``n`` frames."""
    if len(values) >= n:
        return values[:n]
    pad = np.repeat(values[-1:], n - len(values), axis=0)
    return np.concatenate([values, pad])


# audio -----------------------------------------------------------------------


@dataclass(frozen=True)
class AudioFeatureSeq:
    values: np.ndarray  # frames x 256
    frame_rate: int = FRAME_RATE

    def __len__(self):
        return len(self.values)


class AudioExtractor(Protocol):
    def __call__(self, pcm: np.ndarray) -> np.ndarray: ...


def audio_frame_count(n_samples: int) -> int:
    return -(-n_samples // HOP)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10 ** (m / 2595.0) - 1.0)

    edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2), n_mels + 2))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    fb = np.zeros((n_mels, len(freqs)))
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


class LogMelStandIn:
    """Deterministic stand-in for a pretrained speech encoder.

    40 log-compressed mel energies (25 ms Hann window, 20 ms hop) mapped to 256
    dims through a fixed Gaussian matrix drawn from ``seed``.  Silence maps to
    the zero vector.
    """

    n_fft = 512

    def __init__(self, seed: int = 0, n_mels: int = 40, dims: int = AUDIO_DIMS):
        self.seed = seed
        self.fb = mel_filterbank(n_mels, self.n_fft)
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((n_mels, dims)) / np.sqrt(n_mels)
        self.window = np.hanning(WIN)

    def log_mel(self, pcm: np.ndarray) -> np.ndarray:
        n = audio_frame_count(len(pcm))
        padded = np.zeros((n - 1) * HOP + WIN)
        padded[:len(pcm)] = pcm
        idx = np.arange(WIN)[None, :] + HOP * np.arange(n)[:, None]
        frames = padded[idx] * self.window
        power = np.abs(np.fft.rfft(frames, n=self.n_fft, axis=1)) ** 2
        return np.log1p(power @ self.fb.T)

    def __call__(self, pcm: np.ndarray) -> np.ndarray:
        return self.log_mel(pcm) @ self.projection


class PrecomputedFeatures:
    """Extractor backed by a features file written by an external encoder."""

    def __init__(self, path):
        self.path = Path(path)
        self.values, self.meta = read_audio_features(self.path)

    def __call__(self, pcm: np.ndarray) -> np.ndarray:
        expected = audio_frame_count(len(pcm))
        if abs(len(self.values) - expected) > 1:
            raise ShapeMismatch(f"{self.path.name}: {len(self.values)} frames, "
                                f"audio implies {expected}")
        return fit_length(self.values, expected)


def audio_features(pcm: np.ndarray, extractor: AudioExtractor | None = None,
                   sample_rate: int = SAMPLE_RATE) -> AudioFeatureSeq:
    if sample_rate != SAMPLE_RATE:
        raise BadSampleRate(f"audio must be {SAMPLE_RATE} Hz, got {sample_rate}")
    extractor = extractor or LogMelStandIn()
    values = np.asarray(extractor(np.asarray(pcm, dtype=np.float64)))
    if values.ndim != 2 or values.shape[1] != AUDIO_DIMS:
        raise ShapeMismatch(f"extractor returned shape {values.shape}, need (frames, {AUDIO_DIMS})")
    return AudioFeatureSeq(values)


def write_audio_features(values: np.ndarray, path, session_id: str, channel: str) -> None:
    path = Path(path)
    values = np.asarray(values, dtype="<f4")
    path.write_bytes(values.tobytes())
    sidecar = {"frame_rate": FRAME_RATE, "dims": int(values.shape[1]),
               "session_id": session_id, "channel": channel}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def read_audio_features(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if meta["frame_rate"] != FRAME_RATE:
        raise RateMismatch(f"{path.name}: features at {meta['frame_rate']} Hz")
    values = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(-1, meta["dims"])
    return values.astype(np.float64), meta
