"""Load a session from disk into frame-aligned 50 Hz arrays."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus_io import (SessionManifest, discover_manifests, parse_manifest,
                        parse_transcript, parse_visual_csv, read_wav)
from .features import (FeatureSubset, LogMelStandIn, audio_features, fill_gaps, fit_length,
                       prepare_visual)
from .va import DyadVa, n_frames, va_from_words
from .vap import labels_for_session


@dataclass
class SessionData:
    session_id: str
    duration: float
    dyad: DyadVa
    audio: np.ndarray | None  # 2 x frames x 256, float32
    video: np.ndarray | None  # 2 x frames x 60 (all channels, normalised), float32
    labels: np.ndarray
    mask: np.ndarray
    raw_faus: list | None = None  # per speaker (timestamps, frames x 17) at 30 Hz

    @property
    def n_frames(self) -> int:
        return len(self.labels)

    @property
    def minutes(self) -> float:
        return self.duration / 60.0


def load_dyad(manifest: SessionManifest) -> DyadVa:
    streams = [va_from_words(parse_transcript(ch.transcript_path), manifest.duration_s)
               for ch in manifest.channels]
    return DyadVa(*streams)


def load_session(manifest: SessionManifest | str | Path, extractor=None, audio: bool = True,
                 video: bool = True, strict_causal: bool = False,
                 keep_raw_faus: bool = False) -> SessionData:
    if not isinstance(manifest, SessionManifest):
        manifest = parse_manifest(manifest)
    n = n_frames(manifest.duration_s)
    dyad = load_dyad(manifest)
    labels, mask = labels_for_session(dyad)
    audio_arr = video_arr = raw = None
    if audio:
        extractor = extractor or LogMelStandIn()
        audio_arr = np.stack([
            fit_length(audio_features(read_wav(ch.audio_path), extractor).values, n)
            for ch in manifest.channels]).astype(np.float32)
    if video or keep_raw_faus:
        tracks = [parse_visual_csv(ch.visual_csv_path) for ch in manifest.channels]
        if video:
            video_arr = np.stack([
                fit_length(prepare_visual(t, FeatureSubset("all"), strict_causal).values, n)
                for t in tracks]).astype(np.float32)
        if keep_raw_faus:
            raw = [(t.timestamps, fill_gaps(t).faus.copy()) for t in tracks]
    return SessionData(manifest.session_id, manifest.duration_s, dyad, audio_arr,
                       video_arr, labels, mask, raw)


def load_corpus(root, **kwargs) -> list[SessionData]:
    return [load_session(parse_manifest(p), **kwargs) for p in discover_manifests(root)]
