"""Synthetic dyadic corpora in the on-disk formats of :mod:`mmvap.corpus_io`.

Each session alternates turns between two speakers.  Words are tiled inside
turns, audio is band-limited noise gated by the words, and the visual CSV
carries speech-driven articulation FAUs, blinks, slow pose/gaze drift and,
optionally, a raised plateau on one FAU of the upcoming speaker before every shift.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus_io import (AU_NAMES, CHANNELS, SAMPLE_RATE, VIDEO_RATE, ChannelSpec,
                        RawVisualTrack, SessionManifest, WordAlignment, write_manifest,
                        write_transcript, write_visual_csv, write_wav)
from .errors import ConfigError, IoError

# articulation AUs follow speech; the rest idle near zero
_SPEECH_AUS = {"AU10": 1.2, "AU14": 0.8, "AU20": 0.7, "AU25": 2.0, "AU26": 1.6}
_SYLLABLE_HZ = 4.0
_CUE_RISE_S = 0.1
_CUE_DECAY_S = 0.3
_PROSODIC_FALL_S = 0.6
_PROSODIC_FLOOR = 0.1


@dataclass
class GapDistribution:
    mean_s: float = 0.45
    sd_s: float = 0.25


@dataclass
class SyntheticCorpusConfig:
    n_sessions: int = 10
    session_duration_s: float = 120.0
    mean_turn_s: float = 4.0
    gap_distribution: GapDistribution = field(default_factory=GapDistribution)
    overlap_rate: float = 0.1
    visual_cue_lead_s: float = 0.5
    visual_cue_strength: float = 3.0
    seed: int = 0
    hold_prob: float = 0.6
    backchannel_rate: float = 0.15
    # probability that a turn ending in a shift fades out (holds fade with 1 - p)
    prosodic_cue_prob: float = 0.5
    cue_au: str = "AU06_r"
    visual_dropout_rate: float = 0.005

    def __post_init__(self):
        if isinstance(self.gap_distribution, dict):
            self.gap_distribution = GapDistribution(**self.gap_distribution)
        self.validate()

    def validate(self) -> None:
        checks = {
            "n_sessions": self.n_sessions > 0,
            "session_duration_s": self.session_duration_s > 0,
            "mean_turn_s": self.mean_turn_s > 0,
            "gap_distribution.mean_s": self.gap_distribution.mean_s > 0,
            "gap_distribution.sd_s": self.gap_distribution.sd_s > 0,
            "visual_cue_lead_s": self.visual_cue_lead_s > 0,
            "overlap_rate": 0 <= self.overlap_rate <= 1,
            "hold_prob": 0 <= self.hold_prob <= 1,
            "backchannel_rate": 0 <= self.backchannel_rate <= 1,
            "prosodic_cue_prob": 0 <= self.prosodic_cue_prob <= 1,
            "visual_dropout_rate": 0 <= self.visual_dropout_rate < 0.1,
            "visual_cue_strength": self.visual_cue_strength >= 0,
            "cue_au": self.cue_au in CHANNELS[:17],
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ConfigError(f"invalid synthetic corpus config: {', '.join(bad)}")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticCorpusConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Turn:
    speaker: int
    start: float
    end: float
    words: list
    kind: str = ""  # how the *next* turn follows: hold | shift | overlap_shift | end
    fades: bool = False


def _r(t: float) -> float:
    return round(t, 2)


def _tile_words(rng, start: float, end: float) -> list[tuple[float, float]]:
    words, t = [], start
    while t < end - 0.1:
        w_end = min(t + rng.uniform(0.15, 0.5), end)
        words.append((_r(t), _r(w_end)))
        t = w_end
        if rng.random() < 0.3:
            t += rng.uniform(0.02, 0.15)
    if words and words[-1][1] < _r(end):
        words[-1] = (words[-1][0], _r(end))
    return [(s, e) for s, e in words if e > s]


def simulate_turns(cfg: SyntheticCorpusConfig, rng) -> tuple[list[Turn], list[Turn]]:
    """Main turns and backchannels for one session."""
    duration = cfg.session_duration_s
    limit = duration - 0.5
    gd = cfg.gap_distribution
    turns, backchannels = [], []
    t = rng.uniform(0.5, 1.5)
    speaker = int(rng.integers(2))
    while t < limit - 0.5:
        length = max(0.5, rng.gamma(2.0, cfg.mean_turn_s / 2.0))
        end = min(t + length, limit)
        turn = Turn(speaker, _r(t), _r(end), _tile_words(rng, t, end))
        turns.append(turn)
        if end - t > 3.0 and rng.random() < cfg.backchannel_rate:
            b_start = rng.uniform(t + 1.2, end - 1.6)
            b_end = b_start + rng.uniform(0.2, 0.5)
            backchannels.append(Turn(1 - speaker, _r(b_start), _r(b_end),
                                     [(_r(b_start), _r(b_end))], "backchannel"))
        shift = rng.random() >= cfg.hold_prob
        if shift and rng.random() < cfg.overlap_rate:
            turn.kind = "overlap_shift"
            t = max(end - rng.uniform(0.3, 0.8), turn.start + 0.2)
        else:
            turn.kind = "shift" if shift else "hold"
            t = end + max(0.06, rng.normal(gd.mean_s, gd.sd_s))
        fade_p = cfg.prosodic_cue_prob if shift else 1.0 - cfg.prosodic_cue_prob
        turn.fades = bool(rng.random() < fade_p)
        if shift:
            speaker = 1 - speaker
    if turns:
        turns[-1].kind = "end"
    return turns, backchannels


def _speech_mask(words, times: np.ndarray) -> np.ndarray:
    mask = np.zeros(len(times), dtype=bool)
    for s, e in words:
        mask |= (times >= s) & (times < e)
    return mask


def _band_noise(rng, n: int, lo: float, hi: float) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    spec[(freqs < lo) | (freqs > hi)] = 0
    x = np.fft.irfft(spec, n)
    return x / (x.std() + 1e-12)


def synth_audio(rng, n_samples: int, speaker: int, turns: list[Turn],
                backchannels: list[Turn]) -> np.ndarray:
    own = [t for t in turns + backchannels if t.speaker == speaker]
    gain = np.zeros(n_samples)
    ramp = int(0.005 * SAMPLE_RATE)
    for turn in own:
        for s, e in turn.words:
            i0, i1 = int(round(s * SAMPLE_RATE)), min(int(round(e * SAMPLE_RATE)), n_samples)
            if i1 <= i0:
                continue
            seg = np.full(i1 - i0, rng.uniform(0.7, 1.3))
            k = min(ramp, (i1 - i0) // 2)
            if k:
                seg[:k] *= np.linspace(0, 1, k)
                seg[-k:] *= np.linspace(1, 0, k)
            gain[i0:i1] = seg
        if turn.fades:
            i1 = min(int(round(turn.end * SAMPLE_RATE)), n_samples)
            i0 = max(i1 - int(_PROSODIC_FALL_S * SAMPLE_RATE), 0)
            gain[i0:i1] *= np.linspace(1.0, _PROSODIC_FLOOR, i1 - i0)
    lo, hi = (200.0, 3500.0) if speaker == 0 else (300.0, 4200.0)
    noise = _band_noise(rng, n_samples, lo, hi)
    return 0.1 * gain * noise + 0.001 * rng.standard_normal(n_samples)


def _ar1(rng, n: int, k: int, coef: float, sd: float) -> np.ndarray:
    eps = rng.standard_normal((n, k)) * sd * math.sqrt(1 - coef ** 2)
    out = np.empty((n, k))
    out[0] = rng.standard_normal(k) * sd
    for i in range(1, n):
        out[i] = coef * out[i - 1] + eps[i]
    return out


def synth_visual(rng, cfg: SyntheticCorpusConfig, speaker: int, turns: list[Turn],
                 backchannels: list[Turn]) -> RawVisualTrack:
    n = int(round(cfg.session_duration_s * VIDEO_RATE))
    times = np.arange(n) / VIDEO_RATE
    own_turns = [(t.start, t.end) for t in turns + backchannels if t.speaker == speaker]
    talking = _speech_mask(own_turns, times).astype(float)

    faus = np.zeros((n, 17))
    offsets = rng.normal(-0.8, 0.3, 17)
    noise = _ar1(rng, n, 17, 0.7, 0.25)
    phase = rng.uniform(0, 2 * np.pi, 17)
    for j, au in enumerate(AU_NAMES):
        latent = offsets[j] + noise[:, j]
        if au in _SPEECH_AUS:
            gain = _SPEECH_AUS[au] * rng.uniform(0.8, 1.2)
            mod = 0.5 + 0.5 * np.abs(np.sin(2 * np.pi * _SYLLABLE_HZ * times + phase[j]))
            latent = latent + talking * gain * mod + talking * 0.8
        faus[:, j] = latent
    blink = AU_NAMES.index("AU45")
    for start in np.flatnonzero(rng.random(n) < 0.3 / VIDEO_RATE):
        faus[start:start + 5, blink] += rng.uniform(1.5, 3.0)

    if cfg.visual_cue_strength > 0:
        cue = CHANNELS.index(cfg.cue_au)
        lead = cfg.visual_cue_lead_s
        for prev, nxt in zip(turns, turns[1:]):
            if prev.kind not in ("shift", "overlap_shift") or nxt.speaker != speaker:
                continue
            onset = nxt.start
            up = (times >= onset - lead) & (times < onset)
            rise = np.minimum((times[up] - (onset - lead)) / _CUE_RISE_S, 1.0)
            faus[up, cue] += cfg.visual_cue_strength * rise
            down = (times >= onset) & (times < onset + _CUE_DECAY_S)
            faus[down, cue] += cfg.visual_cue_strength * (1 - (times[down] - onset) / _CUE_DECAY_S)
    faus = np.clip(faus, 0.0, 5.0)

    base_gaze = rng.normal([0.0, 0.1, -1.0], [0.1, 0.1, 0.0], (2, 3))
    gaze = base_gaze[None] + _ar1(rng, n, 6, 0.95, 0.05).reshape(n, 2, 3)
    gaze /= np.linalg.norm(gaze, axis=2, keepdims=True)
    head_pos = rng.normal([0, 0, 500], [20, 20, 60]) + _ar1(rng, n, 3, 0.98, 8.0)
    head_rot = rng.normal(0, 0.1, 3) + _ar1(rng, n, 3, 0.98, 0.05)

    base_lm = np.stack([rng.uniform(100, 220, 15), rng.uniform(60, 200, 15)], axis=1)
    landmarks = base_lm[None] + rng.normal(0, 0.6, (n, 15, 2))
    jaw = AU_NAMES.index("AU26")
    landmarks[:, 8:15, 1] += 2.0 * faus[:, jaw:jaw + 1]
    confidence = rng.uniform(0.9, 0.98, n)

    values = np.concatenate([faus, gaze.reshape(n, 6), head_pos, head_rot,
                             landmarks.reshape(n, 30), confidence[:, None]], axis=1)
    gaps = rng.random(n) < cfg.visual_dropout_rate
    gaps[0] = gaps[-1] = False
    values[gaps] = np.nan
    return RawVisualTrack(VIDEO_RATE, times, values, gaps)


def generate_session(cfg: SyntheticCorpusConfig, index: int, out_dir: Path) -> SessionManifest:
    rng = np.random.default_rng([cfg.seed, index])
    session_id = f"session_{index:03d}"
    sdir = out_dir / session_id
    sdir.mkdir(parents=True, exist_ok=True)
    turns, backchannels = simulate_turns(cfg, rng)
    n_samples = int(round(cfg.session_duration_s * SAMPLE_RATE))
    specs = []
    for spk, tag in enumerate("ab"):
        spans = sorted(w for t in turns + backchannels if t.speaker == spk for w in t.words)
        words = [WordAlignment(f"w{k}", s, e) for k, (s, e) in enumerate(spans)]
        write_transcript(words, sdir / f"{tag}_transcript.json")
        write_wav(sdir / f"{tag}.wav", synth_audio(rng, n_samples, spk, turns, backchannels))
        write_visual_csv(synth_visual(rng, cfg, spk, turns, backchannels),
                         sdir / f"{tag}_visual.csv")
        specs.append(ChannelSpec(f"{session_id}_{tag}", sdir / f"{tag}.wav",
                                 sdir / f"{tag}_transcript.json", sdir / f"{tag}_visual.csv"))
    manifest = SessionManifest(session_id, float(cfg.session_duration_s), tuple(specs),
                               sdir / "manifest.json")
    write_manifest(manifest, manifest.path)
    return manifest


def generate_synthetic_corpus(cfg: SyntheticCorpusConfig, out_dir) -> list[SessionManifest]:
    cfg.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "corpus_config.json").write_text(
            json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        return [generate_session(cfg, i, out_dir) for i in range(cfg.n_sessions)]
    except OSError as exc:
        raise IoError(str(exc)) from exc
