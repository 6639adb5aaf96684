"""Desk-scale experiments shared by scripts/ and the acceptance suite."""

from __future__ import annotations

import gc
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import load_corpus
from .synth import GapDistribution, SyntheticCorpusConfig, generate_synthetic_corpus
from .training import TrainConfig, make_folds
from .pipeline import evaluate, model_config_for, split_sessions, train_fold

log = logging.getLogger(__name__)


@dataclass
class GainSettings:
    """Synthetic multimodal-gain experiment.

    The audio channel carries a partial prosodic cue so that both models
    share most of their decisions; the planted visual cue adds information
    only the video-capable model can use.
    """
    n_sessions: int = 50
    session_duration_s: float = 300.0
    mean_turn_s: float = 3.0
    prosodic_cue_prob: float = 0.75
    cue_strength: float = 3.0
    cue_lead_s: float = 0.5
    gap_mean_s: float = 0.45
    gap_sd_s: float = 0.25
    seeds: tuple = (0, 1, 2)
    fusions: tuple = ("audio_only", "late")
    d_model: int = 16
    n_heads: int = 2
    n_self_layers: int = 1
    context_frames: int = 100
    dropout: float = 0.0
    batch_size: int = 16
    learning_rate: float = 0.005
    max_steps: int = 300
    anchor: str = "mutual_silence"
    min_fto: float = 0.25
    corpus_seed: int = 0

    def corpus_config(self, cue_strength: float) -> SyntheticCorpusConfig:
        return SyntheticCorpusConfig(
            n_sessions=self.n_sessions, session_duration_s=self.session_duration_s,
            mean_turn_s=self.mean_turn_s,
            gap_distribution=GapDistribution(self.gap_mean_s, self.gap_sd_s),
            visual_cue_lead_s=self.cue_lead_s, visual_cue_strength=cue_strength,
            prosodic_cue_prob=self.prosodic_cue_prob, seed=self.corpus_seed)


@dataclass
class ConditionResult:
    cue_strength: float
    bacc: dict  # fusion -> per-seed balanced accuracy
    n_test_events: list = field(default_factory=list)

    def mean(self, fusion: str) -> float:
        return float(np.mean(self.bacc[fusion]))

    def gain(self, a: str = "late", b: str = "audio_only") -> float:
        return self.mean(a) - self.mean(b)


def audio_digest(corpus_dir) -> str:
    """Hash of everything an audio-only model sees: waveforms and transcripts."""
    h = hashlib.sha256()
    for path in sorted(Path(corpus_dir).rglob("*")):
        if path.suffix == ".wav" or path.name.endswith("_transcript.json"):
            h.update(path.relative_to(corpus_dir).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def run_condition(settings: GainSettings, cue_strength: float, workdir,
                  cache: dict | None = None) -> ConditionResult:
    """Train and score every fusion per seed.

    ``cache`` maps (fusion, seed, audio digest) to a balanced accuracy so that
    audio-only runs on corpora with identical audio are trained once.
    """
    workdir = Path(workdir)
    cache = {} if cache is None else cache
    corpus_dir = workdir / f"corpus_cue{cue_strength:g}"
    if not (corpus_dir / "corpus_config.json").exists():
        generate_synthetic_corpus(settings.corpus_config(cue_strength), corpus_dir)
    digest = audio_digest(corpus_dir)
    sessions = load_corpus(corpus_dir)
    result = ConditionResult(cue_strength, {f: [] for f in settings.fusions})
    for seed in settings.seeds:
        plan = make_folds([s.session_id for s in sessions], seed)
        split = split_sessions(sessions, plan, 0)
        for fusion in settings.fusions:
            key = (fusion, seed, digest)
            if fusion == "audio_only" and key in cache:
                result.bacc[fusion].append(cache[key][0])
                if fusion == settings.fusions[0]:
                    result.n_test_events.append(cache[key][1])
                log.info("cue %g seed %d %s: reused identical-audio run", cue_strength, seed, fusion)
                continue
            t0 = time.time()
            mcfg = model_config_for(fusion, "all", d_model=settings.d_model,
                                    n_heads=settings.n_heads, n_self_layers=settings.n_self_layers,
                                    context_frames=settings.context_frames,
                                    dropout=settings.dropout, seed=seed)
            tcfg = TrainConfig(batch_size=settings.batch_size, learning_rate=settings.learning_rate,
                               epochs=1000, seed=seed, max_steps=settings.max_steps)
            trained, _ = train_fold(sessions, mcfg, tcfg, "all", 0, seed, plan=plan)
            report, _, _ = evaluate(trained.model, split.val, split.test, settings.anchor,
                                    settings.min_fto)
            result.bacc[fusion].append(report.balanced_accuracy)
            cache[key] = (report.balanced_accuracy, report.n_events)
            if fusion == settings.fusions[0]:
                result.n_test_events.append(report.n_events)
            log.info("cue %g seed %d %s: bacc %.4f (val loss %.4f, %.0fs)", cue_strength, seed,
                     fusion, report.balanced_accuracy, trained.best_val_loss, time.time() - t0)
    del sessions
    gc.collect()
    return result


def multimodal_gain(settings: GainSettings, workdir) -> dict:
    """Late-fusion minus audio-only balanced accuracy, with and without the cue."""
    cache: dict = {}
    planted = run_condition(settings, settings.cue_strength, workdir, cache)
    null = run_condition(settings, 0.0, workdir, cache)
    out = {"settings": asdict(settings),
           "planted": asdict(planted) | {"gain": planted.gain()},
           "null": asdict(null) | {"gain": null.gain()}}
    (Path(workdir) / "multimodal_gain.json").write_text(json.dumps(out, indent=2) + "\n")
    return out
