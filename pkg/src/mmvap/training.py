"""Session-level folds, 20 s segmentation and the optimisation loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .data import SessionData
from .errors import DivergedLoss, SessionTooShort, TooFewSessions
from .features import FeatureSubset, SUBSETS
from .corpus_io import CHANNELS
from .model import MMVap, ModelConfig, vap_loss
from .va import FRAME_RATE

log = logging.getLogger(__name__)

SEGMENT_S = 20.0
HOP_S = 18.0
N_FOLDS = 5
TEST_FRACTION = 0.05


@dataclass(frozen=True)
class Fold:
    train: tuple
    val: tuple


@dataclass(frozen=True)
class FoldPlan:
    test_sessions: tuple
    folds: tuple
    seed: int

    def fold(self, k: int) -> Fold:
        return self.folds[k]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "test_sessions": list(self.test_sessions),
                "folds": [{"train": list(f.train), "val": list(f.val)} for f in self.folds]}


def make_folds(sessions: Sequence[str], seed: int = 0, n_folds: int = N_FOLDS,
               test_fraction: float = TEST_FRACTION) -> FoldPlan:
    """Hold out ``ceil(5%)`` of sessions for test, then k-fold the rest."""
    ids = sorted(sessions)
    if len(ids) < 20:
        raise TooFewSessions(f"need at least 20 sessions, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate session ids")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_test = max(1, math.ceil(len(ids) * test_fraction - 1e-9))
    test, rest = order[:n_test], order[n_test:]
    folds = []
    for val in np.array_split(np.array(rest, dtype=object), n_folds):
        val_set = set(val)
        folds.append(Fold(tuple(s for s in rest if s not in val_set), tuple(val)))
    return FoldPlan(tuple(test), tuple(folds), seed)


@dataclass
class Segment:
    session: SessionData
    start: int  # frame
    length: int
    split: str = ""  # provenance tag: train | val | test

    @property
    def session_id(self) -> str:
        return self.session.session_id

    @property
    def start_s(self) -> float:
        return self.start / FRAME_RATE

    def _slice(self, arr):
        return None if arr is None else arr[..., self.start:self.start + self.length, :]

    @property
    def audio(self):
        return self._slice(self.session.audio)

    @property
    def video(self):
        return self._slice(self.session.video)

    @property
    def labels(self):
        return self.session.labels[self.start:self.start + self.length]

    @property
    def mask(self):
        return self.session.mask[self.start:self.start + self.length]


def segment_starts(duration: float, segment_s: float = SEGMENT_S, hop_s: float = HOP_S) -> list[float]:
    if duration + 1e-9 < segment_s:
        raise SessionTooShort(f"session of {duration:.2f}s is shorter than one {segment_s:.0f}s segment")
    n = int(math.floor((duration - segment_s) / hop_s + 1e-9)) + 1
    return [i * hop_s for i in range(n)]


def segment_sessions(sessions: Sequence[SessionData], split: str = "",
                     segment_s: float = SEGMENT_S, hop_s: float = HOP_S) -> list[Segment]:
    """Overlapping windows; labels come from the whole session so the last
    frames of a segment still see their true two-second future."""
    length = int(round(segment_s * FRAME_RATE))
    segments = []
    for s in sessions:
        for start in segment_starts(s.duration, segment_s, hop_s):
            first = int(round(start * FRAME_RATE))
            if first + length <= s.n_frames:
                segments.append(Segment(s, first, length, split))
    return segments


def subset_columns(subset: str) -> list[int]:
    return [CHANNELS.index(c) for c in SUBSETS[FeatureSubset(subset).name]]


def batch_tensors(segments: Sequence[Segment], cfg: ModelConfig, subset: str = "all",
                  dtype=torch.float32) -> dict:
    """Stack segments into model inputs plus labels and mask."""
    out = {}
    if cfg.uses_audio:
        audio = torch.as_tensor(np.stack([s.audio for s in segments]), dtype=dtype)
        out["audio_a"], out["audio_b"] = audio[:, 0], audio[:, 1]
    if cfg.uses_video:
        cols = subset_columns(subset)
        video = torch.as_tensor(np.stack([s.video[..., cols] for s in segments]), dtype=dtype)
        out["video_a"], out["video_b"] = video[:, 0], video[:, 1]
    out["labels"] = torch.as_tensor(np.stack([s.labels for s in segments]))
    out["mask"] = torch.as_tensor(np.stack([s.mask for s in segments]))
    return out


def session_inputs(session: SessionData, cfg: ModelConfig, subset: str = "all",
                   dtype=torch.float32) -> dict:
    """Whole-session model inputs (batch of one)."""
    seg = Segment(session, 0, session.n_frames)
    return batch_tensors([seg], cfg, subset, dtype)


@dataclass
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 0.005
    epochs: int = 10
    grad_clip: float = 1.0
    betas: tuple = (0.9, 0.999)
    seed: int = 0
    max_steps: int | None = None  # desk-scale cap across all epochs

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0 or self.learning_rate < 0 or self.grad_clip <= 0:
            raise ValueError("batch_size, epochs and grad_clip must be positive, learning_rate >= 0")
        self.betas = tuple(self.betas)


@dataclass
class TrainResult:
    model: MMVap
    best_state: dict
    best_epoch: int
    best_val_loss: float
    history: list = field(default_factory=list)

    def train_losses(self) -> list[float]:
        return [h["loss"] for h in self.history if h["split"] == "train"]


def evaluate_loss(model: MMVap, segments: Sequence[Segment], subset: str = "all",
                  batch_size: int = 16) -> float:
    """Frame-weighted mean cross-entropy over ``segments``."""
    total, count = 0.0, 0
    model.eval()
    with torch.no_grad():
        for i in range(0, len(segments), batch_size):
            b = batch_tensors(segments[i:i + batch_size], model.cfg, subset,
                              next(model.parameters()).dtype)
            labels, mask = b.pop("labels"), b.pop("mask")
            n = int(mask.sum())
            if n:
                total += float(vap_loss(model(**b), labels, mask)) * n
                count += n
    return total / count if count else float("nan")


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, train_segments: Sequence[Segment],
          val_segments: Sequence[Segment] = (), subset: str = "all", run_dir=None,
          meta: dict | None = None) -> TrainResult:
    """Adam with gradient clipping; keeps the weights with the lowest validation loss.

    With ``run_dir`` the per-step metrics go to ``metrics.jsonl`` and the best
    and last checkpoints are written there.
    """
    for seg in list(train_segments) + list(val_segments):
        if seg.split == "test":
            raise ValueError(f"test segment from {seg.session_id} passed to training")
    if not train_segments:
        raise ValueError("no training segments")
    model = MMVap(model_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate, betas=train_cfg.betas)
    gen = torch.Generator().manual_seed(train_cfg.seed)
    metrics_fh = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        metrics_fh = (run_dir / "metrics.jsonl").open("w")

    history, step = [], 0
    best = (math.inf, -1, None)

    def record(entry):
        history.append(entry)
        if metrics_fh:
            metrics_fh.write(json.dumps(entry) + "\n")

    try:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(train_cfg.seed)
            for epoch in range(train_cfg.epochs):
                model.train()
                order = torch.randperm(len(train_segments), generator=gen).tolist()
                for i in range(0, len(order), train_cfg.batch_size):
                    if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                        break
                    b = batch_tensors([train_segments[j] for j in order[i:i + train_cfg.batch_size]],
                                      model_cfg, subset)
                    labels, mask = b.pop("labels"), b.pop("mask")
                    loss = vap_loss(model(**b), labels, mask)
                    if not torch.isfinite(loss):
                        raise DivergedLoss(f"non-finite loss at epoch {epoch} step {step}")
                    opt.zero_grad()
                    loss.backward()
                    torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
                    opt.step()
                    step += 1
                    record({"epoch": epoch, "step": step, "split": "train", "loss": loss.item()})
                val_loss = evaluate_loss(model, val_segments, subset) if val_segments else float("nan")
                if val_segments:
                    record({"epoch": epoch, "step": step, "split": "val", "loss": val_loss})
                    log.info("epoch %d step %d val loss %.4f", epoch, step, val_loss)
                score = val_loss if val_segments else -epoch
                if score < best[0]:
                    best = (score, epoch, {k: v.detach().clone() for k, v in model.state_dict().items()})
                    if run_dir is not None:
                        save_checkpoint(run_dir / "best.ckpt", model, meta)
                if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                    break
    finally:
        if metrics_fh:
            metrics_fh.close()
    if run_dir is not None:
        save_checkpoint(run_dir / "last.ckpt", model, meta)
    model.load_state_dict(best[2])
    model.eval()
    return TrainResult(model, best[2], best[1], best[0] if val_segments else float("nan"), history)


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
