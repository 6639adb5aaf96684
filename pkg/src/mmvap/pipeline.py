"""End-to-end glue: fold splits, training one fold, scoring and reporting."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch

from .data import SessionData
from .evaluation import (FTO_GROUPS, EventScore, build_report, fto_curve, score_events)
from .events import extract_events, in_group
from .features import FeatureSubset
from .model import MMVap, ModelConfig
from .stats import mann_whitney_u, paired_t_test
from .errors import ZeroVariance
from .training import (FoldPlan, TrainConfig, TrainResult, make_folds, segment_sessions,
                       session_inputs, train)


@dataclass
class FoldSplit:
    train: list
    val: list
    test: list


def split_sessions(sessions: Sequence[SessionData], plan: FoldPlan, fold: int) -> FoldSplit:
    by_id = {s.session_id: s for s in sessions}
    f = plan.fold(fold)
    return FoldSplit([by_id[i] for i in f.train], [by_id[i] for i in f.val],
                     [by_id[i] for i in plan.test_sessions])


def model_config_for(fusion: str, subset: str = "all", **overrides) -> ModelConfig:
    """``visual_dims`` follows the feature subset; audio-only ignores the subset."""
    dims = FeatureSubset(subset).dims if fusion != "audio_only" else FeatureSubset("all").dims
    return ModelConfig(fusion=fusion, visual_dims=dims, **overrides)


def train_fold(sessions: Sequence[SessionData], model_cfg: ModelConfig, train_cfg: TrainConfig,
               subset: str = "all", fold: int = 0, fold_seed: int = 0,
               run_dir=None, plan: FoldPlan | None = None) -> tuple[TrainResult, dict]:
    if model_cfg.fusion == "audio_only":
        subset = "all"
    plan = plan or make_folds([s.session_id for s in sessions], fold_seed)
    split = split_sessions(sessions, plan, fold)
    meta = {"fold": fold, "fold_plan": plan.to_dict(), "subset": subset,
            "train": asdict(train_cfg) | {"betas": list(train_cfg.betas)}}
    result = train(model_cfg, train_cfg, segment_sessions(split.train, "train"),
                   segment_sessions(split.val, "val"), subset, run_dir, meta)
    return result, meta


def session_probs(model: MMVap, session: SessionData, subset: str = "all") -> np.ndarray:
    """Whole-session per-frame distributions, float64 array (frames, 256)."""
    inputs = session_inputs(session, model.cfg, subset, next(model.parameters()).dtype)
    inputs.pop("labels"), inputs.pop("mask")
    model.eval()
    with torch.no_grad():
        return model.predict(**inputs)[0].double().numpy()


def session_events(session: SessionData):
    return extract_events(session.dyad, 0.0, session_id=session.session_id)


def score_sessions(model: MMVap, sessions: Sequence[SessionData], anchor: str,
                   subset: str = "all", probs_cache: dict | None = None) -> list[EventScore]:
    """Scores for every event of every session (all FTO groups); filter afterwards."""
    out = []
    for s in sessions:
        if probs_cache is not None and s.session_id in probs_cache:
            probs = probs_cache[s.session_id]
        else:
            probs = session_probs(model, s, subset)
            if probs_cache is not None:
                probs_cache[s.session_id] = probs
        out.extend(score_events(probs, session_events(s), anchor, s.duration))
    return out


def select(scores: Sequence[EventScore], min_fto: float, anchor: str) -> list[EventScore]:
    """Events of one FTO group; under pre_overlap holds are always kept."""
    if anchor == "pre_overlap":
        return [e for e in scores if e.event.kind == "hold" or in_group(e.event, min_fto)]
    return [e for e in scores if in_group(e.event, min_fto)]


def significance(test: Sequence[EventScore], report) -> dict:
    """Paired t-test of per-session balanced accuracy against the always-hold
    baseline, and MWU of shift vs hold scores."""
    out = {}
    per = [v["balanced_accuracy"] for v in report.per_session.values()]
    if len(per) >= 2:
        try:
            out["paired_t_p"] = paired_t_test(per, [0.5] * len(per)).p
        except ZeroVariance:
            out["paired_t_p"] = None
            out["paired_t_degenerate"] = True
    shifts = [e.score for e in test if e.truth]
    holds = [e.score for e in test if not e.truth]
    if shifts and holds:
        out["mwu_p"] = mann_whitney_u(shifts, holds).p
    return out


def evaluate(model: MMVap, val: Sequence[SessionData], test: Sequence[SessionData],
             anchor: str, min_fto: float, subset: str = "all", meta: dict | None = None):
    """Report with thresholds picked on ``val`` sessions and metrics on ``test``.

    Returns (report, val scores, test scores); scores cover every FTO group
    so callers can build curves without re-running the model.
    """
    val_scores = score_sessions(model, val, anchor, subset)
    test_scores = score_sessions(model, test, anchor, subset)
    v, t = select(val_scores, min_fto, anchor), select(test_scores, min_fto, anchor)
    report = build_report(v, t, anchor, min_fto, meta)
    report.significance = significance(t, report)
    groups = FTO_GROUPS if anchor != "pre_overlap" else ()
    report.fto_curve = [asdict(p) for p in fto_curve([(val_scores, test_scores)], groups)]
    return report, val_scores, test_scores
