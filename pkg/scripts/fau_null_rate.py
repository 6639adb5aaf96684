"""How often FAU shift cells come out significant on a corpus with no planted cue.

    python scripts/fau_null_rate.py [--runs 20] [--sessions 8]
"""

import argparse
import tempfile

import numpy as np

from mmvap.corpus_io import FAU_COLUMNS
from mmvap.data import load_session
from mmvap.fau import SHIFT_CONDITIONS, fau_event_analysis
from mmvap.synth import GapDistribution, SyntheticCorpusConfig, generate_synthetic_corpus


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--sessions", type=int, default=8)
    p.add_argument("--corpus-seed", type=int, default=1)
    args = p.parse_args()
    cfg = SyntheticCorpusConfig(n_sessions=args.sessions, session_duration_s=120.0,
                                seed=args.corpus_seed, visual_cue_strength=0.0,
                                gap_distribution=GapDistribution(0.35, 0.15))
    with tempfile.TemporaryDirectory() as tmp:
        sessions = [load_session(m, audio=False, video=False, keep_raw_faus=True)
                    for m in generate_synthetic_corpus(cfg, tmp)]
    j = FAU_COLUMNS.index(cfg.cue_au)
    clean_all = clean_cue = 0
    rates = []
    for seed in range(args.runs):
        res = fau_event_analysis(sessions, seed=seed)
        hits = np.stack([~res.suppressed(c) for c in SHIFT_CONDITIONS])
        rates.append(hits.mean())
        clean_all += not hits.any()
        clean_cue += not hits[:, j].any()
    n_cells = len(SHIFT_CONDITIONS) * len(FAU_COLUMNS)
    rate = float(np.mean(rates))
    print(f"runs with every shift cell suppressed: {clean_all}/{args.runs}")
    print(f"runs with the {cfg.cue_au} shift cells suppressed: {clean_cue}/{args.runs}")
    print(f"per-cell false-positive rate {rate:.4f}; "
          f"expected clean fraction if independent {(1 - rate) ** n_cells:.3f}")


if __name__ == "__main__":
    main()
