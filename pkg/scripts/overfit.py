"""Overfit a small late-fusion model on ten synthetic segments and print the loss curve."""

import argparse
import tempfile

import torch

from mmvap.data import load_session
from mmvap.model import ModelConfig
from mmvap.synth import SyntheticCorpusConfig, generate_synthetic_corpus
from mmvap.training import TrainConfig, segment_sessions, train


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.005)
    args = p.parse_args()
    torch.set_num_threads(1)
    with tempfile.TemporaryDirectory() as tmp:
        cfg = SyntheticCorpusConfig(n_sessions=2, session_duration_s=92.0, seed=0)
        sessions = [load_session(m) for m in generate_synthetic_corpus(cfg, tmp)]
    segments = segment_sessions(sessions, "train")[:10]
    mcfg = ModelConfig(d_model=args.d_model, n_heads=args.heads, n_self_layers=args.layers,
                       context_frames=100, fusion="late", dropout=0.0)
    res = train(mcfg, TrainConfig(batch_size=10, learning_rate=args.lr, epochs=10 ** 6,
                                  max_steps=args.steps), segments)
    for i, loss in enumerate(res.train_losses(), 1):
        if i == 1 or i % 10 == 0:
            print(f"step {i:4d}  loss {loss:.4f}")


if __name__ == "__main__":
    main()
