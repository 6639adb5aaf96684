"""Late fusion vs audio only on synthetic corpora with and without a visual cue.

    python scripts/multimodal_gain.py --workdir runs/gain [--seeds 0 1 2] [--max-steps 300]
"""

import argparse
import json
import logging

import torch

from mmvap.experiments import GainSettings, multimodal_gain


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--workdir", required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--max-steps", type=int, default=300)
    p.add_argument("--sessions", type=int, default=50)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    torch.set_num_threads(args.threads)
    settings = GainSettings(seeds=tuple(args.seeds), max_steps=args.max_steps,
                            n_sessions=args.sessions)
    out = multimodal_gain(settings, args.workdir)
    print(json.dumps({k: out[k] for k in ("planted", "null")}, indent=2))


if __name__ == "__main__":
    main()
