"""Shift/hold rates per minimum-FTO group for a corpus directory.

    python scripts/corpus_table.py CORPUS_DIR [--min-fto-ms 0 250 500 ...]
"""

import argparse
import sys

from mmvap.corpus_io import discover_manifests, parse_manifest
from mmvap.data import load_dyad
from mmvap.events import corpus_statistics, extract_events, group_by_min_fto, write_statistics_tsv


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("corpus")
    p.add_argument("--min-fto-ms", type=float, nargs="+",
                   default=[-250, 0, 250, 500, 750, 1000, 1250, 1500])
    args = p.parse_args()
    events, minutes = [], 0.0
    for path in discover_manifests(args.corpus):
        m = parse_manifest(path)
        minutes += m.duration_s / 60
        events += extract_events(load_dyad(m), 0.0, session_id=m.session_id)
    groups = group_by_min_fto(events, [ms / 1000 for ms in args.min_fto_ms])
    write_statistics_tsv(corpus_statistics(groups, minutes), sys.stdout)


if __name__ == "__main__":
    main()
