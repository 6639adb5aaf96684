"""``mmvap`` command line: synth, events, train, eval, fau.

Every flag can also come from a TOML file given with ``--config-file``; keys
sit at top level or under a table named after the subcommand, and flags on
the command line win.  Exit codes: 0 success, 2 config error, 3 data error,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import tomli

from .errors import ConfigError, DataError, MMVapError, NumericError

log = logging.getLogger("mmvap")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def content_hash(data: bytes, n: int = 12) -> str:
    return hashlib.sha256(data).hexdigest()[:n]


def freeze_config(run_dir: Path, config: dict) -> Path:
    """Write the effective config; an existing run dir must hold the same one."""
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / "config.json"
    text = json.dumps(config, indent=2, sort_keys=True) + "\n"
    if path.exists() and path.read_text() != text:
        raise ConfigError(f"{run_dir} already holds a run with a different config")
    path.write_text(text)
    return path


def write_hashed(run_dir: Path, stem: str, suffix: str, data: bytes) -> Path:
    """Append-only artifact named by its content."""
    path = run_dir / f"{stem}-{content_hash(data)}{suffix}"
    if not path.exists():
        path.write_bytes(data)
    return path


def _effective(args: argparse.Namespace) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
            if k not in ("func", "config_file", "verbose")}


def _load_sessions(manifest, audio: bool, video: bool, keep_raw_faus: bool = False):
    from .data import load_corpus
    return load_corpus(manifest, audio=audio, video=video, keep_raw_faus=keep_raw_faus)


# -- commands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import SyntheticCorpusConfig, generate_synthetic_corpus
    data = {}
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        try:
            data = tomli.loads(text) if path.suffix == ".toml" else json.loads(text)
        except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        cfg = SyntheticCorpusConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    manifests = generate_synthetic_corpus(cfg, args.out)
    print(f"wrote {len(manifests)} sessions to {args.out}")
    return EXIT_OK


def cmd_events(args) -> int:
    from .corpus_io import discover_manifests, parse_manifest
    from .data import load_dyad
    from .events import (corpus_statistics, extract_events, group_by_min_fto,
                         write_events_csv, write_statistics_tsv)
    thresholds = sorted(ms / 1000.0 for ms in args.min_fto)
    events, minutes = [], 0.0
    for path in discover_manifests(args.manifest):
        m = parse_manifest(path)
        minutes += m.duration_s / 60.0
        events.extend(extract_events(load_dyad(m), 0.0, session_id=m.session_id))
    groups = group_by_min_fto(events, thresholds)
    selected = sorted({id(ev): ev for g in groups for ev in g.events}.values(),
                      key=lambda ev: (ev.session_id, ev.gap_start))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        write_events_csv(selected, fh)
    if minutes == 0:  # empty corpus: rates are undefined
        print(f"no sessions under {args.manifest}; wrote header only to {out}")
        return EXIT_OK
    stats_path = out.with_suffix(".stats.tsv")
    with stats_path.open("w", newline="") as fh:
        write_statistics_tsv(corpus_statistics(groups, minutes), fh)
    print(f"{len(selected)} events -> {out}; statistics -> {stats_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .pipeline import model_config_for, train_fold
    from .training import TrainConfig
    subset = "all" if args.fusion == "audio_only" else args.subset
    model_cfg = model_config_for(
        args.fusion, subset, d_model=args.d_model, n_heads=args.heads,
        n_self_layers=args.self_layers, n_cross_layers=args.cross_layers,
        context_frames=args.context, dropout=args.dropout, seed=args.seed)
    train_cfg = TrainConfig(batch_size=args.batch_size, learning_rate=args.lr,
                            epochs=args.epochs, seed=args.seed, max_steps=args.max_steps)
    config = _effective(args) | {"subset": subset}
    run_dir = Path(args.run_dir or Path("runs") / f"train-{content_hash(json.dumps(config, sort_keys=True).encode())}")
    freeze_config(run_dir, config)
    sessions = _load_sessions(args.manifest, model_cfg.uses_audio, model_cfg.uses_video)
    result, meta = train_fold(sessions, model_cfg, train_cfg, subset, args.fold, args.seed, run_dir)
    best = (run_dir / "best.ckpt").read_bytes()
    hashed = write_hashed(run_dir, "model", ".ckpt", best)
    print(f"best epoch {result.best_epoch} val loss {result.best_val_loss:.4f}; checkpoint {hashed}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .evaluation import FtoPoint, write_fto_curve
    from .pipeline import evaluate, split_sessions
    from .training import Fold, FoldPlan
    model, meta = load_checkpoint(args.checkpoint)
    if "fold_plan" not in meta:
        raise ConfigError("checkpoint carries no fold plan; cannot separate validation and test")
    fp = meta["fold_plan"]
    plan = FoldPlan(tuple(fp["test_sessions"]),
                    tuple(Fold(tuple(f["train"]), tuple(f["val"])) for f in fp["folds"]), fp["seed"])
    subset = meta.get("subset", "all")
    sessions = _load_sessions(args.manifest, model.cfg.uses_audio, model.cfg.uses_video)
    known = {s.session_id for s in sessions}
    missing = set(plan.test_sessions) | set(plan.fold(meta["fold"]).val)
    if not missing <= known:
        raise ConfigError(f"manifest lacks sessions named in the checkpoint: {sorted(missing - known)[:5]}")
    split = split_sessions(sessions, plan, meta["fold"])
    report, _, _ = evaluate(model, split.val, split.test, args.anchor, args.min_fto / 1000.0,
                            subset, {"checkpoint": Path(args.checkpoint).name, "fold": meta["fold"]})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_path = write_hashed(out, "report", ".json", report.to_json().encode())
    buf = io.StringIO()
    write_fto_curve([FtoPoint(**p) for p in report.fto_curve], buf)
    curve_path = write_hashed(out, "fto_curve", ".csv", buf.getvalue().encode())
    print(json.dumps({"balanced_accuracy": report.balanced_accuracy,
                      "f1_weighted": report.f1_weighted,
                      "baseline_balanced_accuracy": report.baseline["balanced_accuracy"],
                      "report": str(report_path), "fto_curve": str(curve_path)}, indent=2))
    return EXIT_OK


def cmd_fau(args) -> int:
    from .fau import fau_event_analysis, heatmap_rows, write_heatmap_tsv
    sessions = _load_sessions(args.manifest, audio=False, video=False, keep_raw_faus=True)
    analysis = fau_event_analysis(sessions, seed=args.seed, min_fto=args.min_fto / 1000.0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        write_heatmap_tsv(heatmap_rows(analysis), fh)
    print(f"heatmap -> {out} ({analysis.counts})")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmvap", description="Multimodal voice activity projection",
                                allow_abbrev=False)
    p.add_argument("--config-file", help="TOML file with flag defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--config", help="corpus config (TOML or JSON)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("events", help="extract holds and shifts")
    s.add_argument("--manifest", required=True)
    s.add_argument("--min-fto", type=float, nargs="+", default=[250.0], help="milliseconds")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_events)

    s = sub.add_parser("train", help="train one cross-validation fold")
    s.add_argument("--manifest", required=True)
    s.add_argument("--fusion", choices=["audio_only", "video_only", "early", "late"], default="late")
    s.add_argument("--subset", choices=["all", "gaze", "pose", "faus", "landmarks"], default="all")
    s.add_argument("--fold", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--run-dir")
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--batch-size", type=int, default=16)
    s.add_argument("--lr", type=float, default=0.005)
    s.add_argument("--d-model", type=int, default=256)
    s.add_argument("--heads", type=int, default=8)
    s.add_argument("--self-layers", type=int, default=3)
    s.add_argument("--cross-layers", type=int, default=1)
    s.add_argument("--context", type=int, default=1000, help="attention window in frames")
    s.add_argument("--dropout", type=float, default=0.1)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on its fold's test sessions")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--anchor", choices=["mutual_silence", "end_of_turn", "pre_overlap"],
                   default="mutual_silence")
    s.add_argument("--min-fto", type=float, default=250.0, help="milliseconds")
    s.add_argument("--out", default="eval")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("fau", help="FAU intensity around holds and shifts")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--min-fto", type=float, default=250.0, help="milliseconds")
    s.set_defaults(func=cmd_fau)
    return p


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config-file")
    known, rest = pre.parse_known_args(argv)
    if not known.config_file:
        return
    try:
        data = tomli.loads(Path(known.config_file).read_text())
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot load {known.config_file}: {exc}") from exc
    command = next((a for a in rest if not a.startswith("-")), None)
    values = {k: v for k, v in data.items() if not isinstance(v, dict)}
    values.update(data.get(command, {}))
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    target = subparsers.choices.get(command)
    if target is None:
        return
    dests = {a.dest for a in target._actions}
    defaults = {k.replace("-", "_"): v for k, v in values.items()}
    unknown = set(defaults) - dests
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {sorted(unknown)}")
    target.set_defaults(**defaults)
    for action in target._actions:  # satisfied by the file
        if action.dest in defaults:
            action.required = False


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MMVapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
