import csv
import json

import pytest

from mmvap.cli import main
from mmvap.corpus_io import discover_manifests, parse_manifest
from mmvap.data import load_dyad
from mmvap.events import extract_events, in_group
from mmvap.fau import CONDITIONS

TINY_MODEL = ["--d-model", "8", "--heads", "2", "--self-layers", "1", "--context", "100",
              "--dropout", "0", "--batch-size", "4", "--max-steps", "3", "--epochs", "1"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "corpus.toml"
    cfg.write_text("n_sessions = 20\nsession_duration_s = 30.0\n")
    assert main(["synth", "--config", str(cfg), "--out", str(root / "c"), "--seed", "2"]) == 0
    return root / "c"


def test_events_rows_match_direct_extraction(corpus, tmp_path):
    out = tmp_path / "ev.csv"
    assert main(["events", "--manifest", str(corpus), "--min-fto", "250", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    expected = 0
    for p in discover_manifests(corpus):
        m = parse_manifest(p)
        expected += sum(in_group(e, 0.25) for e in extract_events(load_dyad(m), 0.0))
    assert len(rows) == expected > 0
    assert out.with_suffix(".stats.tsv").exists()


def test_events_empty_corpus_header_only(tmp_path):
    (tmp_path / "empty").mkdir()
    out = tmp_path / "ev.csv"
    code = main(["events", "--manifest", str(tmp_path / "empty"), "--out", str(out)])
    assert code == 0
    assert out.read_text().splitlines() == [
        "session_id,kind,prev_speaker,next_speaker,fto_s,gap_start_s,gap_end_s"]


def test_exit_codes(tmp_path):
    assert main(["events", "--manifest", str(tmp_path / "missing"), "--out", str(tmp_path / "x")]) == 3
    bad = tmp_path / "bad.toml"
    bad.write_text("n_sessions = -3\n")
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["synth", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "o")]) == 2
    assert main(["frobnicate"]) == 2
    cfg = tmp_path / "c.toml"
    cfg.write_text("[events]\nbogus = 1\n")
    assert main(["--config-file", str(cfg), "events", "--manifest", "x", "--out", "y"]) == 2


def test_config_file_values_and_flag_precedence(corpus, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(f'[events]\nmanifest = "{corpus}"\nmin-fto = [1000.0]\nout = "{tmp_path / "a.csv"}"\n')
    assert main(["--config-file", str(cfg), "events"]) == 0
    from_file = len(list(csv.DictReader((tmp_path / "a.csv").open())))
    assert main(["--config-file", str(cfg), "events", "--min-fto", "0",
                 "--out", str(tmp_path / "b.csv")]) == 0
    assert not (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    assert len(list(csv.DictReader((tmp_path / "b.csv").open()))) > from_file


def test_train_is_reproducible_and_eval_writes_artifacts(corpus, tmp_path, capsys):
    args = ["train", "--manifest", str(corpus), "--fusion", "late", "--seed", "1"] + TINY_MODEL
    assert main(args + ["--run-dir", str(tmp_path / "r1")]) == 0
    assert main(args + ["--run-dir", str(tmp_path / "r2")]) == 0
    c1 = (tmp_path / "r1" / "best.ckpt").read_bytes()
    assert c1 == (tmp_path / "r2" / "best.ckpt").read_bytes()
    assert json.loads((tmp_path / "r1" / "config.json").read_text())["fusion"] == "late"
    assert list((tmp_path / "r1").glob("model-*.ckpt"))
    # re-using a run dir with another config is refused
    assert main(args[:-2] + ["--epochs", "2", "--run-dir", str(tmp_path / "r1")]) == 2
    capsys.readouterr()
    code = main(["eval", "--checkpoint", str(tmp_path / "r1" / "best.ckpt"), "--manifest",
                 str(corpus), "--min-fto", "0", "--out", str(tmp_path / "ev")])
    assert code in (0, 4)  # a 3-step model may leave a test split with one class
    if code == 0:
        summary = json.loads(capsys.readouterr().out)
        assert summary["baseline_balanced_accuracy"] == 0.5
        assert list((tmp_path / "ev").glob("report-*.json"))


def test_fau_command(corpus, tmp_path):
    out = tmp_path / "fau.tsv"
    assert main(["fau", "--manifest", str(corpus), "--out", str(out), "--min-fto", "0"]) == 0
    header = out.read_text().splitlines()[0].split("\t")
    assert header == ["fau"] + list(CONDITIONS)
