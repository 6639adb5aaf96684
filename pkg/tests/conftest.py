import numpy as np
import pytest
import torch

from mmvap.data import load_session
from mmvap.synth import SyntheticCorpusConfig, generate_synthetic_corpus

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Three 60 s synthetic sessions on disk: (config, manifests, root)."""
    root = tmp_path_factory.mktemp("corpus")
    cfg = SyntheticCorpusConfig(n_sessions=3, session_duration_s=60.0, seed=7)
    return cfg, generate_synthetic_corpus(cfg, root), root


@pytest.fixture(scope="session")
def small_sessions(small_corpus):
    _, manifests, _ = small_corpus
    return [load_session(m, keep_raw_faus=True) for m in manifests]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
