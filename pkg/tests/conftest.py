import numpy as np
import pytest

from latent_evidence.corpus import GenConfig, generate_corpus
from latent_evidence.model import ModelConfig, encode_all


SMALL = GenConfig(n_train=60, n_dev=20, n_test=20, docs_per_claim=2, min_sentences=8,
                  max_sentences=12, seed=11)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SMALL)


@pytest.fixture(scope="session")
def small_encoded(small_corpus):
    cfg = ModelConfig()
    return {k: encode_all(v, cfg) for k, v in small_corpus.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
