import numpy as np
import pytest

from saliensim.corpus import build_vocab
from saliensim.embedding import build_embeddings, build_profile
from saliensim.lm import train_lm
from saliensim.salience import count_ngrams, extract_salient
from saliensim.synthetic import planted_corpus


@pytest.fixture(scope="session")
def planted():
    return planted_corpus(1000, seed=0)


@pytest.fixture(scope="session")
def planted_vocab(planted):
    return build_vocab(planted)


@pytest.fixture(scope="session")
def planted_lm(planted, planted_vocab):
    return train_lm(planted, planted_vocab, order=3)


@pytest.fixture(scope="session")
def planted_salient(planted):
    return extract_salient(count_ngrams(planted))


@pytest.fixture(scope="session")
def planted_embeddings(planted, planted_vocab):
    return build_embeddings(planted, planted_vocab, window=5, dim=64)


@pytest.fixture(scope="session")
def planted_profile(planted_salient, planted_embeddings):
    return build_profile(planted_salient, planted_embeddings)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one acceptance criterion outcome; all of them are echoed in
    the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, title, ok, detail):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
