"""Language-model contract and a bundled interpolated absolute-discounting
n-gram model."""

import json
import math
from collections import Counter, defaultdict
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from . import _kernels
from .corpus import Vocabulary, sequence_ids

LM_FORMAT_VERSION = 1


@runtime_checkable
class LanguageModel(Protocol):
    """Anything that can score the next token given a prefix of ids.

    ``next_distribution`` must return a non-negative vector of length
    ``vocab_size`` summing to 1. ``vocab`` (a Vocabulary) is optional; when
    present it lets decoders map ids onto embedding rows by token.
    """

    vocab_size: int
    eos_id: int

    def next_distribution(self, prefix: Sequence[int]) -> np.ndarray: ...


class UniformLM:
    def __init__(self, vocab_size, eos_id=1, vocab=None):
        self.vocab_size = int(vocab_size)
        self.eos_id = eos_id
        self.vocab = vocab

    def next_distribution(self, prefix):
        return np.full(self.vocab_size, 1.0 / self.vocab_size)


class BackoffNgramLM:
    """Interpolated absolute discounting down to a uniform base.

    For a context ``h`` seen ``C`` times with ``T`` distinct continuations::

        P(w | h) = max(c(h, w) - d, 0) / C + (d * T / C) * P(w | h')

    where ``h'`` drops the oldest token. Unseen contexts fall straight
    through to the lower order. The recursion bottoms out at ``1/|V|``.
    """

    def __init__(self, vocab, order=3, discount=0.75):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not 0.0 < discount < 1.0:
            raise ValueError("discount must be in (0, 1)")
        self.vocab = vocab
        self.order = int(order)
        self.discount = float(discount)
        # tables[n][context] -> Counter(next_id), context has length n-1
        self.tables = [defaultdict(Counter) for _ in range(self.order + 1)]
        self._frozen = None

    @property
    def vocab_size(self):
        return len(self.vocab)

    @property
    def eos_id(self):
        return self.vocab.eos_id

    def fit(self, sequences):
        """Add counts from id sequences. Every position contributes a
        unigram event; order-n events need n-1 tokens of history."""
        v = self.vocab_size
        for seq in sequences:
            seq = [int(t) for t in seq]
            for t in seq:
                if not 0 <= t < v:
                    raise ValueError(f"token id {t} outside vocabulary of size {v}")
            for i, t in enumerate(seq):
                for n in range(1, min(self.order, i + 1) + 1):
                    self.tables[n][tuple(seq[i - n + 1:i])][t] += 1
        self._frozen = None
        return self

    def _freeze(self):
        frozen = []
        for n in range(self.order + 1):
            entries = {}
            for ctx, cnt in self.tables[n].items():
                ids = np.array(sorted(cnt), dtype=np.int64)
                counts = np.array([cnt[i] for i in ids], dtype=np.float64)
                entries[ctx] = (ids, counts, float(counts.sum()))
            frozen.append(entries)
        self._frozen = frozen
        return frozen

    def next_distribution(self, prefix):
        frozen = self._frozen or self._freeze()
        v = self.vocab_size
        prefix = list(prefix)
        if prefix and (min(prefix) < 0 or max(prefix) >= v):
            raise ValueError(f"prefix has token ids outside vocabulary of size {v}")
        dist = np.full(v, 1.0 / v)
        for n in range(1, self.order + 1):
            if n - 1 > len(prefix):
                break
            ctx = tuple(int(t) for t in prefix[len(prefix) - (n - 1):]) if n > 1 else ()
            entry = frozen[n].get(ctx)
            if entry is None:
                break
            ids, counts, total = entry
            dist = _kernels.interpolate_discounted(dist, ids, counts, total, self.discount)
        return dist

    def prob(self, token, prefix):
        return float(self.next_distribution(prefix)[token])

    def to_json(self):
        ngrams = {}
        for n in range(1, self.order + 1):
            rows = []
            for ctx in sorted(self.tables[n]):
                cnt = self.tables[n][ctx]
                rows.extend([*ctx, w, cnt[w]] for w in sorted(cnt))
            ngrams[str(n)] = rows
        return {
            "version": LM_FORMAT_VERSION,
            "order": self.order,
            "discount": self.discount,
            "vocab": list(self.vocab.tokens),
            "ngrams": ngrams,
        }

    @classmethod
    def from_json(cls, doc):
        if doc.get("version") != LM_FORMAT_VERSION:
            raise ValueError(f"unsupported LM format version {doc.get('version')!r}")
        lm = cls(Vocabulary(doc["vocab"]), doc["order"], doc["discount"])
        for key, rows in doc["ngrams"].items():
            n = int(key)
            for row in rows:
                lm.tables[n][tuple(row[:n - 1])][row[n - 1]] = row[n]
        return lm


def train_lm(corpus, vocab, order=3, discount=0.75):
    """Fit on ``post [EOS] response [EOS]`` for every pair."""
    if len(corpus) == 0:
        raise ValueError("cannot train a language model on an empty corpus")
    lm = BackoffNgramLM(vocab, order, discount)
    return lm.fit(sequence_ids(p, vocab) for p in corpus)


def sequence_log_prob(lm, seq):
    total = 0.0
    for i, t in enumerate(seq):
        p = float(lm.next_distribution(seq[:i])[t])
        if not p > 0.0:
            raise ArithmeticError(f"zero probability for token {t} at position {i}")
        total += math.log(p)
    return total


def perplexity(lm, corpus_or_sequences, vocab=None):
    """exp(mean negative log-likelihood per token).

    Accepts a Corpus (encoded as ``post [EOS] response [EOS]`` with
    ``vocab``, defaulting to ``lm.vocab``) or a list of id sequences.
    """
    items = list(corpus_or_sequences)
    if not items:
        raise ValueError("perplexity of an empty corpus is undefined")
    if not isinstance(items[0], (list, tuple, np.ndarray)):
        vocab = vocab or lm.vocab
        items = [sequence_ids(p, vocab) for p in items]
    nll = 0.0
    n_tok = 0
    for seq in items:
        nll -= sequence_log_prob(lm, list(seq))
        n_tok += len(seq)
    return math.exp(nll / n_tok)


def save_lm(lm, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(lm.to_json(), fh, ensure_ascii=False, separators=(",", ":"))
        fh.write("\n")


def load_lm(path):
    with open(path, encoding="utf-8") as fh:
        return BackoffNgramLM.from_json(json.load(fh))
