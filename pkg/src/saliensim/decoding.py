"""Top-k sampling and salience-similarity constrained top-k sampling."""

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class DecoderConfig:
    k: int = 40
    c: int = 10
    r: int = 5
    gamma_sim: float = 0.01
    backtrack_limit: int = 5
    max_steps: int = 30
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.c <= self.k:
            raise ValueError(f"need 1 <= c <= k, got c={self.c}, k={self.k}")
        if self.r < 2:
            raise ValueError("r must be >= 2")
        if self.backtrack_limit < 0:
            raise ValueError("backtrack_limit must be >= 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def check_vocab(self, vocab_size):
        if self.k > vocab_size:
            raise ValueError(f"k={self.k} exceeds vocabulary size {vocab_size}")

    def with_(self, **changes):
        return replace(self, **changes)

    def to_json(self):
        return {"k": self.k, "c": self.c, "r": self.r, "gamma_sim": self.gamma_sim,
                "backtrack_limit": self.backtrack_limit, "max_steps": self.max_steps, "seed": self.seed}

    @classmethod
    def from_json(cls, obj):
        return cls(**{k: obj[k] for k in ("k", "c", "r", "gamma_sim", "backtrack_limit", "max_steps", "seed") if k in obj})


class TopK(NamedTuple):
    """Rescaled top-k distribution: ``ids`` by descending probability
    (ties: lower id first) and matching ``probs`` summing to 1."""

    ids: np.ndarray
    probs: np.ndarray

    def as_dict(self):
        return {int(i): float(p) for i, p in zip(self.ids, self.probs)}


def top_k_rescale(dist, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    dist = np.asarray(dist, dtype=np.float64)
    k = min(k, dist.shape[0])
    if k < dist.shape[0]:
        # argpartition then a stable sort of the survivors keeps the
        # lower-id tie-break without sorting the whole vocabulary
        cut = np.partition(dist, dist.shape[0] - k)[dist.shape[0] - k]
        cand = np.flatnonzero(dist >= cut)
        cand = cand[np.argsort(-dist[cand], kind="stable")][:k]
    else:
        cand = np.argsort(-dist, kind="stable")
    kept = dist[cand]
    return TopK(cand, kept / kept.sum())


def sample_candidates(topk, c, rng):
    """Draw up to ``c`` distinct ids from ``topk`` without replacement,
    renormalizing after each draw; returned in draw order."""
    support = int(np.count_nonzero(topk.probs > 0))
    if support == 0:
        raise ValueError("empty support")
    m = min(c, support)
    picked = _kernels.draw_without_replacement(topk.probs, rng.random(m))
    return [int(topk.ids[j]) for j in picked]


@dataclass
class Generation:
    """One decoded response. ``trace`` records every accept/backtrack as
    ``(kind, position, token, margin)`` where kind is one of ``init``,
    ``eos``, ``sim``, ``forced`` or ``backtrack``."""

    tokens: list
    backtracks_used: int = 0
    trace: list = field(default_factory=list)


def _ended(y, x_len, eos_id):
    return len(y) > x_len and y[-1] == eos_id


def decode_top_k(lm, x, config=None, rng=None):
    config = config or DecoderConfig()
    if len(x) == 0:
        raise ValueError("input sequence is empty")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    y = list(x)
    x_len = len(y)
    eos = lm.eos_id
    while len(y) - x_len < config.max_steps and not _ended(y, x_len, eos):
        topk = top_k_rescale(lm.next_distribution(y), config.k)
        y.append(sample_candidates(topk, 1, rng)[0])
    return Generation(y[x_len:])


def _embedding_rows(lm, embeddings):
    vocab = getattr(lm, "vocab", None)
    if vocab is not None and embeddings is not None:
        return embeddings.rows_for(vocab.tokens)
    return None


def decode_salien_sim(lm, x, profile, embeddings, config=None, rng=None, emb_rows=None):
    """Constrained top-k sampling.

    At each step ``c`` candidates are drawn from the top-k distribution.
    Once ``r - 1`` tokens have been generated, a candidate is kept only if
    the averaged embedding of the last ``r - 1`` generated tokens plus the
    candidate is no more than ``gamma_sim`` closer (max cosine) to the
    attribute-a n-grams than to the attribute-b ones. When every candidate
    fails, the last generated token is removed; after ``backtrack_limit``
    removals the test is switched off. ``[EOS]`` is never rejected.
    """
    config = config or DecoderConfig()
    if len(x) == 0:
        raise ValueError("input sequence is empty")
    if profile.dim != embeddings.dim:
        raise ValueError(f"profile dim {profile.dim} != embedding dim {embeddings.dim}")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if emb_rows is None:
        emb_rows = _embedding_rows(lm, embeddings)
    vectors = embeddings.vectors
    unit_a, unit_b = profile.unit_a, profile.unit_b
    max_cos = _kernels.max_cosine_rows
    vacuous = len(unit_a.rows) == 0 and len(unit_b.rows) == 0 and config.gamma_sim >= 0

    y = list(x)
    x_len = len(y)
    eos = lm.eos_id
    window = config.r - 1
    backtracks = 0
    trace = []
    while len(y) - x_len < config.max_steps and not _ended(y, x_len, eos):
        topk = top_k_rescale(lm.next_distribution(y), config.k)
        cands = sample_candidates(topk, config.c, rng)
        generated = len(y) - x_len
        accepted = False
        for cand in cands:
            if generated < window or backtracks >= config.backtrack_limit:
                trace.append(("init", generated, cand, None))
            elif cand == eos:
                trace.append(("eos", generated, cand, None))
            elif vacuous:
                trace.append(("sim", generated, cand, 0.0))
            else:
                gram = y[len(y) - window:] + [cand]
                if emb_rows is not None:
                    gram = emb_rows[gram]
                q = vectors[gram].mean(axis=0)
                margin = max_cos(q, unit_a.rows, unit_a.ok) - max_cos(q, unit_b.rows, unit_b.ok)
                if not margin <= config.gamma_sim:
                    continue
                trace.append(("sim", generated, cand, margin))
            y.append(cand)
            accepted = True
            break
        if accepted:
            continue
        if generated == 0:
            trace.append(("forced", 0, cands[0], None))
            y.append(cands[0])
        else:
            trace.append(("backtrack", generated - 1, y.pop(), None))
            backtracks += 1
    return Generation(y[x_len:], backtracks, trace)


def decode(lm, x, mode="topk", profile=None, embeddings=None, config=None, rng=None, emb_rows=None):
    if mode == "topk":
        return decode_top_k(lm, x, config, rng)
    if mode == "saliensim":
        if profile is None or embeddings is None:
            raise ValueError("saliensim decoding needs a profile and embeddings")
        return decode_salien_sim(lm, x, profile, embeddings, config, rng, emb_rows)
    raise ValueError(f"unknown decoding mode {mode!r}")
