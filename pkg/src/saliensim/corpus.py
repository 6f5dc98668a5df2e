"""Labeled (post, response) corpora: data model, JSONL I/O, preprocessing,
tokenization, dataset curation and annotator agreement."""

import json
import logging
import re
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

CATEGORIES = ("stupidity", "ignorance", "trolling_lying", "bias", "condescension", "other")
SOURCES = ("human", "model", "synthetic")

USERNAME = "@[username]"
URL = "[url]"
HASHTAG = "#[hashtag]"
PLACEHOLDERS = (USERNAME, URL, HASHTAG)

UNK = "[UNK]"
EOS = "[EOS]"
SEP = "[SEP]"
RESERVED = (UNK, EOS, SEP)

YOU_PHRASES = (
    "you are", "you were", "you should", "you would", "you will", "you have",
    "you can", "you could", "you don't", "you didn't", "you can't", "you're",
    "you'd", "you'll", "you've", "ur", "ya'll", "yall", "your", "yours",
    "yourself", "are you", "were you", "should you", "would you", "will you",
    "have you", "can you", "could you",
)


class CorpusFormatError(ValueError):
    """Raised for malformed corpus files or records."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class AttributeLabel:
    is_positive: bool
    categories: frozenset = frozenset()

    def __post_init__(self):
        cats = frozenset(self.categories)
        object.__setattr__(self, "categories", cats)
        unknown = cats - set(CATEGORIES)
        if unknown:
            raise CorpusFormatError(f"unknown category {sorted(unknown)[0]!r}")
        if bool(cats) != bool(self.is_positive):
            raise CorpusFormatError("categories must be non-empty exactly when is_positive is true")

    @classmethod
    def positive(cls, *categories):
        return cls(True, frozenset(categories or ("other",)))

    @classmethod
    def negative(cls):
        return cls(False, frozenset())

    def to_json(self):
        return {"is_positive": self.is_positive,
                "categories": [c for c in CATEGORIES if c in self.categories]}

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict) or "is_positive" not in obj:
            raise CorpusFormatError("label must be an object with 'is_positive'")
        cats = obj.get("categories") or []
        if not isinstance(cats, list) or not all(isinstance(c, str) for c in cats):
            raise CorpusFormatError("label categories must be a list of strings")
        return cls(bool(obj["is_positive"]), frozenset(cats))


@dataclass(frozen=True)
class LabeledPair:
    post: str
    response: str
    topic: str = ""
    source: str = "human"
    label: Optional[AttributeLabel] = None
    annotations: Optional[tuple] = None

    def __post_init__(self):
        if not self.post or not self.post.strip():
            raise CorpusFormatError("post must be non-empty")
        if not self.response or not self.response.strip():
            raise CorpusFormatError("response must be non-empty")
        if self.source not in SOURCES:
            raise CorpusFormatError(f"unknown source {self.source!r}")
        if self.annotations is not None:
            anns = tuple(self.annotations)
            if not anns:
                raise CorpusFormatError("annotations, when present, must be non-empty")
            object.__setattr__(self, "annotations", anns)

    def to_json(self):
        return OrderedDict(
            post=self.post,
            response=self.response,
            topic=self.topic,
            source=self.source,
            label=None if self.label is None else self.label.to_json(),
            annotations=None if self.annotations is None else [a.to_json() for a in self.annotations],
        )

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise CorpusFormatError("record must be a JSON object")
        for key in ("post", "response"):
            if key not in obj:
                raise CorpusFormatError(f"missing field {key!r}")
            if not isinstance(obj[key], str):
                raise CorpusFormatError(f"field {key!r} must be a string")
        label = obj.get("label")
        anns = obj.get("annotations")
        if anns is not None and not isinstance(anns, list):
            raise CorpusFormatError("annotations must be a list or null")
        return cls(
            post=obj["post"],
            response=obj["response"],
            topic=str(obj.get("topic", "")),
            source=str(obj.get("source", "human")),
            label=None if label is None else AttributeLabel.from_json(label),
            annotations=None if anns is None else tuple(AttributeLabel.from_json(a) for a in anns),
        )


@dataclass(frozen=True)
class Corpus:
    pairs: tuple = ()
    vocabulary: Optional["Vocabulary"] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def filter(self, predicate):
        return Corpus(tuple(p for p in self.pairs if predicate(p)), self.vocabulary)

    def topics(self):
        return sorted({p.topic for p in self.pairs})


# ---------------------------------------------------------------------------
# preprocessing

# a closing "]" counts as part of a word so that a freshly inserted
# placeholder shields what follows it exactly as the replaced word did
_URL_RE = re.compile(r"(?<![\w\]])(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"(?<![\w\]])@\w+")
_HASHTAG_RE = re.compile(r"(?<![\w\]])#\w+")


def preprocess(raw):
    """Replace URLs, @-mentions and #-hashtags with fixed placeholders."""
    text = _URL_RE.sub(URL, raw)
    text = _MENTION_RE.sub(USERNAME, text)
    return _HASHTAG_RE.sub(HASHTAG, text)


_YOU_RE = re.compile(
    r"(?<!\w)(?:" + "|".join(re.escape(p) for p in sorted(YOU_PHRASES, key=len, reverse=True)) + r")(?!\w)"
)


def is_you_response(response):
    return _YOU_RE.search(response.lower()) is not None


# ---------------------------------------------------------------------------
# JSONL I/O


def load_corpus(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", line=lineno) from None
            try:
                pairs.append(LabeledPair.from_json(obj))
            except CorpusFormatError as exc:
                raise CorpusFormatError(str(exc), line=lineno) from None
    return Corpus(tuple(pairs))


def dumps_pair(pair):
    return json.dumps(pair.to_json(), ensure_ascii=False)


def save_corpus(corpus, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus.pairs:
            fh.write(dumps_pair(pair))
            fh.write("\n")


# ---------------------------------------------------------------------------
# curation


def _require_label(pair):
    if pair.label is None:
        raise ValueError(f"unlabeled pair: {pair.post[:40]!r} / {pair.response[:40]!r}")
    return pair.label


def downsample_balance(corpus, seed):
    """Drop negatives uniformly at random so each (topic, source) cell has as
    many negatives as positives. Positives are never removed; cells that
    already have fewer negatives than positives are kept as-is and logged.
    Surviving pairs keep their original order."""
    rng = np.random.default_rng(seed)
    cells = OrderedDict()
    for idx, pair in enumerate(corpus.pairs):
        label = _require_label(pair)
        cell = cells.setdefault((pair.topic, pair.source), ([], []))
        cell[0 if label.is_positive else 1].append(idx)

    drop = set()
    for key, (pos, neg) in cells.items():
        if len(neg) < len(pos):
            logger.warning("cell %s: %d negatives < %d positives, left unbalanced", key, len(neg), len(pos))
            continue
        excess = len(neg) - len(pos)
        if excess:
            chosen = rng.choice(len(neg), size=excess, replace=False)
            drop.update(neg[i] for i in chosen)
    return Corpus(tuple(p for i, p in enumerate(corpus.pairs) if i not in drop), corpus.vocabulary)


def augment_pairs(corpus, targets, seed):
    """Add randomly re-paired (post, response) samples.

    ``targets`` maps ``(topic, is_positive)`` to the number of pairs that cell
    should hold after augmentation. Each new pair joins a random post of that
    topic with a random response carrying that label (both drawn with
    replacement, responses from any topic); it takes the post's topic and the
    response's label and source.
    """
    if not corpus.pairs:
        raise ValueError("cannot augment an empty corpus")
    rng = np.random.default_rng(seed)

    posts_by_topic = OrderedDict()
    responses_by_label = {True: OrderedDict(), False: OrderedDict()}
    have = Counter()
    for pair in corpus.pairs:
        posts_by_topic.setdefault(pair.topic, OrderedDict())[pair.post] = None
        if pair.label is not None:
            responses_by_label[pair.label.is_positive].setdefault((pair.response, pair.label, pair.source), None)
            have[(pair.topic, pair.label.is_positive)] += 1

    new_pairs = []
    for (topic, positive), wanted in sorted(targets.items(), key=lambda kv: (kv[0][0], not kv[0][1])):
        missing = int(wanted) - have[(topic, bool(positive))]
        if missing <= 0:
            continue
        posts = list(posts_by_topic.get(topic, ()))
        responses = list(responses_by_label[bool(positive)])
        if not posts:
            raise ValueError(f"cell ({topic!r}, {bool(positive)}): no posts for this topic")
        if not responses:
            raise ValueError(f"cell ({topic!r}, {bool(positive)}): no labeled responses with this label")
        post_idx = rng.integers(len(posts), size=missing)
        resp_idx = rng.integers(len(responses), size=missing)
        for pi, ri in zip(post_idx, resp_idx):
            response, label, source = responses[ri]
            new_pairs.append(LabeledPair(posts[pi], response, topic, source, label))
    return Corpus(corpus.pairs + tuple(new_pairs), corpus.vocabulary)


# ---------------------------------------------------------------------------
# annotator agreement


@dataclass(frozen=True)
class AgreementReport:
    precision: float
    recall: float
    f1: float


def _as_bool(vote):
    return vote.is_positive if isinstance(vote, AttributeLabel) else bool(vote)


def wawa_agreement(items):
    """Worker agreement with aggregate on the binary label.

    ``items`` holds either LabeledPair objects with ``annotations`` or plain
    sequences of votes (AttributeLabel or bool). The per-item majority is the
    reference (ties go negative); every individual vote is scored against it
    and counts are micro-averaged. Precision or recall with a zero
    denominator (nothing to get wrong) is defined as 1.
    """
    items = list(items)
    if not items:
        raise ValueError("wawa_agreement needs at least one annotated item")
    tp = fp = fn = 0
    for item in items:
        votes = item.annotations if isinstance(item, LabeledPair) else item
        if not votes:
            raise ValueError("every item needs at least one annotation")
        votes = [_as_bool(v) for v in votes]
        majority = sum(votes) * 2 > len(votes)
        for v in votes:
            if v and majority:
                tp += 1
            elif v:
                fp += 1
            elif majority:
                fn += 1
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return AgreementReport(precision, recall, f1)


# ---------------------------------------------------------------------------
# tokenization and vocabulary

_TERMINAL = ".,!?"


def tokenize(text):
    """Lowercase, split on whitespace and peel trailing ``.,!?`` off each word."""
    out = []
    for word in text.lower().split():
        tail = []
        while word and word[-1] in _TERMINAL:
            tail.append(word[-1])
            word = word[:-1]
        if word:
            out.append(word)
        out.extend(reversed(tail))
    return out


class Vocabulary:
    """Bidirectional token/id map. Ids 0-2 are ``[UNK]``, ``[EOS]``, ``[SEP]``."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokens = tuple(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    unk_id = 0
    eos_id = 1
    sep_id = 2

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __hash__(self):
        return hash(self.tokens)

    def __repr__(self):
        return f"Vocabulary({len(self)} tokens)"

    def id_of(self, token):
        return self.index.get(token, self.unk_id)

    def token_of(self, idx):
        if not 0 <= idx < len(self.tokens):
            raise IndexError(f"token id {idx} out of range for vocabulary of size {len(self.tokens)}")
        return self.tokens[idx]


def build_vocab(corpus, min_count=1):
    """Vocabulary over tokenized posts and responses; tokens with count
    below ``min_count`` are left out. Order: reserved, then by descending
    count, ties lexicographic."""
    counts = Counter()
    for pair in corpus:
        counts.update(tokenize(pair.post))
        counts.update(tokenize(pair.response))
    for tok in RESERVED:
        counts.pop(tok, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(RESERVED + tuple(kept))


def encode(text, vocab):
    tokens = tokenize(text) if isinstance(text, str) else list(text)
    return [vocab.id_of(t) for t in tokens]


def decode(ids, vocab):
    return " ".join(vocab.token_of(int(i)) for i in ids)


def sequence_ids(pair, vocab):
    """``post [EOS] response [EOS]`` as ids."""
    return encode(pair.post, vocab) + [vocab.eos_id] + encode(pair.response, vocab) + [vocab.eos_id]
