"""Per-attribute n-gram counts and the smoothed count-ratio salience score."""

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Tuple

from .corpus import tokenize

SALIENCE_FORMAT_VERSION = 1

POSITIVE = "positive"
NEGATIVE = "negative"
BINARY_ATTRIBUTES = (POSITIVE, NEGATIVE)


def _exact(x):
    # 0.5 -> 1/2, not the binary expansion of the float
    return x if isinstance(x, Fraction) else Fraction(str(x))


@dataclass(frozen=True)
class SalienceConfig:
    n_values: Tuple[int, ...] = (3, 4, 5)
    smoothing: float = 0.5
    threshold: float = 5.5

    def __post_init__(self):
        ns = tuple(sorted(set(int(n) for n in self.n_values)))
        if not ns or ns[0] < 1:
            raise ValueError("n_values must be a non-empty set of positive orders")
        object.__setattr__(self, "n_values", ns)
        if _exact(self.smoothing) <= 0:
            raise ValueError("smoothing must be > 0")
        if _exact(self.threshold) < 1:
            raise ValueError("threshold must be >= 1")

    @property
    def smoothing_exact(self):
        return _exact(self.smoothing)

    @property
    def threshold_exact(self):
        return _exact(self.threshold)

    def to_json(self):
        return {"n_values": list(self.n_values), "lambda": self.smoothing, "gamma_sal": self.threshold}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["n_values"]), obj["lambda"], obj["gamma_sal"])


def binary_attribute(pair):
    if pair.label is None:
        raise ValueError(f"unlabeled pair in salience counting: {pair.response[:40]!r}")
    return POSITIVE if pair.label.is_positive else NEGATIVE


def iter_ngrams(tokens, n):
    for i in range(len(tokens) - n + 1):
        yield tuple(tokens[i:i + n])


@dataclass
class SalienceTable:
    """``counts[a][u]`` is the number of occurrences of n-gram ``u`` across
    responses with attribute ``a``."""

    attributes: Tuple[str, ...]
    counts: Dict[str, Counter]
    config: SalienceConfig = field(default_factory=SalienceConfig)
    salient_sets: Dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        self.attributes = tuple(self.attributes)
        if len(self.attributes) < 2:
            raise ValueError("salience needs at least two attributes")
        for a in self.attributes:
            self.counts.setdefault(a, Counter())

    def count(self, ngram, attribute):
        return self.counts[attribute][tuple(ngram)]

    def vocabulary(self):
        seen = set()
        for a in self.attributes:
            seen.update(self.counts[a])
        return seen


def count_ngrams(corpus, attribute_of=binary_attribute, config=None, attributes=BINARY_ATTRIBUTES):
    config = config or SalienceConfig()
    attributes = tuple(attributes)
    counts = {a: Counter() for a in attributes}
    for pair in corpus:
        attr = attribute_of(pair)
        if attr not in counts:
            raise ValueError(f"attribute {attr!r} not in {attributes}")
        tokens = tokenize(pair.response)
        bucket = counts[attr]
        for n in config.n_values:
            bucket.update(iter_ngrams(tokens, n))
    return SalienceTable(attributes, counts, config)


def salience_score(ngram, attribute, table, config=None):
    """Exact score as a Fraction: (own count + lambda) / (other counts + lambda)."""
    if attribute not in table.counts:
        raise KeyError(f"unknown attribute {attribute!r}")
    lam = (config or table.config).smoothing_exact
    ngram = tuple(ngram)
    own = table.counts[attribute][ngram]
    other = sum(table.counts[b][ngram] for b in table.attributes if b != attribute)
    return (own + lam) / (other + lam)


def extract_salient(table, config=None):
    config = config or table.config
    gamma = config.threshold_exact
    result = {}
    for a in table.attributes:
        scored = []
        # only n-grams seen under `a` can clear gamma >= 1
        for u in table.counts[a]:
            s = salience_score(u, a, table, config)
            if s >= gamma:
                scored.append((u, s))
        scored.sort(key=lambda us: (-us[1], us[0]))
        result[a] = scored
    table.salient_sets = result
    return result


def salience_to_json(table):
    if not table.salient_sets:
        extract_salient(table)
    return {
        "version": SALIENCE_FORMAT_VERSION,
        "config": table.config.to_json(),
        "attributes": list(table.attributes),
        "salient": {
            a: [[list(u), float(s)] for u, s in table.salient_sets[a]] for a in table.attributes
        },
    }


def save_salience(table, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(salience_to_json(table), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def load_salient_sets(path):
    """Read a salience document back as ``(config, attributes, salient_sets)``.

    Scores come back as floats; the counts are not stored.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != SALIENCE_FORMAT_VERSION:
        raise ValueError(f"unsupported salience format version {doc.get('version')!r}")
    config = SalienceConfig.from_json(doc["config"])
    salient = {a: [(tuple(u), s) for u, s in doc["salient"][a]] for a in doc["attributes"]}
    return config, tuple(doc["attributes"]), salient
