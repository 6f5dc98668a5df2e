"""Binary attribute classifier: L2-regularized logistic regression over
sparse n-gram features of the joined ``[CLS] post [SEP] response [SEP]``
sequence."""

import json
import math
from collections import Counter, OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .corpus import SEP, UNK, tokenize

CLASSIFIER_FORMAT_VERSION = 1
CLS = "[CLS]"


def _bigrams(tokens):
    return [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


def featurize(post, response, vocab=None, response_only=False):
    """Counts of field-prefixed features.

    ``p:`` / ``r:`` prefix unigrams and bigrams inside the post and the
    response; ``j:`` prefixes the joined-sequence bigrams that touch a
    ``[CLS]``/``[SEP]`` marker. Tokens outside ``vocab`` become ``[UNK]``.
    """
    post_toks = tokenize(post)
    resp_toks = tokenize(response)
    if vocab is not None:
        post_toks = [t if t in vocab else UNK for t in post_toks]
        resp_toks = [t if t in vocab else UNK for t in resp_toks]

    feats = Counter()
    feats.update("r:" + t for t in resp_toks)
    feats.update("r:" + b for b in _bigrams(resp_toks))
    if response_only:
        joined = [CLS, SEP] + resp_toks + [SEP]
    else:
        feats.update("p:" + t for t in post_toks)
        feats.update("p:" + b for b in _bigrams(post_toks))
        joined = [CLS] + post_toks + [SEP] + resp_toks + [SEP]
    feats.update("j:" + f"{a} {b}" for a, b in zip(joined, joined[1:]) if a in (CLS, SEP) or b in (CLS, SEP))
    return feats


@dataclass
class TrainingConfig:
    epochs: int = 20
    learning_rate: float = 0.1
    l2: float = 1e-4
    seed: int = 0
    threshold: float = 0.5
    response_only: bool = False
    dev_fraction: float = 0.0


@dataclass
class ClassifierModel:
    features: dict  # feature string -> column
    weights: np.ndarray
    bias: float = 0.0
    threshold: float = 0.5
    config: TrainingConfig = field(default_factory=TrainingConfig)
    history: list = field(default_factory=list)
    train_metrics: object = None
    dev_metrics: object = None

    def score(self, feats):
        z = self.bias
        for f, c in feats.items():
            j = self.features.get(f)
            if j is not None:
                z += self.weights[j] * c
        return _sigmoid(z)

    def to_json(self):
        return {
            "version": CLASSIFIER_FORMAT_VERSION,
            "threshold": self.threshold,
            "bias": self.bias,
            "config": {k: getattr(self.config, k) for k in TrainingConfig.__dataclass_fields__},
            "features": sorted(self.features, key=self.features.get),
            "weights": self.weights.tolist(),
            "history": self.history,
            "train_metrics": _metrics_json(self.train_metrics),
            "dev_metrics": _metrics_json(self.dev_metrics),
        }

    @classmethod
    def from_json(cls, doc):
        if doc.get("version") != CLASSIFIER_FORMAT_VERSION:
            raise ValueError(f"unsupported classifier format version {doc.get('version')!r}")
        feats = {f: i for i, f in enumerate(doc["features"])}
        return cls(feats, np.array(doc["weights"], dtype=np.float64), float(doc["bias"]),
                   float(doc["threshold"]), TrainingConfig(**doc.get("config", {})), list(doc.get("history", [])),
                   _metrics_from_json(doc.get("train_metrics")), _metrics_from_json(doc.get("dev_metrics")))


def _metrics_json(m):
    return None if m is None else {k: getattr(m, k) for k in Metrics.__dataclass_fields__}


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _log_loss(model, rows, labels, weights):
    total = 0.0
    for feats, y, w in zip(rows, labels, weights):
        p = min(max(model.score(feats), 1e-15), 1 - 1e-15)
        total -= w * (math.log(p) if y else math.log(1 - p))
    return total / weights.sum()


def train_classifier(corpus, config=None, vocab=None):
    """Fit by seeded SGD.

    Identical (features, label) samples are merged into one weighted sample,
    so duplicating a training set leaves the fitted model unchanged; the
    weight of a merged sample is its multiplicity over the mean multiplicity.
    """
    config = config or TrainingConfig()
    pairs = [p for p in corpus]
    if any(p.label is None for p in pairs):
        raise ValueError("train_classifier needs a fully labeled corpus")
    labels_all = [p.label.is_positive for p in pairs]
    if len(set(labels_all)) < 2:
        raise ValueError("training corpus contains a single class")

    rng = np.random.default_rng(config.seed)
    dev = []
    if config.dev_fraction > 0:
        order = rng.permutation(len(pairs))
        n_dev = int(round(config.dev_fraction * len(pairs)))
        dev_idx = set(order[:n_dev].tolist())
        dev = [p for i, p in enumerate(pairs) if i in dev_idx]
        pairs = [p for i, p in enumerate(pairs) if i not in dev_idx]

    merged = OrderedDict()
    for p in pairs:
        feats = featurize(p.post, p.response, vocab, config.response_only)
        key = (tuple(sorted(feats.items())), p.label.is_positive)
        if key in merged:
            merged[key][2] += 1
        else:
            merged[key] = [feats, p.label.is_positive, 1]
    samples = list(merged.values())

    feature_index = {}
    for feats, _, _ in samples:
        for f in sorted(feats):
            feature_index.setdefault(f, len(feature_index))

    indptr = [0]
    indices, values = [], []
    for feats, _, _ in samples:
        cols = sorted((feature_index[f], c) for f, c in feats.items())
        indices.extend(j for j, _ in cols)
        values.extend(float(c) for _, c in cols)
        indptr.append(len(indices))
    indptr = np.array(indptr, dtype=np.int64)
    indices = np.array(indices, dtype=np.int64)
    values = np.array(values, dtype=np.float64)
    labels = np.array([float(y) for _, y, _ in samples])
    mult = np.array([m for _, _, m in samples], dtype=np.float64)
    sample_weight = mult / mult.mean()

    model = ClassifierModel(feature_index, np.zeros(len(feature_index)), 0.0, config.threshold, config)
    rows = [s[0] for s in samples]
    history = [_log_loss(model, rows, labels, sample_weight)]
    w = model.weights
    b = 0.0
    for _ in range(config.epochs):
        order = rng.permutation(len(samples)).astype(np.int64)
        b = _kernels.sgd_epoch(indptr, indices, values, labels, sample_weight, order, w,
                               b, config.learning_rate, config.l2)
        model.bias = float(b)
        history.append(_log_loss(model, rows, labels, sample_weight))
    model.history = history
    model.train_metrics = evaluate(model, pairs, vocab)
    if dev:
        model.dev_metrics = evaluate(model, dev, vocab)
    return model


def predict(model, post, response, vocab=None):
    p = model.score(featurize(post, response, vocab, model.config.response_only))
    return p, p >= model.threshold


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0


def _metrics_from_json(obj):
    return None if obj is None else Metrics(**obj)


def binary_metrics(gold, predicted):
    gold = [bool(g) for g in gold]
    predicted = [bool(p) for p in predicted]
    if not gold:
        raise ValueError("cannot evaluate on an empty set")
    tp = sum(g and p for g, p in zip(gold, predicted))
    fp = sum(p and not g for g, p in zip(gold, predicted))
    fn = sum(g and not p for g, p in zip(gold, predicted))
    tn = len(gold) - tp - fp - fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics((tp + tn) / len(gold), precision, recall, f1, tp, fp, tn, fn)


def evaluate(model, corpus, vocab=None):
    pairs = list(corpus)
    if not pairs:
        raise ValueError("cannot evaluate on an empty corpus")
    if any(p.label is None for p in pairs):
        raise ValueError("evaluation corpus must be labeled")
    gold = [p.label.is_positive for p in pairs]
    pred = [predict(model, p.post, p.response, vocab)[1] for p in pairs]
    return binary_metrics(gold, pred)


def save_classifier(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_json(), fh, ensure_ascii=False)
        fh.write("\n")


def load_classifier(path):
    with open(path, encoding="utf-8") as fh:
        return ClassifierModel.from_json(json.load(fh))
