"""Experiment orchestration: train generators on topic subsets, decode with
each decoder, classify the outputs and tabulate attribute rates."""

import csv
import hashlib
import json
import logging
import os
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import List, Optional
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .classifier import TrainingConfig, load_classifier, predict, train_classifier
from .corpus import Corpus, build_vocab, decode, downsample_balance, encode, load_corpus, preprocess
from .decoding import DecoderConfig, decode as run_decoder
from .embedding import build_embeddings, build_profile, load_embeddings, load_profile
from .lm import train_lm
from .salience import SalienceConfig, count_ngrams, extract_salient

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
CSV_COLUMNS = ("topic", "generator", "decoder", "positives", "total", "rate")
ALL = "all"
MODES = ("topk", "saliensim")


class ValidationError(ValueError):
    """Bad experiment inputs, detected before any generation runs."""


@dataclass
class DecoderSpec:
    name: str
    mode: str = "topk"
    k: int = 40
    c: int = 10
    r: int = 5
    gamma_sim: float = 0.01
    backtrack_limit: int = 5
    max_steps: int = 30

    def config(self, seed):
        return DecoderConfig(self.k, self.c, self.r, self.gamma_sim, self.backtrack_limit, self.max_steps, seed)


@dataclass
class ExperimentSpec:
    corpus_paths: List[str]
    lm_subsets: Optional[List[str]] = None  # default: "all" plus every topic
    decoders: List[DecoderSpec] = field(default_factory=lambda: [DecoderSpec("topk", "topk"),
                                                                 DecoderSpec("saliensim", "saliensim")])
    classifier_path: Optional[str] = None
    posts_per_topic: int = 100
    seed: int = 0
    topics: Optional[List[str]] = None  # topics whose posts are answered; default: all
    min_count: int = 1
    lm_order: int = 3
    lm_discount: float = 0.75
    salience: dict = field(default_factory=lambda: SalienceConfig().to_json())
    embedding_dim: int = 64
    embedding_window: int = 5
    embeddings_path: Optional[str] = None
    profile_path: Optional[str] = None

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown experiment fields: {sorted(unknown)}")
        if "corpus_paths" not in obj:
            raise ValidationError("experiment config needs 'corpus_paths'")
        if "decoders" in obj:
            try:
                obj["decoders"] = [DecoderSpec(**d) for d in obj["decoders"]]
            except TypeError as exc:
                raise ValidationError(f"bad decoder entry: {exc}") from None
        return cls(**obj)

    def to_json(self):
        out = asdict(self)
        return out


@dataclass(frozen=True)
class RateCell:
    topic: str
    generator: str
    decoder: str
    positives: int
    total: int

    @property
    def rate(self):
        return Fraction(self.positives, self.total)


@dataclass
class RateReport:
    cells: List[RateCell]
    metadata: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False, compare=False)

    def lookup(self):
        return {(c.topic, c.generator, c.decoder): c for c in self.cells}

    def decoders(self):
        return list(OrderedDict.fromkeys(c.decoder for c in self.cells))

    def to_json(self):
        return {
            "version": REPORT_FORMAT_VERSION,
            "metadata": self.metadata,
            "cells": [{"topic": c.topic, "generator": c.generator, "decoder": c.decoder,
                       "positives": c.positives, "total": c.total, "rate": float(c.rate)}
                      for c in self.cells],
        }

    @classmethod
    def from_json(cls, doc):
        if doc.get("version") != REPORT_FORMAT_VERSION:
            raise ValueError(f"unsupported report format version {doc.get('version')!r}")
        cells = [RateCell(c["topic"], c["generator"], c["decoder"], int(c["positives"]), int(c["total"]))
                 for c in doc["cells"]]
        return cls(cells, doc.get("metadata", {}))


def cell_seed(master_seed, *key):
    digest = hashlib.sha256(json.dumps([master_seed, *key]).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _validate(spec):
    problems = []
    if not spec.corpus_paths:
        problems.append("no corpus paths given")
    for p in spec.corpus_paths:
        if not os.path.isfile(p):
            problems.append(f"corpus not found: {p}")
    for label, p in (("classifier", spec.classifier_path), ("embeddings", spec.embeddings_path),
                     ("profile", spec.profile_path)):
        if p is not None and not os.path.isfile(p):
            problems.append(f"{label} not found: {p}")
    if spec.posts_per_topic < 1:
        problems.append("posts_per_topic must be >= 1")
    if not spec.decoders:
        problems.append("no decoders configured")
    names = [d.name for d in spec.decoders]
    if len(set(names)) != len(names):
        problems.append("decoder names must be unique")
    for d in spec.decoders:
        if d.mode not in MODES:
            problems.append(f"decoder {d.name!r}: unknown mode {d.mode!r}")
        try:
            d.config(0)
        except ValueError as exc:
            problems.append(f"decoder {d.name!r}: {exc}")
    if (spec.embeddings_path is None) != (spec.profile_path is None):
        problems.append("embeddings_path and profile_path must be given together")
    if problems:
        raise ValidationError("; ".join(problems))


def _load_inputs(spec):
    pairs = []
    for path in spec.corpus_paths:
        pairs.extend(load_corpus(path).pairs)
    corpus = Corpus(tuple(pairs))
    topics = corpus.topics()
    subsets = spec.lm_subsets if spec.lm_subsets is not None else [ALL] + topics
    eval_topics = spec.topics if spec.topics is not None else topics
    problems = [f"LM subset {s!r} is not a corpus topic" for s in subsets if s != ALL and s not in topics]
    problems += [f"topic {t!r} has no posts in the corpus" for t in eval_topics if t not in topics]
    if any(p.label is None for p in corpus) and (spec.classifier_path is None or spec.profile_path is None):
        problems.append("corpus has unlabeled pairs; supply classifier_path, embeddings_path and profile_path")
    if problems:
        raise ValidationError("; ".join(problems))
    return corpus, subsets, eval_topics


def run_experiment(spec, out_dir=None):
    """Run every (topic, generator, decoder) cell.

    Each cell answers ``posts_per_topic`` posts drawn (with replacement)
    from that topic, using an RNG stream derived from the master seed and
    the cell key, so results do not depend on cell order. With ``out_dir``
    the report (``report.json``) and every labeled generation
    (``generations.jsonl``) are written there.
    """
    _validate(spec)
    corpus, subsets, eval_topics = _load_inputs(spec)
    vocab = build_vocab(corpus, spec.min_count)

    if spec.profile_path is not None:
        embeddings = load_embeddings(spec.embeddings_path)
        profile = load_profile(spec.profile_path)
    else:
        sal_cfg = SalienceConfig.from_json(spec.salience)
        salient = extract_salient(count_ngrams(corpus, config=sal_cfg))
        embeddings = build_embeddings(corpus, vocab, spec.embedding_window, spec.embedding_dim, seed=spec.seed)
        profile = build_profile(salient, embeddings)
    if profile.dim != embeddings.dim:
        raise ValidationError(f"profile dim {profile.dim} != embedding dim {embeddings.dim}")

    if spec.classifier_path is not None:
        clf = load_classifier(spec.classifier_path)
    else:
        clf = train_classifier(downsample_balance(corpus, spec.seed), TrainingConfig(seed=spec.seed))

    lms = OrderedDict()
    for subset in subsets:
        part = corpus if subset == ALL else corpus.filter(lambda p, s=subset: p.topic == s)
        lms[subset] = train_lm(part, vocab, spec.lm_order, spec.lm_discount)
    emb_rows = embeddings.rows_for(vocab.tokens)

    posts_by_topic = OrderedDict()
    for p in corpus:
        posts_by_topic.setdefault(p.topic, OrderedDict())[p.post] = None

    cells, records = [], []
    for topic in eval_topics:
        posts = list(posts_by_topic[topic])
        for generator, lm in lms.items():
            for dspec in spec.decoders:
                seed = cell_seed(spec.seed, topic, generator, dspec.name)
                rng = np.random.default_rng(seed)
                config = dspec.config(seed)
                config.check_vocab(lm.vocab_size)
                positives = 0
                for idx in rng.integers(len(posts), size=spec.posts_per_topic):
                    post = posts[idx]
                    x = encode(preprocess(post), vocab) + [vocab.eos_id]
                    gen = run_decoder(lm, x, dspec.mode, profile, embeddings, config, rng, emb_rows)
                    body = [t for t in gen.tokens if t != vocab.eos_id]
                    response = decode(body, vocab)
                    prob, flagged = predict(clf, preprocess(post), response)
                    positives += bool(flagged)
                    records.append(OrderedDict(
                        topic=topic, generator=generator, decoder=dspec.name, post=post,
                        response=response, probability=prob, predicted=bool(flagged),
                        backtracks_used=gen.backtracks_used))
                cells.append(RateCell(topic, generator, dspec.name, positives, spec.posts_per_topic))
                logger.info("cell %s/%s/%s: %d/%d flagged", topic, generator, dspec.name,
                            positives, spec.posts_per_topic)

    metadata = OrderedDict(
        toolkit_version=__version__,
        seed=spec.seed,
        posts_per_topic=spec.posts_per_topic,
        spec=spec.to_json(),
        vocab_size=len(vocab),
        salient_ngrams={"a": len(profile.ngrams_a), "b": len(profile.ngrams_b)},
    )
    report = RateReport(cells, metadata, records)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_report(report, os.path.join(out_dir, "report.json"))
        with open(os.path.join(out_dir, "generations.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False))
                fh.write("\n")
    return report


def rates_from_generations(path):
    """Recount every cell from a generations file (audit path)."""
    tally = OrderedDict()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            key = (rec["topic"], rec["generator"], rec["decoder"])
            pos, tot = tally.get(key, (0, 0))
            tally[key] = (pos + bool(rec["predicted"]), tot + 1)
    return tally


def compare_rates(report, baseline, treatment):
    """Relative reduction ``(base - treat) / base`` per (topic, generator);
    ``None`` where the baseline rate is zero."""
    present = set(report.decoders())
    for name in (baseline, treatment):
        if name not in present:
            raise KeyError(f"decoder {name!r} not in report (have {sorted(present)})")
    cells = report.lookup()
    out = OrderedDict()
    for c in report.cells:
        if c.decoder != baseline:
            continue
        treat = cells.get((c.topic, c.generator, treatment))
        if treat is None:
            continue
        base_rate = c.rate
        out[(c.topic, c.generator)] = None if base_rate == 0 else (base_rate - treat.rate) / base_rate
    return out


def save_report(report, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_json(), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        return RateReport.from_json(json.load(fh))


def _render_csv(report, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in report.cells:
            w.writerow([c.topic, c.generator, c.decoder, c.positives, c.total, repr(float(c.rate))])


def load_rates_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    cells = []
    for row in rows:
        cell = RateCell(row["topic"], row["generator"], row["decoder"], int(row["positives"]), int(row["total"]))
        if float(row["rate"]) != float(cell.rate):
            raise ValueError(f"rate column disagrees with counts in row {row}")
        cells.append(cell)
    return cells


_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def _render_svg(report, path):
    groups = OrderedDict()
    for c in report.cells:
        groups.setdefault(c.topic, []).append(c)
    series = list(OrderedDict.fromkeys((c.generator, c.decoder) for c in report.cells))
    bar_w, gap, top, height, left = 14, 24, 30, 200, 50
    group_w = bar_w * len(series) + gap
    width = left + group_w * max(len(groups), 1) + 20
    legend_h = 16 * len(series)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{top + height + 40 + legend_h}" '
        f'font-family="sans-serif" font-size="10">',
        f'<line x1="{left}" y1="{top + height}" x2="{width - 10}" y2="{top + height}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + height}" stroke="black"/>',
    ]
    for tick in range(0, 101, 25):
        y = top + height - height * tick / 100
        parts.append(f'<text x="{left - 4}" y="{y + 3:.1f}" text-anchor="end">{tick}%</text>')
    for gi, (topic, cells) in enumerate(groups.items()):
        x0 = left + gap / 2 + gi * group_w
        by_series = {(c.generator, c.decoder): c for c in cells}
        for si, key in enumerate(series):
            c = by_series.get(key)
            if c is None:
                continue
            h = height * float(c.rate)
            parts.append(
                f'<rect x="{x0 + si * bar_w:.1f}" y="{top + height - h:.2f}" width="{bar_w - 2}" '
                f'height="{h:.2f}" fill="{_PALETTE[si % len(_PALETTE)]}">'
                f'<title>{escape(f"{topic} {key[0]} {key[1]}")}: {c.positives}/{c.total}</title></rect>')
        parts.append(f'<text x="{x0 + bar_w * len(series) / 2:.1f}" y="{top + height + 14}" '
                     f'text-anchor="middle">{escape(topic)}</text>')
    for si, key in enumerate(series):
        y = top + height + 30 + 16 * si
        parts.append(f'<rect x="{left}" y="{y}" width="10" height="10" fill="{_PALETTE[si % len(_PALETTE)]}"/>')
        parts.append(f'<text x="{left + 14}" y="{y + 9}">{escape(key[0])} / {escape(key[1])}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def report_render(report, fmt, path):
    if fmt == "csv":
        _render_csv(report, path)
    elif fmt == "svg":
        _render_svg(report, path)
    elif fmt == "json":
        save_report(report, path)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
