"""Count-based token embeddings (PPMI + truncated SVD), averaged n-gram
vectors and the max-cosine similarity used by the constrained decoder."""

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .corpus import sequence_ids

EMBEDDING_FORMAT_VERSION = 1
PROFILE_FORMAT_VERSION = 1
SIDECAR_MAGIC = b"SSEMBF32"
_HEADER = struct.Struct("<8sII")


@dataclass
class EmbeddingTable:
    """Row ``i`` of ``vectors`` is the embedding of ``tokens[i]``."""

    tokens: tuple
    vectors: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.tokens):
            raise ValueError("vectors must be a (len(tokens), dim) matrix")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding contains NaN or infinite entries")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def dim(self):
        return self.vectors.shape[1]

    def id_of(self, token):
        return self.index.get(token, 0)

    def rows_for(self, tokens):
        """Map a token list (e.g. another model's vocabulary) onto row ids."""
        return np.array([self.id_of(t) for t in tokens], dtype=np.int64)


def _ppmi(counts):
    total = counts.sum()
    if total == 0:
        return counts
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts * total / np.outer(rows, cols))
    pmi[~np.isfinite(pmi)] = 0.0
    np.maximum(pmi, 0.0, out=pmi)
    return pmi


def _fix_signs(u):
    # SVD sign is arbitrary; pin it so the largest-magnitude entry is positive
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def build_embeddings(corpus, vocab, window=5, dim=64, seed=0):
    """PPMI over symmetric windowed co-occurrence, factorized by SVD.

    Rows are L2-normalized. Tokens that never co-occur with anything get a
    fixed pseudo-random unit vector so every row stays well defined.
    """
    v = len(vocab)
    if dim > v:
        raise ValueError(f"dim={dim} exceeds vocabulary size {v}")
    if window < 1:
        raise ValueError("window must be >= 1")
    seqs = [sequence_ids(p, vocab) for p in corpus]
    ids = np.array([t for s in seqs for t in s], dtype=np.int64)
    starts = np.cumsum([0] + [len(s) for s in seqs[:-1]]).astype(np.int64) if seqs else np.zeros(0, np.int64)
    counts = _kernels.cooccurrence(ids, starts, v, window)
    pmi = _ppmi(counts)

    if v <= 4000:
        u, s, _ = np.linalg.svd(pmi, hermitian=True)
        order = np.argsort(-s, kind="stable")[:dim]
        u, s = u[:, order], s[order]
    else:
        from scipy.sparse.linalg import eigsh

        v0 = np.random.default_rng(seed).standard_normal(v)
        s, u = eigsh(pmi, k=dim, which="LM", v0=v0)
        order = np.argsort(-np.abs(s), kind="stable")
        u, s = u[:, order], np.abs(s[order])
    u = _fix_signs(u)
    vecs = u * np.sqrt(s)

    norms = np.linalg.norm(vecs, axis=1)
    dead = norms < 1e-12
    if dead.any():
        rng = np.random.default_rng(seed)
        filler = rng.standard_normal((int(dead.sum()), dim))
        vecs[dead] = filler
        norms[dead] = np.linalg.norm(filler, axis=1)
    vecs = vecs / norms[:, None]
    provenance = {"method": "ppmi-svd", "window": window, "dim": dim, "seed": seed,
                  "pairs": len(corpus), "vocab_size": v}
    return EmbeddingTable(vocab.tokens, vecs, provenance)


def ngram_mean(ngram, table):
    """Mean of the token vectors (not re-normalized). Accepts ids or tokens."""
    if len(ngram) == 0:
        raise ValueError("empty n-gram")
    ids = [t if isinstance(t, (int, np.integer)) else table.id_of(t) for t in ngram]
    return table.vectors[ids].mean(axis=0)


class _UnitRows:
    __slots__ = ("rows", "ok")

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.size == 0:
            m = m.reshape(0, m.shape[1] if m.ndim == 2 else 0)
        norms = np.linalg.norm(m, axis=1) if len(m) else np.zeros(0)
        self.ok = norms > 0.0
        safe = np.where(self.ok, norms, 1.0)
        self.rows = np.ascontiguousarray(m / safe[:, None]) if len(m) else m


def max_cosine(query, matrix):
    """Largest cosine between ``query`` and any row; 0 for an empty matrix.
    Zero-norm query or rows contribute 0."""
    rows = matrix if isinstance(matrix, _UnitRows) else _UnitRows(matrix)
    q = np.ascontiguousarray(query, dtype=np.float64)
    if len(rows.rows) and rows.rows.shape[1] != q.shape[0]:
        raise ValueError(f"dimension mismatch: query {q.shape[0]} vs rows {rows.rows.shape[1]}")
    return float(_kernels.max_cosine_rows(q, rows.rows, rows.ok))


@dataclass
class ConstraintProfile:
    """Averaged embeddings of the salient n-grams for two attributes."""

    ngrams_a: list
    matrix_a: np.ndarray
    ngrams_b: list
    matrix_b: np.ndarray
    dim: int
    attribute_a: str = "positive"
    attribute_b: str = "negative"

    def __post_init__(self):
        self.matrix_a = np.asarray(self.matrix_a, dtype=np.float64).reshape(len(self.ngrams_a), self.dim)
        self.matrix_b = np.asarray(self.matrix_b, dtype=np.float64).reshape(len(self.ngrams_b), self.dim)
        self.unit_a = _UnitRows(self.matrix_a)
        self.unit_b = _UnitRows(self.matrix_b)

    @classmethod
    def empty(cls, dim):
        return cls([], np.zeros((0, dim)), [], np.zeros((0, dim)), dim)

    def similarity_margin(self, vector):
        """``sim_a - sim_b`` for one averaged r-gram vector."""
        return max_cosine(vector, self.unit_a) - max_cosine(vector, self.unit_b)

    def to_json(self):
        return {
            "version": PROFILE_FORMAT_VERSION,
            "dim": self.dim,
            "attribute_a": self.attribute_a,
            "attribute_b": self.attribute_b,
            "a": [{"ngram": list(g), "vector": v.tolist()} for g, v in zip(self.ngrams_a, self.matrix_a)],
            "b": [{"ngram": list(g), "vector": v.tolist()} for g, v in zip(self.ngrams_b, self.matrix_b)],
        }

    @classmethod
    def from_json(cls, doc):
        if doc.get("version") != PROFILE_FORMAT_VERSION:
            raise ValueError(f"unsupported profile format version {doc.get('version')!r}")
        dim = int(doc["dim"])
        a, b = doc["a"], doc["b"]
        return cls([tuple(e["ngram"]) for e in a], [e["vector"] for e in a],
                   [tuple(e["ngram"]) for e in b], [e["vector"] for e in b], dim,
                   doc.get("attribute_a", "positive"), doc.get("attribute_b", "negative"))


def build_profile(salient_sets, table, attribute_a="positive", attribute_b="negative"):
    """``salient_sets`` maps attribute -> [(ngram, score), ...] as returned by
    :func:`saliensim.salience.extract_salient`."""
    ga = [tuple(u) for u, _ in salient_sets.get(attribute_a, [])]
    gb = [tuple(u) for u, _ in salient_sets.get(attribute_b, [])]
    ma = np.array([ngram_mean(g, table) for g in ga]).reshape(len(ga), table.dim)
    mb = np.array([ngram_mean(g, table) for g in gb]).reshape(len(gb), table.dim)
    return ConstraintProfile(ga, ma, gb, mb, table.dim, attribute_a, attribute_b)


# ---------------------------------------------------------------------------
# serialization


def embeddings_to_json(table, sidecar=None):
    doc = {
        "version": EMBEDDING_FORMAT_VERSION,
        "dim": table.dim,
        "tokens": list(table.tokens),
        "provenance": table.provenance,
    }
    if sidecar is None:
        doc["vectors"] = table.vectors.tolist()
    else:
        doc["sidecar"] = os.path.basename(sidecar)
    return doc


def save_embeddings(table, path, sidecar=False):
    """Write JSON; with ``sidecar=True`` the vectors go to ``<path>.f32``
    (header: 8-byte magic, uint32 dim, uint32 rows, little-endian; then
    row-major float32 LE)."""
    side_path = path + ".f32" if sidecar else None
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(embeddings_to_json(table, side_path), fh, ensure_ascii=False)
        fh.write("\n")
    if side_path:
        with open(side_path, "wb") as fh:
            fh.write(_HEADER.pack(SIDECAR_MAGIC, table.dim, len(table.tokens)))
            fh.write(table.vectors.astype("<f4").tobytes())


def load_embeddings(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != EMBEDDING_FORMAT_VERSION:
        raise ValueError(f"unsupported embedding format version {doc.get('version')!r}")
    if "sidecar" in doc:
        side = os.path.join(os.path.dirname(os.path.abspath(path)), doc["sidecar"])
        with open(side, "rb") as fh:
            magic, dim, rows = _HEADER.unpack(fh.read(_HEADER.size))
            if magic != SIDECAR_MAGIC:
                raise ValueError(f"{side}: bad sidecar magic")
            vecs = np.frombuffer(fh.read(), dtype="<f4").astype(np.float64)
        if dim != doc["dim"] or rows != len(doc["tokens"]) or vecs.size != dim * rows:
            raise ValueError(f"{side}: sidecar shape does not match header/document")
        vectors = vecs.reshape(rows, dim)
    else:
        vectors = np.array(doc["vectors"], dtype=np.float64).reshape(len(doc["tokens"]), doc["dim"])
    return EmbeddingTable(tuple(doc["tokens"]), vectors, doc.get("provenance", {}))


def save_profile(profile, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(profile.to_json(), fh, ensure_ascii=False)
        fh.write("\n")


def load_profile(path):
    with open(path, encoding="utf-8") as fh:
        return ConstraintProfile.from_json(json.load(fh))
