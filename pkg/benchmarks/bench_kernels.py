"""Compare the numba kernels with their pure-numpy twins.

    python benchmarks/bench_kernels.py [--repeat N] [--no-end-to-end]

Kernel timings call both implementations directly on the same inputs and
check the outputs agree. The end-to-end section decodes with each path in a
fresh interpreter, since the path is chosen at import time from
SALIENSIM_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from saliensim import _kernels

E2E_SCRIPT = r"""
import time, numpy as np
from saliensim import USE_NUMBA
from saliensim.corpus import build_vocab, encode
from saliensim.decoding import DecoderConfig, decode_salien_sim, decode_top_k
from saliensim.embedding import build_embeddings, build_profile
from saliensim.lm import train_lm
from saliensim.salience import count_ngrams, extract_salient
from saliensim.synthetic import planted_corpus

corpus = planted_corpus(1000, seed=0)
vocab = build_vocab(corpus)
t0 = time.perf_counter(); emb = build_embeddings(corpus, vocab, 5, 64); t_emb = time.perf_counter() - t0
lm = train_lm(corpus, vocab)
prof = build_profile(extract_salient(count_ngrams(corpus)), emb)
rows = emb.rows_for(vocab.tokens)
posts = list(dict.fromkeys(p.post for p in corpus))
xs = [encode(p, vocab) + [vocab.eos_id] for p in posts]
cfg = DecoderConfig()
for s in range(20):
    decode_top_k(lm, xs[s], cfg, np.random.default_rng(s))
    decode_salien_sim(lm, xs[s], prof, emb, cfg, np.random.default_rng(s), rows)
n = {n}
t0 = time.perf_counter()
for s in range(n):
    decode_top_k(lm, xs[s % len(xs)], cfg, np.random.default_rng(s))
t_top = (time.perf_counter() - t0) / n
t0 = time.perf_counter()
for s in range(n):
    decode_salien_sim(lm, xs[s % len(xs)], prof, emb, cfg, np.random.default_rng(s), rows)
t_sal = (time.perf_counter() - t0) / n
print(USE_NUMBA, t_emb, t_top, t_sal)
"""


def kernel_inputs(rng):
    v = 400
    seqs = [rng.integers(0, v, size=rng.integers(5, 40)) for _ in range(2000)]
    ids = np.concatenate(seqs).astype(np.int64)
    starts = np.cumsum([0] + [len(s) for s in seqs[:-1]]).astype(np.int64)

    rows = rng.standard_normal((120, 64))
    rows /= np.linalg.norm(rows, axis=1)[:, None]
    query = rng.standard_normal(64)
    ok = np.ones(120, dtype=bool)

    lower = np.full(v, 1.0 / v)
    cont = np.sort(rng.choice(v, size=60, replace=False)).astype(np.int64)
    counts = rng.integers(1, 20, size=60).astype(np.float64)

    probs = rng.random(40)
    probs /= probs.sum()
    uniforms = rng.random(10)

    n, nf = 3000, 5000
    nnz = rng.integers(10, 40, size=n)
    indptr = np.concatenate([[0], np.cumsum(nnz)]).astype(np.int64)
    indices = rng.integers(0, nf, size=indptr[-1]).astype(np.int64)
    values = np.ones(indptr[-1])
    labels = (rng.random(n) < 0.5).astype(np.float64)
    sw = np.ones(n)
    order = rng.permutation(n).astype(np.int64)

    return {
        "cooccurrence": (ids, starts, v, 5),
        "max_cosine_rows": (query, rows, ok),
        "interpolate_discounted": (lower, cont, counts, float(counts.sum()), 0.75),
        "draw_without_replacement": (probs, uniforms),
        "sgd_epoch": (indptr, indices, values, labels, sw, order, np.zeros(nf), 0.0, 0.1, 1e-4),
    }


def _call(fn, args):
    # sgd_epoch updates its weight vector in place; give each call a fresh one
    args = tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)
    return fn(*args)


def bench_kernels(repeat):
    if not _kernels.numba_kernels:
        print("numba is not importable; only the numpy path exists")
        return
    inputs = kernel_inputs(np.random.default_rng(0))
    print(f"{'kernel':<26}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, args in inputs.items():
        np_fn, nb_fn = _kernels.numpy_kernels[name], _kernels.numba_kernels[name]
        a, b = _call(np_fn, args), _call(nb_fn, args)  # also compiles
        assert np.allclose(a, b, rtol=1e-9, atol=1e-12), name
        number = max(1, int(0.2 / max(timeit.timeit(lambda: _call(np_fn, args), number=1), 1e-6)))
        t_np = min(timeit.repeat(lambda: _call(np_fn, args), number=number, repeat=repeat)) / number
        t_nb = min(timeit.repeat(lambda: _call(nb_fn, args), number=number, repeat=repeat)) / number
        print(f"{name:<26}{t_np * 1e6:>10.1f}us{t_nb * 1e6:>10.1f}us{t_np / t_nb:>9.1f}x")


def bench_end_to_end(n):
    print(f"\nend to end, {n} generations per decoder (per-generation mean);"
          " embed build is a first call, so on the numba path it includes loading compiled kernels")
    print(f"{'path':<8}{'embed build':>14}{'top-k':>10}{'saliensim':>12}{'ratio':>8}")
    for flag in ("0", "1"):
        env = dict(os.environ, SALIENSIM_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E_SCRIPT.replace("{n}", str(n))], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        used, t_emb, t_top, t_sal = out[0] == "True", *map(float, out[1:])
        print(f"{'numba' if used else 'numpy':<8}{t_emb:>13.2f}s{t_top * 1e3:>8.2f}ms{t_sal * 1e3:>10.2f}ms"
              f"{t_sal / t_top:>7.2f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--generations", type=int, default=300)
    ap.add_argument("--no-end-to-end", action="store_true")
    args = ap.parse_args()
    bench_kernels(args.repeat)
    if not args.no_end_to_end:
        bench_end_to_end(args.generations)


if __name__ == "__main__":
    main()
