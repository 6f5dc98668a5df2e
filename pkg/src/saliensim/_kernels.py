"""Numeric inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with the same signature. Set
``SALIENSIM_NUMBA=0`` before import to force the numpy path (useful for
debugging and for the benchmark in ``benchmarks/bench_kernels.py``).
"""

import os

import numpy as np

__all__ = [
    "USE_NUMBA",
    "cooccurrence",
    "max_cosine_rows",
    "interpolate_discounted",
    "draw_without_replacement",
    "sgd_epoch",
    "numpy_kernels",
    "numba_kernels",
]


def _flag_enabled():
    return os.environ.get("SALIENSIM_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and _flag_enabled()


# ---------------------------------------------------------------------------
# pure-python/numpy reference path


def _np_cooccurrence(ids, starts, vocab_size, window):
    mat = np.zeros((vocab_size, vocab_size), dtype=np.float64)
    bounds = np.append(starts, len(ids))
    for s in range(len(starts)):
        seq = ids[bounds[s]:bounds[s + 1]]
        n = len(seq)
        for offset in range(1, window + 1):
            if offset >= n:
                break
            left = seq[:-offset]
            right = seq[offset:]
            np.add.at(mat, (left, right), 1.0)
            np.add.at(mat, (right, left), 1.0)
    return mat


def _np_max_cosine_rows(query, unit_rows, row_ok):
    if unit_rows.shape[0] == 0:
        return 0.0
    qn = np.sqrt(np.dot(query, query))
    if qn == 0.0:
        return 0.0
    sims = unit_rows @ query / qn
    sims = np.where(row_ok, sims, 0.0)
    return float(sims.max())


def _np_interpolate_discounted(lower, ids, counts, total, discount):
    # (c - d)/C on observed continuations plus d*T/C of the lower-order mass
    out = lower * (discount * len(ids) / total)
    out[ids] += (counts - discount) / total
    return out


def _np_draw_without_replacement(probs, uniforms):
    p = probs.astype(np.float64).copy()
    picked = np.empty(len(uniforms), dtype=np.int64)
    for i in range(len(uniforms)):
        cum = np.cumsum(p)
        target = uniforms[i] * cum[-1]
        j = int(np.searchsorted(cum, target, side="right"))
        if j >= len(p):
            j = len(p) - 1
        while p[j] <= 0.0:
            j -= 1
        picked[i] = j
        p[j] = 0.0
    return picked


def _np_sgd_epoch(indptr, indices, values, labels, sample_weight, order, w, bias, lr, l2):
    # returns the updated bias; w is updated in place
    b = bias
    for k in range(len(order)):
        i = order[k]
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = values[lo:hi]
        z = b + np.dot(w[cols], vals)
        p = 1.0 / (1.0 + np.exp(-z)) if z >= 0 else np.exp(z) / (1.0 + np.exp(z))
        g = (p - labels[i]) * sample_weight[i]
        if l2 > 0.0:
            w *= 1.0 - lr * l2
        # subtract.at accumulates repeated columns like the loop version does
        np.subtract.at(w, cols, lr * g * vals)
        b -= lr * g
    return b


numpy_kernels = {
    "cooccurrence": _np_cooccurrence,
    "max_cosine_rows": _np_max_cosine_rows,
    "interpolate_discounted": _np_interpolate_discounted,
    "draw_without_replacement": _np_draw_without_replacement,
    "sgd_epoch": _np_sgd_epoch,
}


# ---------------------------------------------------------------------------
# numba path

numba_kernels = {}

if _HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def _nb_cooccurrence(ids, starts, vocab_size, window):
        mat = np.zeros((vocab_size, vocab_size), dtype=np.float64)
        n_seq = starts.shape[0]
        for s in range(n_seq):
            lo = starts[s]
            hi = starts[s + 1] if s + 1 < n_seq else ids.shape[0]
            for i in range(lo, hi):
                stop = min(hi, i + window + 1)
                for j in range(i + 1, stop):
                    mat[ids[i], ids[j]] += 1.0
                    mat[ids[j], ids[i]] += 1.0
        return mat

    @_jit
    def _nb_max_cosine_rows(query, unit_rows, row_ok):
        n = unit_rows.shape[0]
        if n == 0:
            return 0.0
        qn = 0.0
        for d in range(query.shape[0]):
            qn += query[d] * query[d]
        if qn == 0.0:
            return 0.0
        qn = np.sqrt(qn)
        best = -np.inf
        for i in range(n):
            if not row_ok[i]:
                s = 0.0
            else:
                s = 0.0
                for d in range(query.shape[0]):
                    s += unit_rows[i, d] * query[d]
                s /= qn
            if s > best:
                best = s
        return best

    @_jit
    def _nb_interpolate_discounted(lower, ids, counts, total, discount):
        scale = discount * ids.shape[0] / total
        out = lower * scale
        for t in range(ids.shape[0]):
            out[ids[t]] += (counts[t] - discount) / total
        return out

    @_jit
    def _nb_draw_without_replacement(probs, uniforms):
        p = probs.astype(np.float64).copy()
        m = uniforms.shape[0]
        picked = np.empty(m, dtype=np.int64)
        for i in range(m):
            total = 0.0
            for j in range(p.shape[0]):
                total += p[j]
            target = uniforms[i] * total
            acc = 0.0
            chosen = -1
            for j in range(p.shape[0]):
                if p[j] <= 0.0:
                    continue
                acc += p[j]
                chosen = j
                if acc > target:
                    break
            picked[i] = chosen
            p[chosen] = 0.0
        return picked

    @_jit
    def _nb_sgd_epoch(indptr, indices, values, labels, sample_weight, order, w, bias, lr, l2):
        b = bias
        decay = 1.0 - lr * l2
        for k in range(order.shape[0]):
            i = order[k]
            z = b
            for t in range(indptr[i], indptr[i + 1]):
                z += w[indices[t]] * values[t]
            if z >= 0:
                p = 1.0 / (1.0 + np.exp(-z))
            else:
                ez = np.exp(z)
                p = ez / (1.0 + ez)
            g = (p - labels[i]) * sample_weight[i]
            if l2 > 0.0:
                for j in range(w.shape[0]):
                    w[j] *= decay
            for t in range(indptr[i], indptr[i + 1]):
                w[indices[t]] -= lr * g * values[t]
            b -= lr * g
        return b

    numba_kernels = {
        "cooccurrence": _nb_cooccurrence,
        "max_cosine_rows": _nb_max_cosine_rows,
        "interpolate_discounted": _nb_interpolate_discounted,
        "draw_without_replacement": _nb_draw_without_replacement,
        "sgd_epoch": _nb_sgd_epoch,
    }

_active = numba_kernels if USE_NUMBA else numpy_kernels

cooccurrence = _active["cooccurrence"]
max_cosine_rows = _active["max_cosine_rows"]
interpolate_discounted = _active["interpolate_discounted"]
draw_without_replacement = _active["draw_without_replacement"]
sgd_epoch = _active["sgd_epoch"]
