import math

import numpy as np
import pytest

from saliensim.corpus import encode
from saliensim.decoding import (
    DecoderConfig,
    TopK,
    decode,
    decode_salien_sim,
    decode_top_k,
    sample_candidates,
    top_k_rescale,
)
from saliensim.embedding import ConstraintProfile, EmbeddingTable, build_profile, max_cosine, ngram_mean

TOKENS = ("[UNK]", "[EOS]", "[SEP]", "post", "a", "b", "c", "d", "e", "f")
ID = {t: i for i, t in enumerate(TOKENS)}
X = [ID["post"], ID["[EOS]"]]


class ScriptedLM:
    """Walks "a b c d" then picks e (80%) or f (20%), then [EOS]."""

    vocab_size = len(TOKENS)
    eos_id = 1

    def next_distribution(self, prefix):
        gen = [TOKENS[i] for i in prefix[len(X):]]
        dist = np.zeros(self.vocab_size)
        script = ["a", "b", "c", "d"]
        if len(gen) < 4:
            dist[ID[script[len(gen)]]] = 1.0
        elif len(gen) == 4:
            dist[ID["e"]], dist[ID["f"]] = 0.8, 0.2
        else:
            dist[self.eos_id] = 1.0
        return dist


def orthonormal():
    return EmbeddingTable(TOKENS, np.eye(len(TOKENS)))


def scripted_profile(table):
    return build_profile({"positive": [(("a", "b", "c", "d", "e"), 99)],
                          "negative": [(("a", "b", "c", "d", "f"), 99)]}, table)


# --- top-k -----------------------------------------------------------------


def test_rescale_hand_example():
    topk = top_k_rescale([0.5, 0.3, 0.2], 2)
    assert topk.ids.tolist() == [0, 1]
    assert topk.probs.tolist() == pytest.approx([0.625, 0.375], abs=1e-12)


def test_rescale_full_and_single():
    dist = np.array([0.1, 0.4, 0.2, 0.3])
    full = top_k_rescale(dist, 4)
    assert full.as_dict() == pytest.approx({0: 0.1, 1: 0.4, 2: 0.2, 3: 0.3}, abs=1e-15)
    assert top_k_rescale(dist, 1).as_dict() == {1: 1.0}
    assert abs(top_k_rescale(dist, 3).probs.sum() - 1) < 1e-12


def test_rescale_ties_prefer_lower_id():
    assert top_k_rescale([0.25, 0.25, 0.25, 0.25], 2).ids.tolist() == [0, 1]
    assert top_k_rescale([0.1, 0.3, 0.3, 0.3], 2).ids.tolist() == [1, 2]
    big = np.full(1000, 1 / 1000)
    assert top_k_rescale(big, 40).ids.tolist() == list(range(40))


def test_rescale_bad_k():
    with pytest.raises(ValueError):
        top_k_rescale([1.0], 0)


def test_sample_forced(rng):
    assert sample_candidates(TopK(np.array([7]), np.array([1.0])), 1, rng) == [7]


def test_sample_full_support_is_permutation(rng):
    topk = top_k_rescale([0.4, 0.3, 0.2, 0.1], 4)
    for _ in range(50):
        assert sorted(sample_candidates(topk, 4, rng)) == [0, 1, 2, 3]
    # c beyond the support returns the support only
    sparse = TopK(np.array([0, 1, 2]), np.array([0.5, 0.5, 0.0]))
    assert sorted(sample_candidates(sparse, 3, rng)) == [0, 1]


def test_sample_empty_support(rng):
    with pytest.raises(ValueError):
        sample_candidates(TopK(np.array([0]), np.array([0.0])), 1, rng)


def test_sample_first_element_frequency(rng):
    topk = top_k_rescale([0.05, 0.45, 0.3, 0.2], 4)
    firsts = np.array([sample_candidates(topk, 3, rng)[0] for _ in range(10_000)])
    freq = np.bincount(firsts, minlength=4) / len(firsts)
    exact = np.zeros(4)
    exact[topk.ids] = topk.probs
    assert np.abs(freq - exact).sum() < 0.05


def test_sample_second_element_is_renormalized(rng):
    # P(second = 1 | first = 0) = .3 / (1 - .5) = .6
    topk = TopK(np.array([0, 1, 2]), np.array([0.5, 0.3, 0.2]))
    draws = [sample_candidates(topk, 2, rng) for _ in range(20_000)]
    given0 = [d[1] for d in draws if d[0] == 0]
    assert abs(np.mean(np.array(given0) == 1) - 0.6) < 0.03


def test_sample_deterministic():
    topk = top_k_rescale(np.linspace(1, 2, 50) / np.linspace(1, 2, 50).sum(), 40)
    a = sample_candidates(topk, 10, np.random.default_rng(3))
    b = sample_candidates(topk, 10, np.random.default_rng(3))
    assert a == b and len(set(a)) == 10


# --- config ----------------------------------------------------------------


@pytest.mark.parametrize("kw", [dict(c=0), dict(c=41), dict(r=1), dict(backtrack_limit=-1), dict(max_steps=0)])
def test_config_invariants(kw):
    with pytest.raises(ValueError):
        DecoderConfig(**kw)


def test_config_vocab_check_and_json():
    cfg = DecoderConfig(k=12, c=3)
    with pytest.raises(ValueError):
        cfg.check_vocab(10)
    assert DecoderConfig.from_json(cfg.to_json()) == cfg


# --- top-k decoding --------------------------------------------------------


def test_top_k_one_step(planted_lm, planted_vocab):
    x = encode("what about remote office ?", planted_vocab) + [planted_vocab.eos_id]
    out = decode_top_k(planted_lm, x, DecoderConfig(max_steps=1), np.random.default_rng(0))
    assert len(out.tokens) == 1


def test_top_k_peaked_lm():
    out = decode_top_k(ScriptedLM(), X, DecoderConfig(k=1, c=1), np.random.default_rng(0))
    assert [TOKENS[t] for t in out.tokens] == ["a", "b", "c", "d", "e", "[EOS]"]


def test_top_k_deterministic(planted_lm, planted_vocab):
    x = encode("what about vegan diet ?", planted_vocab) + [planted_vocab.eos_id]
    runs = [decode_top_k(planted_lm, x, DecoderConfig(seed=9)).tokens for _ in range(3)]
    assert runs[0] == runs[1] == runs[2]


def test_empty_input_rejected(planted_lm, planted_profile, planted_embeddings):
    with pytest.raises(ValueError):
        decode_top_k(planted_lm, [])
    with pytest.raises(ValueError):
        decode_salien_sim(planted_lm, [], planted_profile, planted_embeddings)


def test_dispatch_errors(planted_lm):
    with pytest.raises(ValueError):
        decode(planted_lm, [1], mode="beam")
    with pytest.raises(ValueError):
        decode(planted_lm, [1], mode="saliensim")


# --- constrained decoding --------------------------------------------------


def test_profile_dim_mismatch(planted_lm, planted_embeddings):
    with pytest.raises(ValueError, match="dim"):
        decode_salien_sim(planted_lm, [1], ConstraintProfile.empty(3), planted_embeddings)


def test_scripted_margins():
    table = orthonormal()
    prof = scripted_profile(table)
    # mean(abcde) vs mean(abcdf) share 4 of 5 orthonormal directions: cos = 0.8
    assert prof.similarity_margin(ngram_mean("a b c d e".split(), table)) == pytest.approx(0.2, abs=1e-12)
    assert prof.similarity_margin(ngram_mean("a b c d f".split(), table)) == pytest.approx(-0.2, abs=1e-12)


def test_planted_completion_is_suppressed():
    table = orthonormal()
    prof = scripted_profile(table)
    lm = ScriptedLM()
    cfg = DecoderConfig(k=2, c=2, gamma_sim=0.01)
    e = ID["e"]
    base = sum(e in decode_top_k(lm, X, cfg, np.random.default_rng(s)).tokens for s in range(1000))
    cons = sum(e in decode_salien_sim(lm, X, prof, table, cfg, np.random.default_rng(s)).tokens
               for s in range(1000))
    assert base > 700
    assert cons < base
    assert cons == 0


def test_single_candidate_forces_backtracks():
    # c=1: the only candidate e or f; e is rejected, so the decoder pops "d"
    table = orthonormal()
    prof = scripted_profile(table)
    cfg = DecoderConfig(k=2, c=1, gamma_sim=0.01, backtrack_limit=3)
    saw_backtrack = False
    for s in range(200):
        g = decode_salien_sim(ScriptedLM(), X, prof, table, cfg, np.random.default_rng(s))
        assert g.backtracks_used <= 3
        saw_backtrack |= g.backtracks_used > 0
        if g.backtracks_used == 3 and TOKENS[g.tokens[4]] == "e":
            # budget spent: the test is switched off
            assert any(kind == "init" and pos >= 4 for kind, pos, _, _ in g.trace)
    assert saw_backtrack


def test_empty_profile_takes_first_candidate(planted_lm, planted_vocab, planted_embeddings):
    prof = ConstraintProfile.empty(planted_embeddings.dim)
    x = encode("what about police march ?", planted_vocab) + [planted_vocab.eos_id]
    cfg = DecoderConfig()
    for seed in range(20):
        got = decode_salien_sim(planted_lm, x, prof, planted_embeddings, cfg, np.random.default_rng(seed))
        # replay: draw c candidates each step and keep the first
        rng = np.random.default_rng(seed)
        y = list(x)
        while len(y) - len(x) < cfg.max_steps and not (len(y) > len(x) and y[-1] == planted_vocab.eos_id):
            y.append(sample_candidates(top_k_rescale(planted_lm.next_distribution(y), cfg.k), cfg.c, rng)[0])
        assert got.tokens == y[len(x):]
        assert got.backtracks_used == 0


def test_infinite_gamma_is_vacuous(planted_lm, planted_vocab, planted_embeddings, planted_profile):
    x = encode("what about remote zoom ?", planted_vocab) + [planted_vocab.eos_id]
    cfg = DecoderConfig(gamma_sim=math.inf)
    empty = ConstraintProfile.empty(planted_embeddings.dim)
    for seed in range(20):
        a = decode_salien_sim(planted_lm, x, planted_profile, planted_embeddings, cfg, np.random.default_rng(seed))
        b = decode_salien_sim(planted_lm, x, empty, planted_embeddings, cfg, np.random.default_rng(seed))
        assert a.tokens == b.tokens
        assert a.backtracks_used == 0


def test_first_token_shared_with_top_k(planted_lm, planted_vocab, planted_embeddings, planted_profile):
    x = encode("what about survivors ?", planted_vocab) + [planted_vocab.eos_id]
    for seed in range(30):
        a = decode_top_k(planted_lm, x, DecoderConfig(), np.random.default_rng(seed))
        b = decode_salien_sim(planted_lm, x, planted_profile, planted_embeddings, DecoderConfig(),
                              np.random.default_rng(seed))
        assert a.tokens[0] == b.tokens[0]


def replay(trace, x):
    y = list(x)
    snapshots = []
    for kind, pos, tok, margin in trace:
        if kind == "backtrack":
            assert y[-1] == tok and len(y) - len(x) - 1 == pos
            y.pop()
            continue
        assert len(y) - len(x) == pos
        snapshots.append((kind, list(y), tok, margin))
        y.append(tok)
    return y[len(x):], snapshots


def test_trace_reverifies(planted_lm, planted_vocab, planted_embeddings, planted_profile):
    cfg = DecoderConfig(gamma_sim=-0.05, backtrack_limit=5)
    rows_a = planted_profile.matrix_a
    rows_b = planted_profile.matrix_b
    n_checked = 0
    for seed in range(60):
        x = encode("what about equality ?", planted_vocab) + [planted_vocab.eos_id]
        g = decode_salien_sim(planted_lm, x, planted_profile, planted_embeddings, cfg, np.random.default_rng(seed))
        tokens, snaps = replay(g.trace, x)
        assert tokens == g.tokens
        for kind, y, tok, margin in snaps:
            generated = len(y) - len(x)
            if kind == "sim":
                gram = [planted_vocab.token_of(t) for t in (y[len(y) - cfg.r + 1:] + [tok])]
                q = ngram_mean(gram, planted_embeddings)
                recomputed = max_cosine(q, rows_a) - max_cosine(q, rows_b)
                assert recomputed == pytest.approx(margin, abs=1e-12)
                assert recomputed <= cfg.gamma_sim + 1e-12
                assert generated >= cfg.r - 1
                n_checked += 1
            elif kind == "eos":
                assert tok == planted_vocab.eos_id
            elif kind == "forced":
                assert generated == 0
        assert sum(k == "backtrack" for k, *_ in g.trace) == g.backtracks_used
    assert n_checked > 50


def test_budget_and_length_fuzz(planted_lm, planted_vocab, planted_embeddings, planted_profile):
    # a negative gamma rejects nearly everything and drains the budget
    rng = np.random.default_rng(5)
    posts = ["what about " + " ".join(rng.choice(["plants", "meat", "zoom", "police", "consent"], 3)) + " ?"
             for _ in range(50)]
    limits_hit = 0
    for i in range(600):
        gamma = float(rng.choice([-1.0, -0.1, 0.0, 0.01, 0.2]))
        cfg = DecoderConfig(gamma_sim=gamma, max_steps=int(rng.integers(1, 31)))
        x = encode(posts[i % len(posts)], planted_vocab) + [planted_vocab.eos_id]
        g = decode_salien_sim(planted_lm, x, planted_profile, planted_embeddings, cfg, np.random.default_rng(i))
        assert g.backtracks_used <= 5
        assert 1 <= len(g.tokens) <= cfg.max_steps
        limits_hit += g.backtracks_used == 5
    assert limits_hit > 0


def test_embedding_rows_follow_vocab_tokens(planted_lm, planted_vocab, planted_embeddings, planted_profile):
    # a table with permuted rows must give the same decoding
    perm = np.random.default_rng(0).permutation(len(planted_embeddings.tokens))
    shuffled = EmbeddingTable(tuple(planted_embeddings.tokens[i] for i in perm), planted_embeddings.vectors[perm])
    x = encode("what about dairy ?", planted_vocab) + [planted_vocab.eos_id]
    cfg = DecoderConfig(gamma_sim=-0.02)
    for seed in range(10):
        a = decode_salien_sim(planted_lm, x, planted_profile, planted_embeddings, cfg, np.random.default_rng(seed))
        b = decode_salien_sim(planted_lm, x, planted_profile, shuffled, cfg, np.random.default_rng(seed))
        assert a.tokens == b.tokens
