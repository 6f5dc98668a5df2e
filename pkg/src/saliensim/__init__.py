"""Salience-guided constrained decoding toolkit."""

__version__ = "0.1.0"

from ._kernels import USE_NUMBA
from .classifier import ClassifierModel, evaluate, featurize, predict, train_classifier
from .corpus import (
    AgreementReport,
    AttributeLabel,
    Corpus,
    CorpusFormatError,
    LabeledPair,
    Vocabulary,
    augment_pairs,
    build_vocab,
    decode,
    downsample_balance,
    encode,
    is_you_response,
    load_corpus,
    preprocess,
    save_corpus,
    tokenize,
    wawa_agreement,
)
from .decoding import DecoderConfig, decode_salien_sim, decode_top_k, sample_candidates, top_k_rescale
from .embedding import ConstraintProfile, EmbeddingTable, build_embeddings, build_profile, max_cosine, ngram_mean
from .harness import ExperimentSpec, RateReport, compare_rates, report_render, run_experiment
from .lm import BackoffNgramLM, LanguageModel, UniformLM, perplexity, train_lm
from .salience import SalienceConfig, SalienceTable, count_ngrams, extract_salient, salience_score
