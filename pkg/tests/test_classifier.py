import json
import threading
from collections import Counter

import numpy as np
import pytest

from saliensim.classifier import (
    ClassifierModel,
    Metrics,
    TrainingConfig,
    binary_metrics,
    evaluate,
    featurize,
    load_classifier,
    predict,
    save_classifier,
    train_classifier,
)
from saliensim.corpus import AttributeLabel, Corpus, LabeledPair
from saliensim.synthetic import PLANTED_POSITIVE, planted_corpus

NEG = AttributeLabel.negative()
POS = AttributeLabel.positive("stupidity")


@pytest.fixture(scope="module")
def trained(planted):
    return train_classifier(planted, TrainingConfig(seed=0))


def test_featurize_hand_enumeration():
    feats = featurize("a b c", "d e")
    assert feats == Counter({
        "p:a": 1, "p:b": 1, "p:c": 1, "p:a b": 1, "p:b c": 1,
        "r:d": 1, "r:e": 1, "r:d e": 1,
        "j:[CLS] a": 1, "j:c [SEP]": 1, "j:[SEP] d": 1, "j:e [SEP]": 1,
    })


def test_featurize_counts_repeats():
    feats = featurize("x", "y y y")
    assert feats["r:y"] == 3 and feats["r:y y"] == 2
    assert all(isinstance(c, int) and c > 0 for c in feats.values())


def test_featurize_properties():
    assert featurize("a b c", "d e") == featurize("a b c", "d e")
    assert featurize("a b c", "d e") != featurize("d e", "a b c")
    assert featurize("a b c  ", "d e \n") == featurize("a b c", "d e")


def test_featurize_response_only_and_vocab(planted_vocab):
    feats = featurize("what about zoom", "thanks for sharing", response_only=True)
    assert not any(f.startswith("p:") for f in feats)
    assert feats["j:[CLS] [SEP]"] == 1
    with_vocab = featurize("zzqx", "thanks", planted_vocab)
    assert with_vocab["p:[UNK]"] == 1


def test_separable_training_accuracy(trained):
    assert trained.train_metrics.accuracy >= 0.98


def test_planted_positive_is_flagged(trained):
    for phrase in PLANTED_POSITIVE:
        p, flag = predict(trained, "what about zoom meetings ?", f"well honestly i think {phrase} .")
        assert flag and p >= 0.5


def test_duplicate_invariance(planted):
    small = planted_corpus(200, seed=4)
    doubled = Corpus(tuple(small.pairs) * 2)
    a = train_classifier(small, TrainingConfig(seed=1))
    b = train_classifier(doubled, TrainingConfig(seed=1))
    held = planted_corpus(100, seed=99)
    for p in held:
        assert predict(a, p.post, p.response)[0] == pytest.approx(predict(b, p.post, p.response)[0], abs=1e-6)


def test_deterministic_bytes(planted, tmp_path):
    small = planted_corpus(200, seed=4)
    paths = []
    for i in range(2):
        model = train_classifier(small, TrainingConfig(seed=3, epochs=5))
        paths.append(tmp_path / f"m{i}.json")
        save_classifier(model, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_single_class_rejected():
    corpus = Corpus((LabeledPair("a", "b", "wfh", "human", NEG),) * 3)
    with pytest.raises(ValueError, match="single class"):
        train_classifier(corpus)


def test_unlabeled_rejected():
    corpus = Corpus((LabeledPair("a", "b"), LabeledPair("c", "d", label=POS)))
    with pytest.raises(ValueError):
        train_classifier(corpus)


def test_zero_weights_give_half():
    model = ClassifierModel({"r:x": 0}, np.zeros(1), 0.0)
    assert predict(model, "anything", "x y")[0] == 0.5
    assert predict(model, "anything", "x y")[1] is True


def test_predict_is_pure_and_thread_safe(trained, planted):
    pairs = list(planted)[:100]
    expected = [predict(trained, p.post, p.response) for p in pairs]
    out = [None] * 4

    def work(i):
        out[i] = [predict(trained, p.post, p.response) for p in pairs]

    threads = [threading.Thread(target=work, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(o == expected for o in out)


def test_loss_decreases(trained):
    assert trained.history[-1] < trained.history[0]
    assert len(trained.history) == trained.config.epochs + 1


def test_held_out_accuracy(trained):
    held = planted_corpus(200, seed=7)
    assert evaluate(trained, held).accuracy >= 0.95


def test_dev_split_reported(planted):
    model = train_classifier(planted, TrainingConfig(dev_fraction=0.2, epochs=5))
    assert model.dev_metrics is not None
    assert model.dev_metrics.tp + model.dev_metrics.fp + model.dev_metrics.tn + model.dev_metrics.fn == 200


# --- metrics ---------------------------------------------------------------


def test_confusion_matrix_hand_oracle():
    gold = [1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
    pred = [1, 1, 1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
    m = binary_metrics(gold, pred)
    # tp 5, fn 3, fp 2, tn 10
    assert (m.tp, m.fn, m.fp, m.tn) == (5, 3, 2, 10)
    assert m.accuracy == 15 / 20
    assert m.precision == 5 / 7
    assert m.recall == 5 / 8
    assert m.f1 == pytest.approx(2 * (5 / 7) * (5 / 8) / ((5 / 7) + (5 / 8)), abs=1e-15)


def test_perfect_and_constant_negative():
    gold = [True, False] * 10
    assert binary_metrics(gold, gold) == Metrics(1.0, 1.0, 1.0, 1.0, 10, 0, 10, 0)
    m = binary_metrics(gold, [False] * 20)
    assert m.accuracy == 0.5 and m.recall == 0.0


def test_constant_negative_model_on_balanced_corpus():
    model = ClassifierModel({}, np.zeros(0), -5.0)
    corpus = Corpus(tuple(LabeledPair(f"p{i}", f"r{i}", "wfh", "human", POS if i % 2 else NEG) for i in range(40)))
    m = evaluate(model, corpus)
    assert m.accuracy == 0.5 and m.recall == 0.0


def test_evaluate_empty():
    with pytest.raises(ValueError):
        evaluate(ClassifierModel({}, np.zeros(0)), Corpus(()))


def test_json_round_trip(trained, tmp_path, planted):
    path = tmp_path / "clf.json"
    save_classifier(trained, path)
    again = load_classifier(path)
    assert np.array_equal(again.weights, trained.weights)
    assert again.bias == trained.bias and again.features == trained.features
    assert again.train_metrics == trained.train_metrics
    for p in list(planted)[:50]:
        assert predict(again, p.post, p.response) == predict(trained, p.post, p.response)
    doc = json.loads(path.read_text())
    doc["version"] = 99
    with pytest.raises(ValueError):
        ClassifierModel.from_json(doc)
