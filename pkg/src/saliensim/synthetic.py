"""Synthetic planted-lexicon corpora.

Positive responses carry one of a handful of planted trigrams; negative
responses carry one of a disjoint set of benign trigrams. The rest of every
response is drawn from a shared filler vocabulary, so the class is decided
by the planted phrase alone.
"""

import numpy as np

from .corpus import AttributeLabel, Corpus, LabeledPair

PLANTED_POSITIVE = (
    "you pathetic clown",
    "utterly brainless troll",
    "such ignorant hypocrite",
    "absolute lying fraud",
    "clueless arrogant idiot",
)
PLANTED_NEGATIVE = (
    "thanks for sharing",
    "great point indeed",
    "love this idea",
    "really helpful perspective",
    "totally agree here",
)
OPENERS = (
    "well honestly i think",
    "from where we stand",
    "okay so basically it",
    "to be fair now",
    "you know what people",
    "in my own view",
    "look at it this",
    "as far as most",
)
FILLER = (
    "maybe really just still only very much many good new one day thing "
    "make more time here there when then because again later too"
).split()
TOPIC_WORDS = {
    "blm": "justice protest police community rights march equality voices".split(),
    "metoo": "survivors harassment believe women workplace stories consent movement".split(),
    "vegan": "plants meat diet animals cooking recipe dairy health".split(),
    "wfh": "remote office meetings commute laptop schedule coffee zoom".split(),
}
_CATS = ("stupidity", "ignorance", "trolling_lying", "bias", "condescension")


def planted_corpus(n_pairs=1000, positive_rate=0.3, seed=0, topics=None,
                   closer_len=(0, 3), plain_rate=0.5, source="synthetic"):
    """Build a labeled corpus of ``n_pairs`` (post, response) pairs.

    Each response is ``opener + planted trigram + closer``. Openers are
    fixed four-token phrases, so the planted phrase starts at the fifth
    response token. A ``plain_rate`` share of negatives carries no phrase at
    all, only filler.
    """
    rng = np.random.default_rng(seed)
    topics = list(topics or TOPIC_WORDS)
    pairs = []
    for _ in range(n_pairs):
        topic = topics[rng.integers(len(topics))]
        words = TOPIC_WORDS[topic]
        post_body = rng.choice(words, size=rng.integers(3, 6)).tolist()
        post = " ".join(["what", "about"] + post_body) + " ?"
        positive = rng.random() < positive_rate
        phrases = PLANTED_POSITIVE if positive else PLANTED_NEGATIVE
        phrase = phrases[rng.integers(len(phrases))]
        opener = [OPENERS[rng.integers(len(OPENERS))]]
        closer = rng.choice(FILLER, size=rng.integers(closer_len[0], closer_len[1] + 1)).tolist()
        middle = [] if not positive and rng.random() < plain_rate else [phrase]
        response = " ".join(opener + middle + closer) + " ."
        if positive:
            label = AttributeLabel(True, frozenset([_CATS[rng.integers(len(_CATS))]]))
        else:
            label = AttributeLabel(False)
        pairs.append(LabeledPair(post, response, topic, source, label))
    return Corpus(tuple(pairs))


def contains_planted(text, phrases=PLANTED_POSITIVE):
    padded = f" {text} "
    return any(f" {p} " in padded for p in phrases)
