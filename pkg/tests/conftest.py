import numpy as np
import pytest

from evchain.corpus import Corpus, Modality, QAInstance, Source
from evchain.hashing import FeatureHasher


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_hasher():
    return FeatureHasher(dim=64, ngram_orders=(1, 2), seed=3)


@pytest.fixture
def tiny_corpus():
    """Two instances over five sources, all three modalities."""
    corpus = Corpus()
    corpus.sources["s1"] = Source("s1", Modality.TEXT, title="Eiffel",
                                  body="built 1889 in paris")
    corpus.sources["s2"] = Source("s2", Modality.IMAGE, body="",
                                  caption="a red bridge",
                                  object_tags=("bridge", "river"))
    corpus.sources["s3"] = Source("s3", Modality.TABLE,
                                  body="year 1889 ; place paris")
    corpus.sources["s4"] = Source("s4", Modality.TEXT, body="unrelated words here")
    corpus.sources["s5"] = Source("s5", Modality.TEXT, body="more filler content")
    corpus.instances.append(QAInstance(
        qid="q1", question="when was the eiffel tower built",
        gold_ids=("s1",), distractor_ids=("s4", "s5"), answer="1889"))
    corpus.instances.append(QAInstance(
        qid="q2", question="what crosses the river",
        gold_ids=("s2",), distractor_ids=("s4",), answer="a red bridge"))
    return corpus


def random_corpus(rng: np.random.Generator, n_instances: int = 6,
                  n_distractors: int = 3, multi_gold: bool = False) -> Corpus:
    """Small random corpus used by batch-law and property tests."""
    corpus = Corpus()
    words = [f"tok{i}" for i in range(50)]
    sid = 0
    for i in range(n_instances):
        n_gold = int(rng.integers(1, 3)) if multi_gold else 1
        gold, distract = [], []
        for _ in range(n_gold):
            body = " ".join(rng.choice(words, size=5))
            corpus.sources[f"s{sid}"] = Source(f"s{sid}", Modality.TEXT, body=body)
            gold.append(f"s{sid}")
            sid += 1
        for _ in range(int(rng.integers(0, n_distractors + 1))):
            body = " ".join(rng.choice(words, size=5))
            corpus.sources[f"s{sid}"] = Source(f"s{sid}", Modality.TEXT, body=body)
            distract.append(f"s{sid}")
            sid += 1
        corpus.instances.append(QAInstance(
            qid=f"q{i}", question=" ".join(rng.choice(words, size=4)),
            gold_ids=tuple(gold), distractor_ids=tuple(distract),
            answer=str(rng.integers(100))))
    return corpus
