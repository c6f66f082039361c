"""Synthetic planted corpus for desk-scale end-to-end experiments.

Single-hop instances plant a lexical-overlap signal the screening stage can
learn (the question shares four body tokens with its gold source).  Bridge
instances plant a two-hop signal only the chain refiner can exploit: the
question overlaps gold-1 alone, while a minted link token ties gold-1 to
gold-2 (document frequency exactly 2) and the answer token occurs nowhere
but gold-2.  Distractors share at most one question token.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Modality, QAInstance, Source

_MODALITIES = (Modality.TEXT, Modality.IMAGE, Modality.TABLE)
_MIN_VOCAB = 32
GOLD_BODY_LEN = 8
QUESTION_OVERLAP = 4
QUESTION_FRESH = 2


@dataclass
class SynthConfig:
    n_instances: int
    pool_size_per_q: int = 50
    bridge_fraction: float = 0.5
    vocab_size: int = 2000
    seed: int = 0
    distractor_overlap_rate: float = 0.25

    def __post_init__(self):
        if self.pool_size_per_q < 3:
            raise ValueError("pool_size_per_q must be >= 3")
        if not 0.0 <= self.bridge_fraction <= 1.0:
            raise ValueError("bridge_fraction must lie in [0, 1]")
        if not 0.0 <= self.distractor_overlap_rate <= 1.0:
            raise ValueError("distractor_overlap_rate must lie in [0, 1]")
        if self.n_instances < 1:
            raise ValueError("n_instances must be >= 1")


def _sample_excluding(rng: np.random.Generator, vocab: list[str], n: int,
                      excluded: set[str]) -> list[str]:
    allowed = [w for w in vocab if w not in excluded]
    if len(allowed) < n:
        raise ValueError("vocab too small for disjoint sampling")
    picks = rng.choice(len(allowed), size=n, replace=False)
    return [allowed[int(i)] for i in picks]


def _make_source(sid: str, modality: Modality, tokens: list[str]) -> Source:
    text = " ".join(tokens)
    if modality is Modality.IMAGE:
        return Source(id=sid, modality=modality, body="", caption=text)
    return Source(id=sid, modality=modality, body=text)


def gen_synthetic(cfg: SynthConfig) -> Corpus:
    """Deterministic planted corpus; bit-identical for equal configs."""
    if cfg.vocab_size < _MIN_VOCAB:
        raise ValueError(
            f"vocab too small to guarantee token uniqueness: need >= {_MIN_VOCAB}")
    rng = np.random.default_rng(cfg.seed)
    vocab = [f"w{i:04d}" for i in range(cfg.vocab_size)]
    corpus = Corpus()
    modality_counter = 0

    for i in range(cfg.n_instances):
        qid = f"q{i:05d}"
        is_bridge = bool(rng.random() < cfg.bridge_fraction)

        gold_tokens: list[list[str]] = []
        if is_bridge:
            # The link is the three-token suffix of gold-1 (its last two
            # fillers plus a minted token with corpus-wide document frequency
            # exactly 2); gold-2 repeats it as a contiguous phrase, so the
            # chain signal survives in both unigram and bigram features.  The
            # question never covers the suffix, keeping its token overlap
            # with gold-2 empty.
            bridge_tok = f"link{i:05d}"
            answer_tok = f"fact{i:05d}"
            g1_fill = _sample_excluding(rng, vocab, 7, set())
            g1_body = g1_fill + [bridge_tok]
            run = int(rng.integers(0, 2))
            overlap = g1_body[run:run + QUESTION_OVERLAP]
            fresh = _sample_excluding(rng, vocab, QUESTION_FRESH, set(g1_body))
            question_tokens = overlap + fresh
            link = [g1_fill[-2], g1_fill[-1], bridge_tok]
            g2_fill = _sample_excluding(rng, vocab, 4,
                                        set(question_tokens) | set(link))
            g2_rest = [answer_tok] + g2_fill
            g2_rest = [g2_rest[int(j)] for j in rng.permutation(len(g2_rest))]
            cut = int(rng.integers(len(g2_rest) + 1))
            g2_body = g2_rest[:cut] + link + g2_rest[cut:]
            gold_tokens = [g1_body, g2_body]
            answer = answer_tok
        else:
            body = _sample_excluding(rng, vocab, GOLD_BODY_LEN, set())
            run = int(rng.integers(0, GOLD_BODY_LEN - QUESTION_OVERLAP + 1))
            overlap = body[run:run + QUESTION_OVERLAP]
            fresh = _sample_excluding(rng, vocab, QUESTION_FRESH, set(body))
            question_tokens = overlap + fresh
            rest = [t for t in body if t not in set(overlap)]
            answer = rest[int(rng.integers(len(rest)))]
            gold_tokens = [body]

        n_distractors = cfg.pool_size_per_q - len(gold_tokens)
        question_set = set(question_tokens)
        distractor_tokens: list[list[str]] = []
        for _ in range(n_distractors):
            tokens = _sample_excluding(rng, vocab, GOLD_BODY_LEN, question_set)
            if rng.random() < cfg.distractor_overlap_rate:
                pos = int(rng.integers(GOLD_BODY_LEN))
                tokens[pos] = question_tokens[int(rng.integers(len(question_tokens)))]
            distractor_tokens.append(tokens)

        # Random slot assignment so gold ids carry no positional tie-break bias.
        slots = rng.permutation(cfg.pool_size_per_q)
        all_tokens = gold_tokens + distractor_tokens
        ids = [f"s{i:05d}x{int(slots[j]):02d}" for j in range(len(all_tokens))]
        for sid, tokens in zip(ids, all_tokens):
            modality = _MODALITIES[modality_counter % len(_MODALITIES)]
            modality_counter += 1
            corpus.sources[sid] = _make_source(sid, modality, tokens)
        corpus.instances.append(QAInstance(
            qid=qid, question=" ".join(question_tokens),
            gold_ids=tuple(ids[:len(gold_tokens)]),
            distractor_ids=tuple(ids[len(gold_tokens):]),
            answer=answer))
    return corpus


def split_instances(corpus: Corpus, train_fraction: float
                    ) -> tuple[Corpus, Corpus]:
    """Index split into train/eval corpora; sources are shared."""
    n_train = int(round(len(corpus.instances) * train_fraction))
    train = Corpus(sources=corpus.sources,
                   instances=corpus.instances[:n_train],
                   stop_source=corpus.stop_source)
    evalc = Corpus(sources=corpus.sources,
                   instances=corpus.instances[n_train:],
                   stop_source=corpus.stop_source)
    return train, evalc


def is_bridge_instance(inst: QAInstance) -> bool:
    return len(inst.gold_ids) > 1
