"""Initial evidence screening: rank every candidate source against the
question by encoder cosine and keep the top-k.

Also exposes the screening-only selection heuristic (top-1, plus the
runner-up when the score gap is below a threshold) used by the
``--eism-only`` ablation path, and Recall@k.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .config import TrainConfig
from .contrastive import train_dual_encoder, write_history_csv
from .corpus import Corpus, Modality, Source, text_surface
from .encoder import TextEncoder, cosine
from .validation import check_fitted, check_pool, check_positive

DEFAULT_GAP = 0.1


@dataclass(frozen=True)
class ScoredSource:
    source_id: str
    score: float


@dataclass
class ScreenResult:
    qid: str
    ranked: list[ScoredSource]
    k: int

    def ids(self) -> list[str]:
        return [s.source_id for s in self.ranked]


def screen(q_encoder: TextEncoder, e_encoder: TextEncoder, question: str,
           pool: Sequence[Source], k: int, qid: str = "",
           evidence_embeddings: dict[str, np.ndarray] | None = None
           ) -> ScreenResult:
    """Top-k pool sources by cosine matching score.

    Deterministic: descending score with ties broken by ascending source id,
    so the result is invariant to pool input order.
    """
    check_positive(k, "k")
    check_pool(pool)
    q_vec = q_encoder.embed(question)
    scored = []
    for src in pool:
        if src.modality is Modality.SENTINEL:
            raise ValueError("sentinel must not be screened")
        if evidence_embeddings is not None and src.id in evidence_embeddings:
            e_vec = evidence_embeddings[src.id]
        else:
            e_vec = e_encoder.embed(text_surface(src))
            if evidence_embeddings is not None:
                evidence_embeddings[src.id] = e_vec
        scored.append(ScoredSource(src.id, cosine(q_vec, e_vec)))
    scored.sort(key=lambda s: (-s.score, s.source_id))
    return ScreenResult(qid=qid, ranked=scored[:k], k=k)


def screen_only_select(result: ScreenResult, gap: float = DEFAULT_GAP) -> list[str]:
    """Ablation path: top-1 id, plus rank-2 iff the score difference is
    below ``gap``."""
    if not result.ranked:
        raise ValueError("empty screen result")
    if gap <= 0:
        raise ValueError("gap must be positive")
    selected = [result.ranked[0].source_id]
    if len(result.ranked) > 1 and \
            result.ranked[0].score - result.ranked[1].score < gap:
        selected.append(result.ranked[1].source_id)
    return selected


def recall_at_k(result: ScreenResult, gold_ids: Iterable[str]) -> float:
    gold = set(gold_ids)
    if not gold:
        raise ValueError("gold_ids must be non-empty")
    hit = sum(1 for s in result.ranked if s.source_id in gold)
    return hit / len(gold)


def screen_to_record(result: ScreenResult) -> dict:
    return {"qid": result.qid, "k": result.k,
            "ranked": [{"id": s.source_id, "score": s.score}
                       for s in result.ranked]}


def screen_from_record(rec: dict) -> ScreenResult:
    return ScreenResult(
        qid=rec["qid"], k=rec["k"],
        ranked=[ScoredSource(r["id"], r["score"]) for r in rec["ranked"]])


def write_screens_jsonl(path: str, results: Sequence[ScreenResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(json.dumps(screen_to_record(res), sort_keys=True) + "\n")


def read_screens_jsonl(path: str) -> dict[str, ScreenResult]:
    screens = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                res = screen_from_record(json.loads(line))
                screens[res.qid] = res
    return screens


class DualEncoderScreener(BaseEstimator):
    """sklearn-style wrapper around the dual-encoder screening stage.

    ``fit`` runs the contrastive trainer over a corpus; the fitted encoders
    live in ``q_encoder_`` / ``e_encoder_`` and ``loss_history_`` holds
    (step, epoch, loss, learning_rate) rows.
    """

    def __init__(self, hash_dim: int = 4096, ngram_orders: tuple[int, ...] = (1, 2),
                 hash_seed: int = 0, embed_dim: int = 128, batch_size: int = 256,
                 learning_rate: float = 2e-4, epochs: int = 5,
                 temperature: float = 1.0, weight_decay: float = 0.01,
                 seed: int = 0):
        self.hash_dim = hash_dim
        self.ngram_orders = ngram_orders
        self.hash_seed = hash_seed
        self.embed_dim = embed_dim
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.temperature = temperature
        self.weight_decay = weight_decay
        self.seed = seed
        self.q_encoder_ = None
        self.e_encoder_ = None
        self.loss_history_ = None

    def _train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size,
                           learning_rate=self.learning_rate,
                           epochs=self.epochs, temperature=self.temperature,
                           weight_decay=self.weight_decay, seed=self.seed)

    def fit(self, corpus: Corpus, y=None) -> "DualEncoderScreener":
        q_enc, e_enc, history = train_dual_encoder(
            corpus, self._train_config(), hash_dim=self.hash_dim,
            ngram_orders=tuple(self.ngram_orders), hash_seed=self.hash_seed,
            embed_dim=self.embed_dim)
        self.q_encoder_ = q_enc
        self.e_encoder_ = e_enc
        self.loss_history_ = history
        return self

    def screen(self, question: str, pool: Sequence[Source], k: int = 16,
               qid: str = "", evidence_embeddings=None) -> ScreenResult:
        check_fitted(self, "q_encoder_")
        return screen(self.q_encoder_, self.e_encoder_, question, pool, k,
                      qid=qid, evidence_embeddings=evidence_embeddings)

    def save(self, q_path: str, e_path: str) -> None:
        check_fitted(self, "q_encoder_")
        self.q_encoder_.save(q_path)
        self.e_encoder_.save(e_path)

    def load_encoders(self, q_path: str, e_path: str) -> "DualEncoderScreener":
        self.q_encoder_ = TextEncoder.load(q_path)
        self.e_encoder_ = TextEncoder.load(e_path)
        self.loss_history_ = []
        return self

    def write_history(self, path: str) -> None:
        check_fitted(self, "q_encoder_")
        write_history_csv(path, self.loss_history_ or [])
