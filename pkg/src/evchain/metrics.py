"""Retrieval precision/recall/F1 and answer exact-match / token-F1 metrics."""
from __future__ import annotations

import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNC_TABLE = str.maketrans("", "", string.punctuation)


def retrieval_prf(retrieved: Iterable[str], gold: Iterable[str]
                  ) -> tuple[float, float, float]:
    retrieved = set(retrieved)
    gold = set(gold)
    if not gold:
        raise ValueError("gold set must be non-empty")
    hit = len(retrieved & gold)
    precision = hit / len(retrieved) if retrieved else 0.0
    recall = hit / len(gold)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def normalize_answer(text: str, drop_articles: bool = True) -> str:
    """Lowercase, strip punctuation, optionally drop articles, collapse
    whitespace (the usual extractive-QA normalization)."""
    text = text.lower().translate(_PUNC_TABLE)
    if drop_articles:
        text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def answer_em_f1(prediction: str, reference: str,
                 drop_articles: bool = True) -> tuple[int, float]:
    pred = normalize_answer(prediction, drop_articles)
    ref = normalize_answer(reference, drop_articles)
    if not pred and not ref:
        return 1, 1.0
    if not pred or not ref:
        return 0, 0.0
    em = int(pred == ref)
    pred_tokens = pred.split()
    ref_tokens = ref.split()
    same = sum((Counter(pred_tokens) & Counter(ref_tokens)).values())
    if same == 0:
        return em, 0.0
    precision = same / len(pred_tokens)
    recall = same / len(ref_tokens)
    return em, 2 * precision * recall / (precision + recall)


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


@dataclass
class RetrievalReport:
    per_qid: dict[str, dict[str, float]] = field(default_factory=dict)

    def add(self, qid: str, retrieved: Iterable[str], gold: Iterable[str]) -> None:
        p, r, f1 = retrieval_prf(retrieved, gold)
        self.per_qid[qid] = {"precision": p, "recall": r, "f1": f1}

    def mean(self) -> dict[str, float]:
        return {key: _mean([row[key] for row in self.per_qid.values()])
                for key in ("precision", "recall", "f1")}

    def to_dict(self) -> dict:
        return {"per_qid": self.per_qid, "mean": self.mean()}


@dataclass
class QAReport:
    per_qid: dict[str, dict[str, float]] = field(default_factory=dict)

    def add(self, qid: str, prediction: str, reference: str,
            drop_articles: bool = True) -> None:
        em, f1 = answer_em_f1(prediction, reference, drop_articles)
        self.per_qid[qid] = {"em": float(em), "token_f1": f1}

    def mean(self) -> dict[str, float]:
        return {key: _mean([row[key] for row in self.per_qid.values()])
                for key in ("em", "token_f1")}

    def to_dict(self) -> dict:
        return {"per_qid": self.per_qid, "mean": self.mean()}


def write_report(path: str, report) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict() if hasattr(report, "to_dict") else report,
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
