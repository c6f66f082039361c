"""Answer stage: retrieved evidence is serialized as multi-turn dialogue
history (one user turn per source, raw surface text, images by reference)
so a multi-turn generator sees the original evidence rather than pooled
features.  Ships an extractive baseline plus the HTTP client for an
external generator service.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Sequence

import requests

from .corpus import Modality, Source, text_surface
from .hashing import tokenize

_SENTENCE_RE = re.compile(r"[.!?]")
MAX_ANSWER_TOKENS = 32
NOTED = "Noted."


class GeneratorError(Exception):
    pass


@dataclass(frozen=True)
class DialogueTurn:
    role: str  # "user" | "assistant"
    text: str
    image_ref: str | None = None

    def __post_init__(self):
        if self.role not in ("user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "assistant" and self.image_ref is not None:
            raise ValueError("assistant turns carry no image_ref")


@dataclass
class AnswerRequest:
    qid: str
    question: str
    history: list[DialogueTurn] = field(default_factory=list)


@dataclass
class AnswerResult:
    qid: str
    answer: str
    provider: str  # "extractive" | "external"


def assemble_dialogue(question: str, retrieved: Sequence[Source],
                      qid: str = "") -> AnswerRequest:
    """Evidence as alternating dialogue history, question as the final turn.

    Each retrieved source becomes a user turn ``Evidence {i} ({modality}):
    {surface}`` (image sources keep an image_ref so the generator can fetch
    raw pixels) followed by a content-free assistant acknowledgement.
    """
    history: list[DialogueTurn] = []
    for i, src in enumerate(retrieved, start=1):
        ref = src.id if src.modality is Modality.IMAGE else None
        history.append(DialogueTurn(
            "user", f"Evidence {i} ({src.modality.value}): {text_surface(src)}",
            image_ref=ref))
        history.append(DialogueTurn("assistant", NOTED))
    history.append(DialogueTurn("user", f"Question: {question}"))
    return AnswerRequest(qid=qid, question=question, history=history)


def extractive_answer(request: AnswerRequest,
                      retrieved: Sequence[Source]) -> AnswerResult:
    """Baseline: return the evidence sentence with the highest question-token
    overlap, normalized by sentence length; ties go to the earliest evidence
    then the earliest sentence; trimmed to 32 whitespace tokens."""
    q_tokens = set(tokenize(request.question))
    best_score = None
    best_sentence = ""
    for src in retrieved:
        for sentence in _SENTENCE_RE.split(text_surface(src)):
            sentence = sentence.strip()
            if not sentence:
                continue
            s_tokens = tokenize(sentence)
            score = len(q_tokens & set(s_tokens)) / (1 + len(s_tokens))
            if best_score is None or score > best_score:
                best_score = score
                best_sentence = sentence
    words = best_sentence.split()
    answer = " ".join(words[:MAX_ANSWER_TOKENS])
    return AnswerResult(qid=request.qid, answer=answer, provider="extractive")


def request_payload(request: AnswerRequest) -> dict:
    history = []
    for turn in request.history:
        rec: dict = {"role": turn.role, "text": turn.text}
        if turn.image_ref is not None:
            rec["image_ref"] = turn.image_ref
        history.append(rec)
    return {"qid": request.qid, "question": request.question,
            "history": history}


def external_answer(request: AnswerRequest, endpoint: str,
                    timeout: float = 30.0) -> AnswerResult:
    """POST the dialogue to an external generator service.

    No automatic retry and no silent fallback: timeouts, non-2xx statuses
    and malformed payloads raise GeneratorError for the caller to handle.
    """
    try:
        resp = requests.post(endpoint, json=request_payload(request),
                             timeout=timeout)
    except (requests.Timeout, requests.ConnectionError) as exc:
        raise GeneratorError("generator timeout") from exc
    if not 200 <= resp.status_code < 300:
        raise GeneratorError(f"generator returned status {resp.status_code}")
    try:
        payload = resp.json()
        answer = payload["answer"]
    except (ValueError, KeyError, TypeError) as exc:
        raise GeneratorError("bad generator payload") from exc
    if not isinstance(answer, str):
        raise GeneratorError("bad generator payload")
    return AnswerResult(qid=request.qid, answer=answer, provider="external")


def result_record(result: AnswerResult, retrieved_ids: Sequence[str],
                  error: str | None = None) -> str:
    rec = {"qid": result.qid, "answer": result.answer,
           "provider": result.provider, "retrieved": list(retrieved_ids)}
    if error is not None:
        rec["error"] = error
    return json.dumps(rec, sort_keys=True)
