"""Data model and JSONL ingestion for questions, multimodal sources and labels.

A corpus couples a pool of candidate evidence sources (text snippets, image
captions+tags, serialized tables) with QA instances that name their gold
evidence, their distractors and a reference answer.  A reserved ``[STOP]``
pseudo-source is always present; the iterative retriever uses it as the
termination candidate.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

STOP_ID = "[STOP]"


class CorpusError(Exception):
    """Raised on malformed corpus files or invariant violations.

    ``line`` is the 1-based line number when the error is tied to a
    specific input line, else None.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Modality(enum.Enum):
    TEXT = "text"
    IMAGE = "image"
    TABLE = "table"
    SENTINEL = "sentinel"


@dataclass(frozen=True)
class Source:
    """One candidate evidence item with a canonical text surface form."""

    id: str
    modality: Modality
    title: str | None = None
    body: str = ""
    caption: str | None = None
    object_tags: tuple[str, ...] | None = None


@dataclass(frozen=True)
class QAInstance:
    qid: str
    question: str
    gold_ids: tuple[str, ...]
    distractor_ids: tuple[str, ...]
    answer: str


def make_stop_source() -> Source:
    return Source(id=STOP_ID, modality=Modality.SENTINEL)


@dataclass
class Corpus:
    """Immutable-after-ingestion collection of sources and QA instances."""

    sources: dict[str, Source] = field(default_factory=dict)
    instances: list[QAInstance] = field(default_factory=list)
    stop_source: Source = field(default_factory=make_stop_source)

    def source(self, source_id: str) -> Source:
        if source_id == STOP_ID:
            return self.stop_source
        return self.sources[source_id]

    def pool_for(self, instance: QAInstance) -> list[Source]:
        """Candidate sources of one instance: gold plus distractors, id order."""
        ids = sorted(set(instance.gold_ids) | set(instance.distractor_ids))
        return [self.sources[i] for i in ids]


def text_surface(source: Source) -> str:
    """Canonical text rendering of a non-sentinel source.

    Text and table sources render as ``title body`` (title omitted when
    absent); images render as ``caption tag1 tag2 ...``.  Single spaces,
    no trailing whitespace.
    """
    if source.modality is Modality.SENTINEL:
        raise ValueError("sentinel source has no surface form")
    if source.modality is Modality.IMAGE:
        parts = [source.caption or ""]
        if source.object_tags:
            parts.extend(source.object_tags)
    else:
        parts = []
        if source.title:
            parts.append(source.title)
        parts.append(source.body)
    return " ".join(p for p in parts if p).strip()


def _parse_source(rec: dict, line: int) -> Source:
    try:
        sid = rec["id"]
        modality = Modality(rec["modality"])
    except KeyError as exc:
        raise CorpusError(f"source record missing field {exc}", line)
    except ValueError:
        raise CorpusError(f"unknown modality {rec.get('modality')!r}", line)
    if not sid:
        raise CorpusError("empty source id", line)
    if modality is Modality.SENTINEL:
        raise CorpusError("sentinel modality is reserved", line)
    if modality is Modality.IMAGE and not rec.get("caption"):
        raise CorpusError(f"image source {sid!r} without caption", line)
    tags = rec.get("object_tags")
    return Source(
        id=sid,
        modality=modality,
        title=rec.get("title"),
        body=rec.get("body", ""),
        caption=rec.get("caption"),
        object_tags=tuple(tags) if tags is not None else None,
    )


def _parse_instance(rec: dict, line: int) -> QAInstance:
    try:
        inst = QAInstance(
            qid=rec["qid"],
            question=rec["question"],
            gold_ids=tuple(rec["gold_ids"]),
            distractor_ids=tuple(rec["distractor_ids"]),
            answer=rec["answer"],
        )
    except KeyError as exc:
        raise CorpusError(f"instance record missing field {exc}", line)
    if not inst.gold_ids:
        raise CorpusError(f"instance {inst.qid!r} has no gold ids", line)
    overlap = set(inst.gold_ids) & set(inst.distractor_ids)
    if overlap:
        raise CorpusError(
            f"instance {inst.qid!r}: ids {sorted(overlap)} are both gold and distractor",
            line,
        )
    return inst


def ingest(path: str) -> Corpus:
    """Load a JSONL corpus file, validating all invariants.

    One record per line; ``{"kind": "source", ...}`` or
    ``{"kind": "instance", ...}``.  Unknown fields are ignored.  Raises
    CorpusError (with the offending line number) on parse errors,
    duplicate ids, images without captions, or dangling id references.
    """
    corpus = Corpus()
    seen_qids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON ({exc.msg})", line_no)
            kind = rec.get("kind")
            if kind == "source":
                src = _parse_source(rec, line_no)
                if src.id == STOP_ID:
                    raise CorpusError(f"source id {STOP_ID!r} is reserved", line_no)
                if src.id in corpus.sources:
                    raise CorpusError(f"duplicate id {src.id!r}", line_no)
                corpus.sources[src.id] = src
            elif kind == "instance":
                inst = _parse_instance(rec, line_no)
                if inst.qid in seen_qids:
                    raise CorpusError(f"duplicate qid {inst.qid!r}", line_no)
                seen_qids.add(inst.qid)
                corpus.instances.append(inst)
            else:
                raise CorpusError(f"unknown record kind {kind!r}", line_no)
    for inst in corpus.instances:
        for sid in list(inst.gold_ids) + list(inst.distractor_ids):
            if sid not in corpus.sources:
                raise CorpusError(
                    f"instance {inst.qid!r} references unknown source {sid!r}"
                )
    return corpus


def _source_record(src: Source) -> dict:
    rec: dict = {"kind": "source", "id": src.id, "modality": src.modality.value}
    if src.title is not None:
        rec["title"] = src.title
    rec["body"] = src.body
    if src.caption is not None:
        rec["caption"] = src.caption
    if src.object_tags is not None:
        rec["object_tags"] = list(src.object_tags)
    return rec


def export(corpus: Corpus, path: str) -> None:
    """Write the corpus in the canonical JSONL form (sources, then instances).

    Deterministic: sources in insertion order, compact separators, UTF-8.
    ``ingest(export(c))`` reproduces an equal corpus.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for src in corpus.sources.values():
            fh.write(json.dumps(_source_record(src), ensure_ascii=False,
                                separators=(",", ":")) + "\n")
        for inst in corpus.instances:
            rec = {
                "kind": "instance",
                "qid": inst.qid,
                "question": inst.question,
                "gold_ids": list(inst.gold_ids),
                "distractor_ids": list(inst.distractor_ids),
                "answer": inst.answer,
            }
            fh.write(json.dumps(rec, ensure_ascii=False,
                                separators=(",", ":")) + "\n")


def modality_counts(corpus: Corpus) -> dict[str, int]:
    counts = {m.value: 0 for m in Modality if m is not Modality.SENTINEL}
    for src in corpus.sources.values():
        counts[src.modality.value] += 1
    return counts
