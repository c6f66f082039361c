import json

import pytest

from evchain.corpus import (STOP_ID, CorpusError, Modality, Source, export,
                            ingest, modality_counts, text_surface)


def write_lines(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


SOURCES = [
    {"kind": "source", "id": "t1", "modality": "text", "title": "Eiffel",
     "body": "built 1889"},
    {"kind": "source", "id": "i1", "modality": "image",
     "caption": "a red bridge", "object_tags": ["bridge"]},
    {"kind": "source", "id": "tb1", "modality": "table",
     "body": "year 1889 ; place paris"},
]
INSTANCE = {"kind": "instance", "qid": "q1", "question": "when built",
            "gold_ids": ["t1"], "distractor_ids": ["i1", "tb1"],
            "answer": "1889"}


class TestIngest:
    def test_image_field_mapping(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, SOURCES + [INSTANCE])
        corpus = ingest(str(path))
        img = corpus.sources["i1"]
        assert img.modality is Modality.IMAGE
        assert img.caption == "a red bridge"
        assert img.object_tags == ("bridge",)

    def test_image_without_caption_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [{"kind": "source", "id": "i2", "modality": "image"}])
        with pytest.raises(CorpusError, match="without caption"):
            ingest(str(path))

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [SOURCES[0], SOURCES[0]])
        with pytest.raises(CorpusError, match="duplicate id"):
            ingest(str(path))

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"kind": "source", "id": "a", "modality": "text"}\nnot json\n')
        with pytest.raises(CorpusError, match="line 2"):
            ingest(str(path))

    def test_dangling_reference_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        bad = dict(INSTANCE, gold_ids=["missing"])
        write_lines(path, SOURCES + [bad])
        with pytest.raises(CorpusError, match="unknown source"):
            ingest(str(path))

    def test_gold_distractor_overlap_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        bad = dict(INSTANCE, distractor_ids=["t1"])
        write_lines(path, SOURCES + [bad])
        with pytest.raises(CorpusError, match="both gold and distractor"):
            ingest(str(path))

    def test_reserved_stop_id_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [{"kind": "source", "id": STOP_ID,
                            "modality": "text", "body": "x"}])
        with pytest.raises(CorpusError, match="reserved"):
            ingest(str(path))

    def test_stop_source_always_present(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, SOURCES + [INSTANCE])
        corpus = ingest(str(path))
        assert corpus.stop_source.id == STOP_ID
        assert corpus.stop_source.modality is Modality.SENTINEL
        assert corpus.source(STOP_ID) is corpus.stop_source

    def test_unknown_fields_ignored(self, tmp_path):
        path = tmp_path / "c.jsonl"
        rec = dict(SOURCES[0], extra_field="ignored")
        write_lines(path, [rec])
        assert "t1" in ingest(str(path)).sources


class TestTextSurface:
    def test_image_caption_plus_tags(self):
        src = Source("i", Modality.IMAGE, caption="a red bridge",
                     object_tags=("bridge", "river"))
        assert text_surface(src) == "a red bridge bridge river"

    def test_text_title_and_body(self):
        src = Source("t", Modality.TEXT, title="Eiffel", body="built 1889")
        assert text_surface(src) == "Eiffel built 1889"

    def test_text_without_title(self):
        src = Source("t", Modality.TEXT, body="built 1889")
        assert text_surface(src) == "built 1889"

    def test_image_without_tags(self):
        src = Source("i", Modality.IMAGE, caption="a red bridge")
        assert text_surface(src) == "a red bridge"

    def test_sentinel_has_no_surface(self):
        from evchain.corpus import make_stop_source
        with pytest.raises(ValueError):
            text_surface(make_stop_source())

    def test_deterministic(self):
        src = Source("t", Modality.TABLE, body="a b ; c d")
        assert text_surface(src) == text_surface(src)


class TestRoundTrip:
    def test_ingest_export_round_trip(self, tmp_path):
        first = tmp_path / "a.jsonl"
        write_lines(first, SOURCES + [INSTANCE])
        corpus = ingest(str(first))
        out = tmp_path / "b.jsonl"
        export(corpus, str(out))
        again = ingest(str(out))
        assert again.sources == corpus.sources
        assert again.instances == corpus.instances
        # canonical form is a fixed point, byte for byte
        out2 = tmp_path / "c.jsonl"
        export(again, str(out2))
        assert out.read_bytes() == out2.read_bytes()

    def test_all_instance_ids_resolve(self, tmp_path, rng):
        from conftest import random_corpus
        corpus = random_corpus(rng, n_instances=10, multi_gold=True)
        path = tmp_path / "r.jsonl"
        export(corpus, str(path))
        loaded = ingest(str(path))
        for inst in loaded.instances:
            for sid in inst.gold_ids + inst.distractor_ids:
                assert loaded.source(sid).id == sid

    def test_modality_counts(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, SOURCES + [INSTANCE])
        counts = modality_counts(ingest(str(path)))
        assert counts == {"text": 1, "image": 1, "table": 1}
