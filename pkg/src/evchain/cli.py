"""Command-line pipeline: ingest, gen-synth, train, screen, retrieve, answer,
eval.  Stage artifacts are content-addressed by a hash of the corpus digest
plus the relevant config block, so models trained under one setup are never
silently reused under another.

Exit codes: 0 success, 1 usage or data error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import answerer, corpus as corpus_mod, metrics
from .config import RunConfig, config_hash, load_run_config
from .corpus import Corpus, CorpusError, ingest
from .refiner import ChainRefiner
from .screener import (DualEncoderScreener, read_screens_jsonl, recall_at_k,
                       screen_only_select, screen_to_record)
from .synth import SynthConfig, gen_synthetic, split_instances


def _corpus_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:12]


def _screener_hash(cfg: RunConfig, digest: str) -> str:
    return config_hash(digest, cfg.screener_train,
                       [cfg.hash_dim, list(cfg.ngram_orders), cfg.embed_dim])


def _refiner_hash(cfg: RunConfig, digest: str) -> str:
    return config_hash(digest, cfg.refiner_train, _screener_hash(cfg, digest),
                       [cfg.top_k, cfg.hidden_dim])


class _Paths:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.digest = _corpus_digest(cfg.corpus_path)
        os.makedirs(cfg.model_dir, exist_ok=True)
        os.makedirs(cfg.out_dir, exist_ok=True)
        sh = _screener_hash(cfg, self.digest)
        rh = _refiner_hash(cfg, self.digest)
        md, od = cfg.model_dir, cfg.out_dir
        self.q_model = os.path.join(md, f"screener-{sh}.q.evt")
        self.e_model = os.path.join(md, f"screener-{sh}.e.evt")
        self.screener_loss = os.path.join(md, f"screener-{sh}.loss.csv")
        self.scorer = os.path.join(md, f"refiner-{rh}.evt")
        self.refiner_loss = os.path.join(md, f"refiner-{rh}.loss.csv")
        self.screens = {split: os.path.join(od, f"screens-{split}-{sh}-k{cfg.top_k}.jsonl")
                        for split in ("train", "eval")}

    def retrieved(self, split: str, eism_only: bool) -> str:
        tag = "eism-only" if eism_only else "full"
        return os.path.join(self.cfg.out_dir, f"retrieved-{split}-{tag}.jsonl")

    def retrieval_report(self, split: str, eism_only: bool) -> str:
        tag = "eism-only" if eism_only else "full"
        return os.path.join(self.cfg.out_dir,
                            f"retrieval-report-{split}-{tag}.json")

    def answers(self, split: str) -> str:
        return os.path.join(self.cfg.out_dir, f"answers-{split}.jsonl")


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.screener_train.seed = args.seed
        cfg.refiner_train.seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    return cfg


def _split(cfg: RunConfig, which: str) -> Corpus:
    full = ingest(cfg.corpus_path)
    train, evalc = split_instances(full, cfg.train_fraction)
    if which == "train":
        return train
    if which == "eval":
        return evalc
    return full


def _make_screener(cfg: RunConfig) -> DualEncoderScreener:
    t = cfg.screener_train
    return DualEncoderScreener(
        hash_dim=cfg.hash_dim, ngram_orders=cfg.ngram_orders,
        embed_dim=cfg.embed_dim, batch_size=t.batch_size,
        learning_rate=t.learning_rate, epochs=t.epochs,
        temperature=t.temperature, weight_decay=t.weight_decay, seed=t.seed)


def _make_refiner(cfg: RunConfig) -> ChainRefiner:
    t = cfg.refiner_train
    return ChainRefiner(
        hash_dim=cfg.hash_dim, ngram_orders=cfg.ngram_orders,
        hidden_dim=cfg.hidden_dim, m_max=cfg.refine.m_max,
        score_floor=cfg.refine.score_floor, batch_size=t.batch_size,
        learning_rate=t.learning_rate, epochs=t.epochs,
        weight_decay=t.weight_decay, seed=t.seed)


def _require(path: str, guidance: str) -> None:
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path} not found; {guidance}")


def cmd_ingest(args) -> int:
    loaded = ingest(args.input)
    corpus_mod.export(loaded, args.output)
    counts = corpus_mod.modality_counts(loaded)
    print(f"sources: {sum(counts.values())} "
          f"(text {counts['text']} / image {counts['image']} / "
          f"table {counts['table']}), instances: {len(loaded.instances)}")
    return 0


def cmd_gen_synth(args) -> int:
    cfg = SynthConfig(n_instances=args.n, pool_size_per_q=args.pool_size,
                      bridge_fraction=args.bridge_fraction,
                      vocab_size=args.vocab_size,
                      seed=args.seed if args.seed is not None else 0,
                      distractor_overlap_rate=args.distractor_overlap_rate)
    generated = gen_synthetic(cfg)
    corpus_mod.export(generated, args.output)
    bridges = sum(1 for inst in generated.instances if len(inst.gold_ids) > 1)
    print(f"wrote {args.output}: {len(generated.instances)} instances "
          f"({bridges} bridge), {len(generated.sources)} sources")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    paths = _Paths(cfg)
    train = _split(cfg, "train")
    if args.stage == "screener":
        screener = _make_screener(cfg).fit(train)
        screener.save(paths.q_model, paths.e_model)
        screener.write_history(paths.screener_loss)
        print(f"screener model: {paths.q_model}, {paths.e_model}")
        print(f"loss history: {paths.screener_loss}")
    else:
        _require(paths.screens["train"],
                 "run `evchain screen --split train` first to build the "
                 "screen cache the refiner trains against")
        screens = read_screens_jsonl(paths.screens["train"])
        refiner = _make_refiner(cfg).fit(train, screens)
        refiner.save(paths.scorer)
        refiner.write_history(paths.refiner_loss)
        print(f"refiner model: {paths.scorer}")
        print(f"loss history: {paths.refiner_loss}")
    return 0


def _load_screener(cfg: RunConfig, paths: _Paths) -> DualEncoderScreener:
    _require(paths.q_model, "run `evchain train --stage screener` first")
    _require(paths.e_model, "run `evchain train --stage screener` first")
    return _make_screener(cfg).load_encoders(paths.q_model, paths.e_model)


def _screen_split(cfg: RunConfig, split_corpus: Corpus,
                  screener: DualEncoderScreener, jobs: int):
    def one(inst):
        return screener.screen(inst.question, split_corpus.pool_for(inst),
                               k=cfg.top_k, qid=inst.qid)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, split_corpus.instances))
    return [one(inst) for inst in split_corpus.instances]


def cmd_screen(args) -> int:
    cfg = _load_config(args)
    paths = _Paths(cfg)
    split_corpus = _split(cfg, args.split)
    screener = _load_screener(cfg, paths)
    results = _screen_split(cfg, split_corpus, screener, args.jobs)
    out = paths.screens[args.split]
    with open(out, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(json.dumps(screen_to_record(res), sort_keys=True) + "\n")
    by_qid = {inst.qid: inst for inst in split_corpus.instances}
    recalls = [recall_at_k(res, by_qid[res.qid].gold_ids) for res in results]
    mean_recall = sum(recalls) / len(recalls) if recalls else 0.0
    print(f"screened {len(results)} instances -> {out} "
          f"(mean recall@{cfg.top_k}: {mean_recall:.4f})")
    return 0


def cmd_retrieve(args) -> int:
    cfg = _load_config(args)
    paths = _Paths(cfg)
    split_corpus = _split(cfg, args.split)
    screener = _load_screener(cfg, paths)
    refiner = None
    if not args.eism_only:
        _require(paths.scorer, "run `evchain train --stage refiner` first")
        refiner = _make_refiner(cfg).load_scorer(paths.scorer)

    def one(inst):
        screened = screener.screen(inst.question, split_corpus.pool_for(inst),
                                   k=cfg.top_k, qid=inst.qid)
        if args.eism_only:
            return inst.qid, screen_only_select(screened)
        return inst.qid, refiner.refine(inst.question, screened, split_corpus)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(one, split_corpus.instances))
    else:
        rows = [one(inst) for inst in split_corpus.instances]

    out = paths.retrieved(args.split, args.eism_only)
    with open(out, "w", encoding="utf-8") as fh:
        for qid, ids in rows:
            fh.write(json.dumps({"qid": qid, "retrieved": ids},
                                sort_keys=True) + "\n")
    report = metrics.RetrievalReport()
    by_qid = {inst.qid: inst for inst in split_corpus.instances}
    for qid, ids in rows:
        report.add(qid, ids, by_qid[qid].gold_ids)
    report_path = paths.retrieval_report(args.split, args.eism_only)
    metrics.write_report(report_path, report)
    mean = report.mean()
    print(f"retrieved {len(rows)} instances -> {out}")
    print(f"report -> {report_path} (mean retrieval F1: {mean['f1']:.4f})")
    return 0


def cmd_answer(args) -> int:
    cfg = _load_config(args)
    paths = _Paths(cfg)
    split_corpus = _split(cfg, args.split)
    retrieved_path = paths.retrieved(args.split, args.eism_only)
    _require(retrieved_path, "run `evchain retrieve` first")
    retrieved_by_qid: dict[str, list[str]] = {}
    with open(retrieved_path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            retrieved_by_qid[rec["qid"]] = rec["retrieved"]

    def one(inst):
        ids = retrieved_by_qid.get(inst.qid, [])
        sources = [split_corpus.source(sid) for sid in ids]
        request = answerer.assemble_dialogue(inst.question, sources,
                                             qid=inst.qid)
        if cfg.answer_provider == "external":
            try:
                result = answerer.external_answer(
                    request, cfg.generator_endpoint,
                    timeout=cfg.generator_timeout)
                return answerer.result_record(result, ids)
            except answerer.GeneratorError as exc:
                failed = answerer.AnswerResult(inst.qid, "", "external")
                return answerer.result_record(failed, ids, error=str(exc))
        result = answerer.extractive_answer(request, sources)
        return answerer.result_record(result, ids)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            lines = list(pool.map(one, split_corpus.instances))
    else:
        lines = [one(inst) for inst in split_corpus.instances]
    out = paths.answers(args.split)
    with open(out, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    print(f"answered {len(lines)} instances -> {out}")
    return 0


def cmd_eval(args) -> int:
    loaded = ingest(args.corpus)
    by_qid = {inst.qid: inst for inst in loaded.instances}
    qa = metrics.QAReport()
    retrieval = metrics.RetrievalReport()
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            inst = by_qid.get(rec["qid"])
            if inst is None:
                raise CorpusError(f"prediction for unknown qid {rec['qid']!r}")
            qa.add(rec["qid"], rec.get("answer", ""), inst.answer)
            if "retrieved" in rec:
                retrieval.add(rec["qid"], rec["retrieved"], inst.gold_ids)
    combined = {"qa": qa.to_dict(), "retrieval": retrieval.to_dict()}
    metrics.write_report(args.out, _Plain(combined))
    print(f"eval report -> {args.out} "
          f"(mean EM: {qa.mean()['em']:.4f}, "
          f"mean token F1: {qa.mean()['token_f1']:.4f})")
    return 0


class _Plain:
    def __init__(self, data):
        self.data = data

    def to_dict(self):
        return self.data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evchain",
        description="Two-stage evidence retrieval and answering pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, split=False):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override every configured seed")
        p.add_argument("--out-dir", default=None, help="override out_dir")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers (deterministic output order)")
        if split:
            p.add_argument("--split", choices=["train", "eval", "all"],
                           default="eval")

    p = sub.add_parser("ingest", help="validate and normalize a corpus file")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen-synth", help="generate a synthetic planted corpus")
    p.add_argument("output")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pool-size", type=int, default=50)
    p.add_argument("--bridge-fraction", type=float, default=0.5)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--distractor-overlap-rate", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train and persist one pipeline stage")
    p.add_argument("--stage", choices=["screener", "refiner"], required=True)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("screen", help="write the screen cache for a split")
    common(p, split=True)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("retrieve", help="run screen + refine over a split")
    common(p, split=True)
    p.add_argument("--eism-only", action="store_true",
                   help="initial-screening-only retrieval (top-1 plus "
                        "runner-up within a 0.1 score gap), skipping the "
                        "iterative refiner")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("answer", help="answer questions over retrieved evidence")
    common(p, split=True)
    p.add_argument("--eism-only", action="store_true",
                   help="consume the eism-only retrieval output")
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("eval", help="score predictions against a corpus")
    p.add_argument("predictions")
    p.add_argument("corpus")
    p.add_argument("--out", default="eval-report.json")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, FileNotFoundError, ValueError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
