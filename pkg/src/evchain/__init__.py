"""evchain: two-stage evidence retrieval and answering for multi-hop QA.

Stage one screens candidate sources with a contrastively trained dual
encoder; stage two grows an evidence chain by iteratively scoring
(question; chain; candidate) compositions until a stop sentinel wins.
Answers come from an extractive baseline or an external generator fed the
evidence as multi-turn dialogue history.
"""
from .answerer import (AnswerRequest, AnswerResult, DialogueTurn,
                       GeneratorError, assemble_dialogue, extractive_answer,
                       external_answer)
from .config import RefineConfig, RunConfig, TrainConfig, desk_train_config
from .contrastive import (ContrastivePair, build_contrastive_batch,
                          info_nce_loss, loss_gradients, train_dual_encoder)
from .corpus import (STOP_ID, Corpus, CorpusError, Modality, QAInstance,
                     Source, export, ingest, text_surface)
from .encoder import TextEncoder, cosine
from .hashing import FeatureHasher, tokenize
from .metrics import (QAReport, RetrievalReport, answer_em_f1, normalize_answer,
                      retrieval_prf)
from .oracles import oracle_greedy, oracle_topk
from .refiner import (ChainRefiner, PairScorer, compose_input, refine,
                      score_pair, selection_loss, train_refiner)
from .screener import (DualEncoderScreener, ScoredSource, ScreenResult,
                       recall_at_k, screen, screen_only_select)
from .synth import SynthConfig, gen_synthetic, split_instances

__version__ = "0.1.0"

__all__ = [
    "AnswerRequest", "AnswerResult", "ChainRefiner", "ContrastivePair",
    "Corpus", "CorpusError", "DialogueTurn", "DualEncoderScreener",
    "FeatureHasher", "GeneratorError", "Modality", "PairScorer", "QAInstance",
    "QAReport", "RefineConfig", "RetrievalReport", "RunConfig", "ScoredSource",
    "ScreenResult", "Source", "STOP_ID", "SynthConfig", "TextEncoder",
    "TrainConfig", "answer_em_f1", "assemble_dialogue",
    "build_contrastive_batch", "compose_input", "cosine", "desk_train_config",
    "export", "extractive_answer", "external_answer", "gen_synthetic",
    "info_nce_loss", "ingest", "loss_gradients", "normalize_answer",
    "oracle_greedy", "oracle_topk", "recall_at_k", "refine", "retrieval_prf",
    "score_pair", "screen", "screen_only_select", "selection_loss",
    "split_instances", "text_surface", "tokenize", "train_dual_encoder",
    "train_refiner",
]
