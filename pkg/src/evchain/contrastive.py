"""Contrastive training of the dual-encoder screener.

Batches pair each sampled question with one of its gold sources; every
distractor enters the batch as its own query (a self pair), so interfering
evidence contributes in-batch negatives without needing annotated questions.
The loss is InfoNCE over the cosine similarity matrix: diagonal pairs are
positives, all other in-batch evidence are negatives.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Corpus, QAInstance, text_surface
from .encoder import TextEncoder
from .hashing import FeatureCache
from .optim import AdamW, TrainingDivergedError


@dataclass(frozen=True)
class ContrastivePair:
    query_text: str
    evidence_text: str
    kind: str  # "gold" | "self_negative"

    def __post_init__(self):
        if self.kind == "self_negative" and self.query_text != self.evidence_text:
            raise ValueError("self_negative pair must have query == evidence")


def build_contrastive_batch(instances: Sequence[QAInstance], corpus: Corpus,
                            rng: np.random.Generator,
                            batch_size: int) -> list[ContrastivePair]:
    """Sample ``batch_size`` distinct instances; emit one gold pair per
    instance plus, when the instance has distractors, one self pair built
    from a single sampled distractor."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if batch_size > len(instances):
        raise ValueError(
            f"insufficient instances: need {batch_size}, have {len(instances)}")
    chosen = rng.choice(len(instances), size=batch_size, replace=False)
    batch: list[ContrastivePair] = []
    for i in chosen:
        inst = instances[int(i)]
        gold_id = inst.gold_ids[int(rng.integers(len(inst.gold_ids)))]
        batch.append(ContrastivePair(
            inst.question, text_surface(corpus.source(gold_id)), "gold"))
        if inst.distractor_ids:
            d_id = inst.distractor_ids[int(rng.integers(len(inst.distractor_ids)))]
            d_surf = text_surface(corpus.source(d_id))
            batch.append(ContrastivePair(d_surf, d_surf, "self_negative"))
    return batch


# ---------------------------------------------------------------------------
# Loss and gradients over raw projection matrices.  Kept array-in/array-out so
# the finite-difference tests can drive them directly.
# ---------------------------------------------------------------------------

def _normalized_rows(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(raw, axis=1)
    safe = np.where(norms > 1e-12, norms, 1.0)
    unit = raw / safe[:, None]
    unit[norms <= 1e-12] = 0.0
    return unit, norms


def loss_from_similarity(sim: np.ndarray) -> tuple[float, np.ndarray]:
    """InfoNCE over a (possibly temperature-scaled) similarity matrix:
    -(1/B) sum_i log softmax_row_i(sim)[i], with log-sum-exp stabilization.
    Returns (loss, per-row log-sum-exp)."""
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1] or sim.shape[0] == 0:
        raise ValueError("similarity matrix must be square and non-empty")
    shift = sim.max(axis=1, keepdims=True)
    lse = np.log(np.exp(sim - shift).sum(axis=1)) + shift[:, 0]
    return float(np.mean(lse - np.diagonal(sim))), lse


def info_nce_parts(q_proj: np.ndarray, e_proj: np.ndarray,
                   q_feats: np.ndarray, e_feats: np.ndarray,
                   temperature: float):
    """Forward pass pieces shared by loss and gradient computation.

    ``q_feats``/``e_feats`` are dense (n, dim) feature matrices with row i
    holding the hashed features of pair i's query / evidence text.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = q_feats.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    a_raw = q_feats @ np.asarray(q_proj, dtype=np.float64)
    b_raw = e_feats @ np.asarray(e_proj, dtype=np.float64)
    a_unit, a_norm = _normalized_rows(a_raw)
    b_unit, b_norm = _normalized_rows(b_raw)
    sim = (a_unit @ b_unit.T) / temperature
    loss, lse = loss_from_similarity(sim)
    return loss, sim, (a_raw, a_unit, a_norm, b_raw, b_unit, b_norm, lse)


def info_nce_value(q_proj, e_proj, q_feats, e_feats, temperature):
    loss, sim, _ = info_nce_parts(q_proj, e_proj, q_feats, e_feats, temperature)
    return loss, sim


def info_nce_value_and_grads(q_proj, e_proj, q_feats, e_feats, temperature):
    """InfoNCE loss plus exact gradients w.r.t. both projection matrices.

    Backpropagates through the row softmax, the cosine normalization (zero
    rows get zero gradient) and the linear projection.
    """
    loss, sim, parts = info_nce_parts(q_proj, e_proj, q_feats, e_feats,
                                      temperature)
    a_raw, a_unit, a_norm, b_raw, b_unit, b_norm, lse = parts
    n = sim.shape[0]
    probs = np.exp(sim - lse[:, None])
    g = (probs - np.eye(n)) / (n * temperature)  # dL/d(cosine matrix)
    d_a_unit = g @ b_unit
    d_b_unit = g.T @ a_unit
    d_a_raw = _normalization_backward(d_a_unit, a_unit, a_norm)
    d_b_raw = _normalization_backward(d_b_unit, b_unit, b_norm)
    grad_q = q_feats.T @ d_a_raw
    grad_e = e_feats.T @ d_b_raw
    return loss, sim, grad_q, grad_e


def _normalization_backward(d_unit: np.ndarray, unit: np.ndarray,
                            norms: np.ndarray) -> np.ndarray:
    inner = np.sum(d_unit * unit, axis=1, keepdims=True)
    safe = np.where(norms > 1e-12, norms, 1.0)
    d_raw = (d_unit - inner * unit) / safe[:, None]
    d_raw[norms <= 1e-12] = 0.0
    return d_raw


# ---------------------------------------------------------------------------
# Encoder-level wrappers.
# ---------------------------------------------------------------------------

def _batch_feature_matrix(cache: FeatureCache, texts: Sequence[str]) -> np.ndarray:
    mat = np.zeros((len(texts), cache.hasher.dim), dtype=np.float64)
    for row, text in enumerate(texts):
        idx, val = cache(text)
        mat[row, idx] = val
    return mat


def info_nce_loss(q_encoder: TextEncoder, e_encoder: TextEncoder,
                  batch: Sequence[ContrastivePair],
                  temperature: float = 1.0) -> tuple[float, np.ndarray]:
    if not batch:
        raise ValueError("empty batch")
    cache = FeatureCache(q_encoder.hasher)
    qf = _batch_feature_matrix(cache, [p.query_text for p in batch])
    ef = _batch_feature_matrix(cache, [p.evidence_text for p in batch])
    return info_nce_value(q_encoder.projection, e_encoder.projection,
                          qf, ef, temperature)


def loss_gradients(q_encoder: TextEncoder, e_encoder: TextEncoder,
                   batch: Sequence[ContrastivePair],
                   temperature: float = 1.0):
    """Gradient of the batch InfoNCE loss w.r.t. both projections."""
    if not batch:
        raise ValueError("empty batch")
    cache = FeatureCache(q_encoder.hasher)
    qf = _batch_feature_matrix(cache, [p.query_text for p in batch])
    ef = _batch_feature_matrix(cache, [p.evidence_text for p in batch])
    loss, sim, gq, ge = info_nce_value_and_grads(
        q_encoder.projection, e_encoder.projection, qf, ef, temperature)
    return loss, sim, gq, ge


# ---------------------------------------------------------------------------
# Trainer.
# ---------------------------------------------------------------------------

def train_dual_encoder(corpus: Corpus, cfg, *, hash_dim: int = 4096,
                       ngram_orders: tuple[int, ...] = (1, 2),
                       hash_seed: int = 0, embed_dim: int = 128,
                       shared_hasher=None):
    """Train the question/evidence encoder pair with AdamW + linear decay.

    Returns (q_encoder, e_encoder, history) where history rows are
    (step, epoch, loss, learning_rate).  Fully deterministic given cfg.seed.
    """
    from .hashing import FeatureHasher  # local to avoid cycle at import time

    instances = corpus.instances
    if cfg.batch_size > len(instances):
        raise ValueError(
            f"corpus has {len(instances)} instances < batch_size {cfg.batch_size}")
    rng = np.random.default_rng(cfg.seed)
    hasher = shared_hasher or FeatureHasher(hash_dim, ngram_orders, hash_seed)
    q_enc = TextEncoder.init_random(hasher, embed_dim, rng, role="question")
    e_enc = TextEncoder.init_random(hasher, embed_dim, rng, role="evidence")

    steps_per_epoch = len(instances) // cfg.batch_size
    total_steps = cfg.epochs * steps_per_epoch
    params = {"q": q_enc.projection.astype(np.float64),
              "e": e_enc.projection.astype(np.float64)}
    opt = AdamW(params, cfg.learning_rate, total_steps,
                weight_decay=cfg.weight_decay, decay=("q", "e"))
    cache = FeatureCache(hasher)
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        for _ in range(steps_per_epoch):
            batch = build_contrastive_batch(instances, corpus, rng,
                                            cfg.batch_size)
            qf = _batch_feature_matrix(cache, [p.query_text for p in batch])
            ef = _batch_feature_matrix(cache, [p.evidence_text for p in batch])
            lr_now = opt.current_lr()
            loss, _, gq, ge = info_nce_value_and_grads(
                params["q"], params["e"], qf, ef, cfg.temperature)
            if not np.isfinite(loss):
                raise TrainingDivergedError(step)
            opt.step({"q": gq, "e": ge})
            history.append((step, epoch, loss, lr_now))
            step += 1
    q_enc.projection = params["q"].astype(np.float32)
    e_enc.projection = params["e"].astype(np.float32)
    return q_enc, e_enc, history


def write_history_csv(path: str, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,epoch,loss,learning_rate\n")
        for step, epoch, loss, lr in history:
            fh.write(f"{step},{epoch},{loss!r},{lr!r}\n")
