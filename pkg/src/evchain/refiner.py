"""Iterative evidence chain retrieval.

A trainable pair scorer maps the concatenation of question, already-selected
evidence and one candidate to a matching probability; the retrieval loop
greedily moves the argmax candidate from the pool into the chain until the
``[STOP]`` sentinel wins, the chain hits its length cap, or an optional score
floor cuts it off.  Training is teacher-forced binary cross-entropy over
gold-prefix states with screened distractors as negatives.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .config import RefineConfig, TrainConfig
from .contrastive import write_history_csv
from .corpus import STOP_ID, Corpus, text_surface
from .hashing import FeatureCache, FeatureHasher, tokenize
from .optim import AdamW, TrainingDivergedError
from .screener import ScreenResult
from .serialize import load_tensors, save_tensors
from .validation import check_fitted

SEP = "[SEP]"
PROB_EPS = 1e-7


def compose_input(question: str, selected_surfaces: Sequence[str],
                  candidate_surface: str) -> str:
    """``question [SEP] r1 [SEP] ... [SEP] candidate``; the stop sentinel's
    candidate surface is the literal ``[STOP]``."""
    parts = [question, *selected_surfaces, candidate_surface]
    return f" {SEP} ".join(parts)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class PairScorer:
    """One-hidden-layer scorer over hashed features of the composed string.

    score = logistic(out . tanh(hidden^T x + hidden_bias) + out_bias),
    strictly inside (0, 1).  Parameters are float32 at rest (see encoder).
    """

    def __init__(self, hasher: FeatureHasher, hidden: np.ndarray,
                 hidden_bias: np.ndarray, out: np.ndarray, out_bias: float):
        if hidden.shape[0] != hasher.dim:
            raise ValueError("hidden weight rows must match hasher.dim")
        self.hasher = hasher
        self.hidden = np.asarray(hidden, dtype=np.float32)
        self.hidden_bias = np.asarray(hidden_bias, dtype=np.float32)
        self.out = np.asarray(out, dtype=np.float32)
        self.out_bias = np.float32(out_bias)
        for arr in (self.hidden, self.hidden_bias, self.out):
            if not np.all(np.isfinite(arr)):
                raise ValueError("scorer parameters must be finite")
        self._features = FeatureCache(hasher)

    @property
    def hidden_dim(self) -> int:
        return self.hidden.shape[1]

    # Initialization constants: threshold pairs fire on |bucket sum| >= 2
    # (a repeated n-gram between question/chain and candidate) while staying
    # nearly flat for singly-occupied buckets; GAIN is the score-logit gain
    # per detected repeat and SENTINEL_REPEATS places the stop sentinel's
    # initial prior between "no repeats" and "a few repeats".
    DETECTOR_WEIGHT = 2.5
    DETECTOR_THRESHOLD = 5.0
    GAIN = 0.125
    SENTINEL_REPEATS = 2.5
    PRIOR_LOGIT = -2.0
    INIT_JITTER = 0.01

    @classmethod
    def init_random(cls, hasher: FeatureHasher, hidden_dim: int,
                    rng: np.random.Generator) -> "PairScorer":
        """Structured start: repeat-detector pairs plus a sentinel-prior unit.

        Gradient descent from a plain Gaussian init never discovers the
        repeated-n-gram feature (it is second order in the hashed counts), so
        the hidden layer starts as paired tanh threshold units over random
        disjoint bucket groups; unit 2j fires when some bucket in group j
        reaches +2, unit 2j+1 when one reaches -2.  The last unit carries a
        calibrated prior for the stop sentinel's token.  Training refines the
        readout and thresholds.
        """
        if hidden_dim < 4:
            raise ValueError("hidden_dim must be >= 4")
        c, theta = cls.DETECTOR_WEIGHT, cls.DETECTOR_THRESHOLD
        n_det = hidden_dim - 1
        n_pairs = n_det // 2
        groups = np.array_split(rng.permutation(hasher.dim), n_pairs)
        hidden = rng.normal(0.0, cls.INIT_JITTER, (hasher.dim, hidden_dim))
        hidden_bias = rng.normal(0.0, cls.INIT_JITTER, hidden_dim)
        for j, grp in enumerate(groups):
            hidden[grp, 2 * j] += c
            hidden[grp, 2 * j + 1] -= c
            hidden_bias[2 * j] += -theta
            hidden_bias[2 * j + 1] += -theta
        out = np.full(hidden_dim, cls.GAIN)
        out += rng.normal(0.0, cls.GAIN / 50.0, hidden_dim)
        sentinel = hidden_dim - 1
        stop_bucket, stop_sign = hasher._bucket_sign(tokenize(STOP_ID)[0])
        hidden[:, sentinel] = rng.normal(0.0, cls.INIT_JITTER, hasher.dim)
        hidden[stop_bucket, sentinel] = 2.0 * stop_sign
        hidden_bias[sentinel] = 0.0
        out[sentinel] = cls.GAIN * cls.SENTINEL_REPEATS / np.tanh(2.0)
        # every detector pair idles at 2*tanh(-theta); cancel that baseline
        out_bias = float(-2.0 * n_pairs * cls.GAIN * np.tanh(-theta)
                         + cls.PRIOR_LOGIT)
        return cls(hasher, hidden.astype(np.float32),
                   hidden_bias.astype(np.float32), out.astype(np.float32),
                   out_bias)

    def score_sparse(self, idx: np.ndarray, val: np.ndarray) -> float:
        w = self.hidden.astype(np.float64)
        t = np.tanh(val @ w[idx] + self.hidden_bias.astype(np.float64))
        z = float(t @ self.out.astype(np.float64)) + float(self.out_bias)
        return float(sigmoid(z))

    def score(self, composed: str) -> float:
        idx, val = self._features(composed)
        return self.score_sparse(idx, val)

    def save(self, path: str) -> None:
        save_tensors(path, {"hidden": self.hidden,
                            "hidden_bias": self.hidden_bias,
                            "out": self.out,
                            "out_bias": np.array([self.out_bias])},
                     {"kind": "pair_scorer", "hasher": self.hasher.config()})

    @classmethod
    def load(cls, path: str) -> "PairScorer":
        tensors, meta = load_tensors(path)
        hasher = FeatureHasher.from_config(meta["hasher"])
        return cls(hasher, tensors["hidden"], tensors["hidden_bias"],
                   tensors["out"], float(tensors["out_bias"][0]))


def score_pair(scorer: PairScorer, composed: str) -> float:
    return scorer.score(composed)


def refine(scorer: PairScorer, question: str, screened: ScreenResult,
           corpus: Corpus, cfg: RefineConfig) -> list[str]:
    """Greedy chain selection over the screened pool plus the stop sentinel.

    Per step every remaining pool member is scored against the question and
    the chain so far; the argmax (ties by ascending id) either terminates the
    loop (sentinel, length cap, score floor) or joins the chain.  Selected
    sources leave the pool and are never rescored.
    """
    if not screened.ranked:
        raise ValueError("screened pool must be non-empty")
    pool = screened.ids() + [STOP_ID]
    surfaces = {sid: text_surface(corpus.source(sid)) for sid in screened.ids()}
    surfaces[STOP_ID] = STOP_ID
    selected: list[str] = []
    selected_surfaces: list[str] = []
    while len(selected) < cfg.m_max:
        best_id, best_score = None, None
        for cid in pool:
            s = scorer.score(compose_input(question, selected_surfaces,
                                           surfaces[cid]))
            if best_score is None or s > best_score or \
                    (s == best_score and cid < best_id):
                best_id, best_score = cid, s
        if best_id == STOP_ID:
            break
        if cfg.score_floor is not None and best_score < cfg.score_floor:
            break
        pool.remove(best_id)
        selected.append(best_id)
        selected_surfaces.append(surfaces[best_id])
    return selected


# ---------------------------------------------------------------------------
# Training: loss + exact gradients over raw parameter arrays.
# ---------------------------------------------------------------------------

def scorer_scores(hidden, hidden_bias, out, out_bias, feats: np.ndarray):
    w = np.asarray(hidden, dtype=np.float64)
    t = np.tanh(feats @ w + np.asarray(hidden_bias, dtype=np.float64))
    z = t @ np.asarray(out, dtype=np.float64) + float(out_bias)
    return sigmoid(z), t


def bce_value(hidden, hidden_bias, out, out_bias, feats: np.ndarray,
              labels: np.ndarray, literal_negatives: bool = False) -> float:
    """Selection loss for one retrieval state.

    labels are 1 for remaining-gold (or sentinel) positives, 0 for screened
    distractors.  Default is binary cross-entropy; ``literal_negatives``
    switches the negative term from -log(1-p) to +log(p) (the unbounded
    difference form, kept for comparison).
    """
    scores, _ = scorer_scores(hidden, hidden_bias, out, out_bias, feats)
    p = np.clip(scores, PROB_EPS, 1.0 - PROB_EPS)
    pos = labels == 1
    loss = -np.sum(np.log(p[pos]))
    if literal_negatives:
        loss += np.sum(np.log(p[~pos]))
    else:
        loss -= np.sum(np.log(1.0 - p[~pos]))
    return float(loss)


def bce_value_and_grads(hidden, hidden_bias, out, out_bias, feats, labels,
                        literal_negatives: bool = False):
    scores, t = scorer_scores(hidden, hidden_bias, out, out_bias, feats)
    p = np.clip(scores, PROB_EPS, 1.0 - PROB_EPS)
    pos = labels == 1
    loss = -np.sum(np.log(p[pos]))
    if literal_negatives:
        loss += np.sum(np.log(p[~pos]))
        dz = np.where(pos, scores - 1.0, 1.0 - scores)
    else:
        loss -= np.sum(np.log(1.0 - p[~pos]))
        dz = scores - labels
    out64 = np.asarray(out, dtype=np.float64)
    d_out = t.T @ dz
    d_out_bias = float(np.sum(dz))
    d_pre = (dz[:, None] * out64[None, :]) * (1.0 - t * t)
    d_hidden = feats.T @ d_pre
    d_bias = d_pre.sum(axis=0)
    return float(loss), {"hidden": d_hidden, "hidden_bias": d_bias,
                         "out": d_out, "out_bias": np.array([d_out_bias])}


def selection_loss(scorer: PairScorer, question: str,
                   selected_surfaces: Sequence[str],
                   gold_remaining: Sequence[str], negatives: Sequence[str],
                   literal_negatives: bool = False) -> float:
    """One-state loss from raw surfaces (positives = gold_remaining)."""
    if not gold_remaining and not negatives:
        raise ValueError("need at least one positive or negative")
    texts = [compose_input(question, selected_surfaces, s)
             for s in list(gold_remaining) + list(negatives)]
    labels = np.array([1] * len(gold_remaining) + [0] * len(negatives))
    feats = np.zeros((len(texts), scorer.hasher.dim), dtype=np.float64)
    for row, text in enumerate(texts):
        idx, val = scorer._features(text)
        feats[row, idx] = val
    return bce_value(scorer.hidden, scorer.hidden_bias, scorer.out,
                     scorer.out_bias, feats, labels,
                     literal_negatives=literal_negatives)


@dataclass
class _State:
    """Featurized candidates (sparse rows) and labels of one teacher step."""
    idx: list[np.ndarray]
    val: list[np.ndarray]
    labels: np.ndarray


def build_training_states(corpus: Corpus, screens: Mapping[str, ScreenResult],
                          cache: FeatureCache,
                          permute_gold: bool = False) -> list[list[_State]]:
    """Teacher-forced states per instance: for prefix R = gold[0..j) the
    positives are the remaining gold sources, negatives the screened
    distractors; once R covers all gold the sentinel becomes the positive."""
    per_instance = []
    for inst in corpus.instances:
        screened = screens.get(inst.qid)
        if screened is None:
            raise KeyError(f"no screen result for instance {inst.qid!r}")
        gold_surfs = [text_surface(corpus.source(g)) for g in inst.gold_ids]
        neg_surfs = [text_surface(corpus.source(sid))
                     for sid in screened.ids() if sid not in set(inst.gold_ids)]
        if permute_gold and len(gold_surfs) <= 3:
            orders = [list(p) for p in itertools.permutations(gold_surfs)]
        else:
            orders = [gold_surfs]
        states = []
        for order in orders:
            for j in range(len(order) + 1):
                prefix = order[:j]
                positives = order[j:] if j < len(order) else [STOP_ID]
                texts = [compose_input(inst.question, prefix, s)
                         for s in positives + neg_surfs]
                labels = np.array([1] * len(positives) + [0] * len(neg_surfs))
                idxs, vals = [], []
                for text in texts:
                    idx, val = cache(text)
                    idxs.append(idx.astype(np.int32))
                    vals.append(val)
                states.append(_State(idxs, vals, labels))
        per_instance.append(states)
    return per_instance


def _state_loss_grads(params: dict[str, np.ndarray], state: _State,
                      grads: dict[str, np.ndarray],
                      literal_negatives: bool) -> float:
    w, bias = params["hidden"], params["hidden_bias"]
    out, out_bias = params["out"], params["out_bias"]
    n = len(state.idx)
    loss = 0.0
    dz_all = np.empty(n)
    t_rows = []
    for i in range(n):
        idx, val = state.idx[i], state.val[i]
        t = np.tanh(val @ w[idx] + bias)
        t_rows.append(t)
        z = float(t @ out) + float(out_bias[0])
        s = float(sigmoid(z))
        p = min(max(s, PROB_EPS), 1.0 - PROB_EPS)
        y = state.labels[i]
        if y == 1:
            loss -= np.log(p)
            dz_all[i] = s - 1.0
        elif literal_negatives:
            loss += np.log(p)
            dz_all[i] = 1.0 - s
        else:
            loss -= np.log(1.0 - p)
            dz_all[i] = s
    for i in range(n):
        t = t_rows[i]
        dz = dz_all[i]
        grads["out"] += dz * t
        grads["out_bias"][0] += dz
        d_pre = dz * out * (1.0 - t * t)
        grads["hidden"][state.idx[i]] += np.outer(state.val[i], d_pre)
        grads["hidden_bias"] += d_pre
    return float(loss)


def train_refiner(corpus: Corpus, screens: Mapping[str, ScreenResult],
                  cfg: TrainConfig, *, hash_dim: int = 4096,
                  ngram_orders: tuple[int, ...] = (1, 2), hash_seed: int = 1,
                  hidden_dim: int = 64, permute_gold: bool = False,
                  literal_negatives: bool = False):
    """Teacher-forced scorer training over precomputed screen results.

    Batches are instances; the step loss averages the accumulated per-state
    selection losses within the batch.  Deterministic under cfg.seed.
    """
    instances = corpus.instances
    if not instances:
        raise ValueError("corpus has no instances")
    rng = np.random.default_rng(cfg.seed)
    hasher = FeatureHasher(hash_dim, ngram_orders, hash_seed)
    scorer = PairScorer.init_random(hasher, hidden_dim, rng)
    cache = FeatureCache(hasher)
    all_states = build_training_states(corpus, screens, cache,
                                       permute_gold=permute_gold)

    batch = max(1, min(cfg.batch_size, len(instances)))
    steps_per_epoch = len(instances) // batch
    total_steps = cfg.epochs * steps_per_epoch
    params = {"hidden": scorer.hidden.astype(np.float64),
              "hidden_bias": scorer.hidden_bias.astype(np.float64),
              "out": scorer.out.astype(np.float64),
              "out_bias": np.array([float(scorer.out_bias)])}
    opt = AdamW(params, cfg.learning_rate, total_steps,
                weight_decay=cfg.weight_decay, decay=("hidden", "out"))
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(instances))
        for b in range(steps_per_epoch):
            members = order[b * batch:(b + 1) * batch]
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            loss = 0.0
            n_states = 0
            for m in members:
                for state in all_states[int(m)]:
                    loss += _state_loss_grads(params, state, grads,
                                              literal_negatives)
                    n_states += 1
            loss /= n_states
            for g in grads.values():
                g /= n_states
            if not np.isfinite(loss):
                raise TrainingDivergedError(step)
            lr_now = opt.current_lr()
            opt.step(grads)
            history.append((step, epoch, loss, lr_now))
            step += 1
    scorer.hidden = params["hidden"].astype(np.float32)
    scorer.hidden_bias = params["hidden_bias"].astype(np.float32)
    scorer.out = params["out"].astype(np.float32)
    scorer.out_bias = np.float32(params["out_bias"][0])
    return scorer, history


class ChainRefiner(BaseEstimator):
    """sklearn-style wrapper around the iterative retrieval stage."""

    def __init__(self, hash_dim: int = 4096, ngram_orders: tuple[int, ...] = (1, 2),
                 hash_seed: int = 1, hidden_dim: int = 64, m_max: int = 4,
                 score_floor: float | None = None, batch_size: int = 8,
                 learning_rate: float = 2e-5, epochs: int = 5,
                 weight_decay: float = 0.01, seed: int = 0,
                 permute_gold: bool = False, literal_negatives: bool = False):
        self.hash_dim = hash_dim
        self.ngram_orders = ngram_orders
        self.hash_seed = hash_seed
        self.hidden_dim = hidden_dim
        self.m_max = m_max
        self.score_floor = score_floor
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.weight_decay = weight_decay
        self.seed = seed
        self.permute_gold = permute_gold
        self.literal_negatives = literal_negatives
        self.scorer_ = None
        self.loss_history_ = None

    def refine_config(self) -> RefineConfig:
        return RefineConfig(m_max=self.m_max, score_floor=self.score_floor)

    def fit(self, corpus: Corpus, screens: Mapping[str, ScreenResult]
            ) -> "ChainRefiner":
        cfg = TrainConfig(batch_size=self.batch_size,
                          learning_rate=self.learning_rate, epochs=self.epochs,
                          weight_decay=self.weight_decay, seed=self.seed)
        self.scorer_, self.loss_history_ = train_refiner(
            corpus, screens, cfg, hash_dim=self.hash_dim,
            ngram_orders=tuple(self.ngram_orders), hash_seed=self.hash_seed,
            hidden_dim=self.hidden_dim, permute_gold=self.permute_gold,
            literal_negatives=self.literal_negatives)
        return self

    def refine(self, question: str, screened: ScreenResult,
               corpus: Corpus) -> list[str]:
        check_fitted(self, "scorer_")
        return refine(self.scorer_, question, screened, corpus,
                      self.refine_config())

    def save(self, path: str) -> None:
        check_fitted(self, "scorer_")
        self.scorer_.save(path)

    def load_scorer(self, path: str) -> "ChainRefiner":
        self.scorer_ = PairScorer.load(path)
        self.loss_history_ = []
        return self

    def write_history(self, path: str) -> None:
        check_fitted(self, "scorer_")
        write_history_csv(path, self.loss_history_ or [])
