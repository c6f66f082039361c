"""Brute-force reference implementations used to cross-check the retrieval
paths in tests: full-sort top-k and explicit stepwise greedy selection."""
from __future__ import annotations

from typing import Mapping, Sequence

from .corpus import STOP_ID


def oracle_topk(pool_scores: Sequence[tuple[str, float]], k: int) -> list[str]:
    """Full stable sort by (-score, id), truncated to k."""
    ranked = sorted(pool_scores, key=lambda t: (-t[1], t[0]))
    return [sid for sid, _ in ranked[:k]]


def oracle_greedy(score_table: Mapping[tuple[tuple[str, ...], str], float],
                  pool: Sequence[str], m_max: int,
                  score_floor: float | None = None) -> list[str]:
    """Stepwise argmax enumeration with the same tie-break and stop rules as
    the refiner loop.  ``score_table`` maps (selected-prefix tuple, candidate
    id) to a score; a missing entry is an error."""
    remaining = list(pool)
    if STOP_ID not in remaining:
        remaining.append(STOP_ID)
    selected: list[str] = []
    while len(selected) < m_max:
        prefix = tuple(selected)
        scores = []
        for cid in remaining:
            if (prefix, cid) not in score_table:
                raise KeyError(f"missing score for prefix={prefix!r}, "
                               f"candidate={cid!r}")
            scores.append((cid, score_table[(prefix, cid)]))
        best_id, best_score = min(scores, key=lambda t: (-t[1], t[0]))
        if best_id == STOP_ID:
            break
        if score_floor is not None and best_score < score_floor:
            break
        remaining.remove(best_id)
        selected.append(best_id)
    return selected
