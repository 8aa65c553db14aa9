"""Two-pass retrieval: expand a first search through its own top hits.

The first pass answers the query directly. The second pass re-queries the
index from the stored vectors of the best first-pass hits, pulling in
neighbors-of-neighbors that a single descent can miss. The two hit sets
are combined with a logical operation (union to raise recall, intersection
to tighten precision); every reported distance is measured against the
original query.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .hnsw import HnswIndex
from .model import DistanceMetric, Embedding, Hit, SearchResult


class CombineOp(enum.Enum):
    AND = "and"
    OR = "or"


class SecondaryStrategy(enum.Enum):
    """How second-pass queries are chosen."""

    EXPAND_TOP_HITS = "expand_top_hits"


@dataclass(frozen=True)
class SecondaryConfig:
    k: int
    expansion_count: int = 3
    ef_first: Optional[int] = None
    ef_second: Optional[int] = None
    combine: CombineOp = CombineOp.OR
    strategy: SecondaryStrategy = SecondaryStrategy.EXPAND_TOP_HITS

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if not 1 <= self.expansion_count <= self.k:
            raise ValueError(
                f"expansion_count must lie in [1, k], got {self.expansion_count} with k={self.k}"
            )
        for name in ("ef_first", "ef_second"):
            ef = getattr(self, name)
            if ef is not None and ef < self.k:
                raise ValueError(f"{name} must be at least k, got {ef}")


def combine(first: SearchResult, second: SearchResult, op: CombineOp) -> SearchResult:
    """Set-combine two results; each id keeps its smallest seen distance.

    AND keeps ids present in both inputs, OR keeps ids present in either.
    Output is ordered by (distance, id).
    """
    dist_a = {h.id: h.distance for h in first.hits}
    dist_b = {h.id: h.distance for h in second.hits}
    if op is CombineOp.AND:
        ids = dist_a.keys() & dist_b.keys()
    elif op is CombineOp.OR:
        ids = dist_a.keys() | dist_b.keys()
    else:
        raise ValueError(f"unknown combine op {op!r}")
    best = {
        i: min(d for d in (dist_a.get(i), dist_b.get(i)) if d is not None)
        for i in ids
    }
    hits = [Hit(i, best[i]) for i in sorted(ids, key=lambda i: (best[i], i))]
    query_id = first.query_id if first.query_id == second.query_id else None
    return SearchResult(hits=hits, query_id=query_id)


def _distance_to_query(index: HnswIndex, q64: np.ndarray, qnorm: float, rec_id: int) -> float:
    v = index.vector(rec_id).astype(np.float64)
    if index.params.metric is DistanceMetric.COSINE:
        vn = float(np.sqrt(np.dot(v, v)))
        d = 1.0 - float(np.dot(v, q64)) / (vn * qnorm)
        return min(max(d, 0.0), 2.0)
    diff = v - q64
    return float(np.dot(diff, diff))


def expansion_pass(
    index: HnswIndex,
    query: Union[Embedding, np.ndarray],
    config: SecondaryConfig,
    first: SearchResult,
) -> SearchResult:
    """The second pass alone: re-query from the top first-pass hits.

    Each of the top ``expansion_count`` hits contributes its own k-nearest
    neighborhood; the union is reported with distances measured from the
    original query, not from the expansion vectors.
    """
    q = query.values if isinstance(query, Embedding) else np.asarray(query)
    q64 = q.astype(np.float64).reshape(-1)
    qnorm = float(np.sqrt(np.dot(q64, q64)))
    merged: dict[int, float] = {}
    for hit in first.hits[: config.expansion_count]:
        sub = index.knn_search(index.vector(hit.id), config.k, ef=config.ef_second)
        for sub_hit in sub.hits:
            if sub_hit.id not in merged:
                merged[sub_hit.id] = _distance_to_query(index, q64, qnorm, sub_hit.id)
    return SearchResult(
        hits=[Hit(i, merged[i]) for i in sorted(merged, key=lambda i: (merged[i], i))],
        query_id=first.query_id,
    )


def secondary_search(
    index: HnswIndex,
    query: Union[Embedding, np.ndarray],
    config: SecondaryConfig,
) -> SearchResult:
    """Two-pass search returning at most ``config.k`` hits.

    Pass one queries normally; pass two is ``expansion_pass``. The passes
    are combined per ``config.combine`` and truncated to k.
    """
    k = config.k
    first = index.knn_search(query, k, ef=config.ef_first)
    second = expansion_pass(index, query, config, first)
    full = combine(first, second, config.combine)
    hits = full.hits[:k]
    return SearchResult(hits=hits, query_id=first.query_id, partial=len(hits) < k)
