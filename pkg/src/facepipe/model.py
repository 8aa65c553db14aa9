"""Shared domain types and distance primitives.

Embedding components are stored as float32 to keep index memory small;
every distance accumulates in float64 so results are stable enough to
compare against scalar reference evaluations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DimensionMismatchError, ZeroVectorError

NORMALIZED_TOL = 1e-6


class DistanceMetric(enum.Enum):
    EUCLIDEAN_SQUARED = "euclidean_squared"
    COSINE = "cosine"


@dataclass(frozen=True)
class Embedding:
    """A fixed-dimension feature vector with a record id and optional identity.

    ``values`` is coerced to a read-only 1-D float32 array. When
    ``normalized`` is set, the L2 norm must be 1 within ``NORMALIZED_TOL``.
    """

    values: np.ndarray
    id: int
    label: Optional[str] = None
    normalized: bool = False

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 1:
            raise ValueError(f"embedding values must be 1-D, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("embedding must have at least one component")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding components must be finite")
        if self.id < 0 or self.id >= 2**64:
            raise ValueError(f"embedding id must be an unsigned 64-bit integer, got {self.id}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.normalized:
            norm = float(np.linalg.norm(arr.astype(np.float64)))
            if abs(norm - 1.0) > NORMALIZED_TOL:
                raise ValueError(f"embedding flagged normalized but |v| = {norm!r}")

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


class Hit(NamedTuple):
    """One search hit: record id and its distance to the query."""

    id: int
    distance: float


@dataclass
class SearchResult:
    """Ranked hits from any search path, nearest first.

    ``partial`` marks results that contain fewer hits than were requested
    (k exceeded the element count).
    """

    hits: list[Hit] = field(default_factory=list)
    query_id: Optional[int] = None
    partial: bool = False

    def __post_init__(self) -> None:
        self.hits = [Hit(int(i), float(d)) for i, d in self.hits]
        seen = set()
        prev = -np.inf
        for hit in self.hits:
            if hit.distance < 0 or not np.isfinite(hit.distance):
                raise ValueError(f"hit distance must be finite and nonnegative: {hit}")
            if hit.distance < prev:
                raise ValueError("hit distances must be nondecreasing")
            if hit.id in seen:
                raise ValueError(f"duplicate id {hit.id} in search result")
            seen.add(hit.id)
            prev = hit.distance
        self.query_id = None if self.query_id is None else int(self.query_id)

    def ids(self) -> list[int]:
        return [h.id for h in self.hits]

    def id_set(self) -> set[int]:
        return set(h.id for h in self.hits)

    def __len__(self) -> int:
        return len(self.hits)


# -- array-level primitives (hot paths work on raw arrays) --------------------


def euclidean_sq_arrays(a: np.ndarray, b: np.ndarray) -> float:
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.dot(diff, diff))


def norm_array(a: np.ndarray) -> float:
    a64 = a.astype(np.float64)
    return float(np.sqrt(np.dot(a64, a64)))


def cosine_similarity_arrays(a: np.ndarray, b: np.ndarray) -> float:
    na = norm_array(a)
    nb = norm_array(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for zero vectors")
    dot = float(np.dot(a.astype(np.float64), b.astype(np.float64)))
    return dot / (na * nb)


def cosine_distance_arrays(a: np.ndarray, b: np.ndarray) -> float:
    return 1.0 - cosine_similarity_arrays(a, b)


def _check_same_dimension(a: Embedding, b: Embedding) -> None:
    if a.dimension != b.dimension:
        raise DimensionMismatchError(
            f"dimension mismatch: {a.dimension} vs {b.dimension}"
        )


def distance(a: Embedding, b: Embedding, metric: DistanceMetric) -> float:
    """Distance between two embeddings under the chosen metric.

    Cosine distance is 1 - cos(a, b), in [0, 2]; euclidean is the squared
    L2 distance. Raises for dimension mismatches and, under cosine, for
    zero-norm inputs.
    """
    _check_same_dimension(a, b)
    if metric is DistanceMetric.EUCLIDEAN_SQUARED:
        return euclidean_sq_arrays(a.values, b.values)
    if metric is DistanceMetric.COSINE:
        d = cosine_distance_arrays(a.values, b.values)
        # guard against rounding pushing the value a hair outside [0, 2]
        return min(max(d, 0.0), 2.0)
    raise ValueError(f"unknown metric {metric!r}")


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Cosine similarity in [-1, 1]; raises ZeroVectorError for zero inputs."""
    _check_same_dimension(a, b)
    sim = cosine_similarity_arrays(a.values, b.values)
    return min(max(sim, -1.0), 1.0)
