"""Hierarchical navigable small world index over face embeddings.

The graph is stored in flat numpy arrays so that the traversal kernels
(compiled or pure Python, see facepipe._kernels) can walk it without
touching Python objects per node. Candidate ordering is everywhere the
lexicographic pair (distance, external id), which makes results
deterministic under ties for a given backend.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from . import _kernels
from ._binio import PayloadReader, read_envelope, write_envelope
from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    EmptyIndexError,
    InvariantError,
    ZeroVectorError,
)
from .model import (
    DistanceMetric,
    Embedding,
    Hit,
    SearchResult,
    norm_array,
)

MAX_LEVEL = 64
DEFAULT_EF_QUERY = 50

INDEX_MAGIC = b"HNSW"
INDEX_VERSION = 1

_METRIC_CODE = {
    DistanceMetric.EUCLIDEAN_SQUARED: 0,
    DistanceMetric.COSINE: 1,
}
_METRIC_FROM_CODE = {v: k for k, v in _METRIC_CODE.items()}


@dataclass(frozen=True)
class HnswParams:
    """Construction-time knobs for the proximity graph.

    m is the per-node edge budget on the upper layers, m0 the budget on
    the ground layer. level_multiplier scales the exponential level draw;
    when left unset it defaults to 1/ln(m).
    """

    m: int = 16
    m0: Optional[int] = None
    ef_construction: int = 200
    level_multiplier: Optional[float] = None
    metric: DistanceMetric = DistanceMetric.COSINE
    rng_seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be at least 2, got {self.m}")
        if self.m0 is None:
            object.__setattr__(self, "m0", 2 * self.m)
        if self.m0 < self.m:
            raise ValueError(f"m0 ({self.m0}) must be >= m ({self.m})")
        if self.ef_construction < self.m:
            raise ValueError(
                f"ef_construction ({self.ef_construction}) must be >= m ({self.m})"
            )
        if self.level_multiplier is None:
            object.__setattr__(self, "level_multiplier", 1.0 / math.log(self.m))
        if self.level_multiplier <= 0:
            raise ValueError("level_multiplier must be positive")
        if not isinstance(self.metric, DistanceMetric):
            raise TypeError("metric must be a DistanceMetric")


class HnswIndex:
    """Append-only approximate nearest neighbor index.

    Elements are inserted one at a time with externally supplied integer
    ids. Queries run greedy descent from the entry point through the upper
    layers, then a best-first beam search of width ef on the ground layer.
    """

    def __init__(
        self,
        dimension: int,
        params: Optional[HnswParams] = None,
        capacity: int = 1024,
        backend: str = "auto",
    ):
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self._dim = int(dimension)
        self._params = params if params is not None else HnswParams()
        self._kernel = _kernels.load_backend(backend)
        self._metric_code = _METRIC_CODE[self._params.metric]
        self._rng = np.random.Generator(np.random.PCG64(self._params.rng_seed))

        cap = max(int(capacity), 8)
        m, m0 = self._params.m, self._params.m0
        self._cap = cap
        self._vectors = np.zeros((cap, self._dim), dtype=np.float32)
        self._norms = np.zeros(cap, dtype=np.float64)
        self._ids = np.zeros(cap, dtype=np.uint64)
        self._levels = np.zeros(cap, dtype=np.int32)
        self._adj0 = np.zeros((cap, m0), dtype=np.int32)
        self._cnt0 = np.zeros(cap, dtype=np.int32)
        self._up_off = np.full(cap, -1, dtype=np.int64)

        up_cap = max(16, cap // max(m - 1, 1) + 8)
        self._up_cap = up_cap
        self._adj_up = np.zeros((up_cap, m), dtype=np.int32)
        self._cnt_up = np.zeros(up_cap, dtype=np.int32)
        self._next_up = 0

        self._n = 0
        self._entry = -1
        self._max_level = -1
        self._row_of_id: dict[int, int] = {}

    # ------------------------------------------------------------------
    # properties

    @property
    def dimension(self) -> int:
        return self._dim

    @property
    def params(self) -> HnswParams:
        return self._params

    @property
    def element_count(self) -> int:
        return self._n

    @property
    def backend(self) -> str:
        return self._kernel.BACKEND

    @property
    def entry_point(self) -> Optional[int]:
        """External id of the current entry node, None while empty."""
        if self._entry < 0:
            return None
        return int(self._ids[self._entry])

    @property
    def max_level(self) -> int:
        """Topmost populated layer, -1 while empty."""
        return self._max_level

    def __len__(self) -> int:
        return self._n

    def __contains__(self, external_id: int) -> bool:
        return int(external_id) in self._row_of_id

    # ------------------------------------------------------------------
    # growth

    def _grow_nodes(self) -> None:
        new_cap = self._cap * 2
        m0 = self._params.m0

        def bigger(arr, shape, fill=0):
            out = np.full(shape, fill, dtype=arr.dtype) if fill else np.zeros(shape, dtype=arr.dtype)
            out[: self._n] = arr[: self._n]
            return out

        self._vectors = bigger(self._vectors, (new_cap, self._dim))
        self._norms = bigger(self._norms, (new_cap,))
        self._ids = bigger(self._ids, (new_cap,))
        self._levels = bigger(self._levels, (new_cap,))
        self._adj0 = bigger(self._adj0, (new_cap, m0))
        self._cnt0 = bigger(self._cnt0, (new_cap,))
        self._up_off = bigger(self._up_off, (new_cap,), fill=-1)
        self._cap = new_cap

    def _grow_upper(self, rows_needed: int) -> None:
        new_cap = self._up_cap
        while new_cap < rows_needed:
            new_cap *= 2
        adj = np.zeros((new_cap, self._params.m), dtype=np.int32)
        cnt = np.zeros(new_cap, dtype=np.int32)
        adj[: self._next_up] = self._adj_up[: self._next_up]
        cnt[: self._next_up] = self._cnt_up[: self._next_up]
        self._adj_up = adj
        self._cnt_up = cnt
        self._up_cap = new_cap

    # ------------------------------------------------------------------
    # insertion

    def _draw_level(self) -> int:
        u = self._rng.random()
        if u <= 0.0:
            u = np.nextafter(0.0, 1.0)
        level = int(-math.log(u) * self._params.level_multiplier)
        return min(level, MAX_LEVEL)

    def _coerce_vector(self, values) -> tuple[np.ndarray, float]:
        if isinstance(values, Embedding):
            values = values.values
        arr = np.ascontiguousarray(np.asarray(values, dtype=np.float32))
        if arr.ndim != 1:
            raise ValueError("expected a 1-D vector")
        if arr.shape[0] != self._dim:
            raise DimensionMismatchError(
                f"index holds {self._dim}-d vectors, got {arr.shape[0]}-d"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("vector contains non-finite values")
        nrm = norm_array(arr)
        if self._params.metric is DistanceMetric.COSINE and nrm == 0.0:
            raise ZeroVectorError("cosine metric cannot index a zero vector")
        return arr, nrm

    def insert(self, item: Union[Embedding, Sequence[float], np.ndarray],
               external_id: Optional[int] = None) -> int:
        """Add one vector. Returns the level it was assigned.

        Accepts an Embedding (its id is used) or a raw vector plus an
        explicit external_id. Ids must be unique across the index.
        """
        if isinstance(item, Embedding):
            if external_id is not None and external_id != item.id:
                raise ValueError("external_id conflicts with embedding id")
            ext = item.id
        else:
            if external_id is None:
                raise ValueError("raw vectors need an explicit external_id")
            ext = int(external_id)
            if not 0 <= ext < 2**64:
                raise ValueError("external id must fit in an unsigned 64-bit int")
        if ext in self._row_of_id:
            raise DuplicateIdError(f"id {ext} is already indexed")

        vec, nrm = self._coerce_vector(item)
        level = self._draw_level()

        if self._n == self._cap:
            self._grow_nodes()
        row = self._n
        self._vectors[row] = vec
        self._norms[row] = nrm
        self._ids[row] = ext
        self._levels[row] = level
        if level >= 1:
            if self._next_up + level > self._up_cap:
                self._grow_upper(self._next_up + level)
            self._up_off[row] = self._next_up
            self._adj_up[self._next_up : self._next_up + level] = 0
            self._cnt_up[self._next_up : self._next_up + level] = 0
            self._next_up += level
        else:
            self._up_off[row] = -1
        self._cnt0[row] = 0

        if self._n == 0:
            self._entry = row
            self._max_level = level
        else:
            self._kernel.insert(
                self._vectors, self._norms, self._ids,
                self._adj0, self._cnt0, self._adj_up, self._cnt_up, self._up_off,
                self._metric_code, row, level, self._entry, self._max_level,
                self._params.ef_construction, self._params.m, self._params.m0,
                row + 1,
            )
            if level > self._max_level:
                self._entry = row
                self._max_level = level

        self._row_of_id[ext] = row
        self._n += 1
        return level

    def insert_many(self, items: Sequence[Embedding]) -> None:
        for item in items:
            self.insert(item)

    # ------------------------------------------------------------------
    # queries

    def _prepare_query(self, query) -> tuple[np.ndarray, float, Optional[int]]:
        qid = query.id if isinstance(query, Embedding) else None
        vec, nrm = self._coerce_vector(query)
        return vec, nrm, qid

    def knn_search(self, query, k: int, ef: Optional[int] = None) -> SearchResult:
        """k nearest neighbors of query, sorted by (distance, id).

        ef defaults to max(k, 50). Asking for more neighbors than the
        index holds returns everything and sets the partial flag.
        """
        if self._n == 0:
            raise EmptyIndexError("cannot search an empty index")
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        if ef is None:
            ef = max(k, DEFAULT_EF_QUERY)
        elif ef < k:
            raise ValueError(f"ef ({ef}) must be at least k ({k})")
        vec, nrm, qid = self._prepare_query(query)

        if k >= self._n:
            # Too few elements for a meaningful graph search; scan them all.
            hits = self._scan_all(vec, nrm)
            return SearchResult(hits=hits, query_id=qid, partial=k > self._n)

        ep = self._entry
        for layer in range(self._max_level, 0, -1):
            rows, _, _ = self._kernel.search_layer(
                self._vectors, self._norms, self._ids,
                self._adj0, self._cnt0, self._adj_up, self._cnt_up, self._up_off,
                self._metric_code, vec, nrm, ep, 1, layer, self._n,
            )
            ep = int(rows[0])
        rows, dists, _ = self._kernel.search_layer(
            self._vectors, self._norms, self._ids,
            self._adj0, self._cnt0, self._adj_up, self._cnt_up, self._up_off,
            self._metric_code, vec, nrm, ep, ef, 0, self._n,
        )
        hits = [
            Hit(int(self._ids[r]), float(d))
            for r, d in zip(rows[:k], dists[:k])
        ]
        return SearchResult(hits=hits, query_id=qid, partial=len(hits) < k)

    def _scan_all(self, vec: np.ndarray, nrm: float) -> list[Hit]:
        mat = self._vectors[: self._n].astype(np.float64)
        q = vec.astype(np.float64)
        if self._params.metric is DistanceMetric.COSINE:
            dists = np.clip(1.0 - (mat @ q) / (self._norms[: self._n] * nrm), 0.0, 2.0)
        else:
            diff = mat - q
            dists = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((self._ids[: self._n], dists))
        return [Hit(int(self._ids[r]), float(dists[r])) for r in order]

    def search_layer(self, query, entry_id: int, ef: int, layer: int,
                     with_stats: bool = False):
        """Beam search restricted to one layer, starting from entry_id.

        Returns up to ef hits sorted by (distance, id); with_stats=True
        additionally returns the number of nodes whose distance was
        evaluated.
        """
        if self._n == 0:
            raise EmptyIndexError("cannot search an empty index")
        if ef < 1:
            raise ValueError(f"ef must be positive, got {ef}")
        try:
            ep = self._row_of_id[int(entry_id)]
        except KeyError:
            raise ValueError(f"entry id {entry_id} is not in the index") from None
        if not 0 <= layer <= self._levels[ep]:
            raise ValueError(
                f"id {entry_id} exists on layers 0..{int(self._levels[ep])}, "
                f"not {layer}"
            )
        vec, nrm, _ = self._prepare_query(query)
        rows, dists, visited = self._kernel.search_layer(
            self._vectors, self._norms, self._ids,
            self._adj0, self._cnt0, self._adj_up, self._cnt_up, self._up_off,
            self._metric_code, vec, nrm, ep, ef, layer, self._n,
        )
        hits = [Hit(int(self._ids[r]), float(d)) for r, d in zip(rows, dists)]
        if with_stats:
            return hits, int(visited)
        return hits

    # ------------------------------------------------------------------
    # introspection

    def level_of(self, external_id: int) -> int:
        row = self._require_row(external_id)
        return int(self._levels[row])

    def vector(self, external_id: int) -> np.ndarray:
        row = self._require_row(external_id)
        return self._vectors[row].copy()

    def neighbors(self, external_id: int, layer: int = 0) -> list[int]:
        """Adjacency list of a node on one layer, as external ids."""
        row = self._require_row(external_id)
        if not 0 <= layer <= self._levels[row]:
            raise ValueError(
                f"id {external_id} exists on layers 0..{int(self._levels[row])}"
            )
        if layer == 0:
            rows = self._adj0[row, : self._cnt0[row]]
        else:
            up = self._up_off[row] + layer - 1
            rows = self._adj_up[up, : self._cnt_up[up]]
        return [int(self._ids[r]) for r in rows]

    def ids(self) -> list[int]:
        return [int(i) for i in self._ids[: self._n]]

    def items(self) -> Iterator[tuple[int, np.ndarray]]:
        for row in range(self._n):
            yield int(self._ids[row]), self._vectors[row].copy()

    def _require_row(self, external_id: int) -> int:
        try:
            return self._row_of_id[int(external_id)]
        except KeyError:
            raise KeyError(f"id {external_id} is not in the index") from None

    # ------------------------------------------------------------------
    # structural checks

    def _layer_lists(self, row: int, layer: int) -> np.ndarray:
        if layer == 0:
            return self._adj0[row, : self._cnt0[row]]
        up = self._up_off[row] + layer - 1
        return self._adj_up[up, : self._cnt_up[up]]

    def validate(self) -> None:
        """Walk every adjacency list and raise InvariantError on damage.

        Checks: counts within budget, neighbor rows in range, no self
        loops or duplicate edges, neighbors present on the layer, every
        edge stored in both directions, and the entry point sitting on
        the topmost layer.
        """
        n = self._n
        if n == 0:
            if self._entry != -1 or self._max_level != -1:
                raise InvariantError("empty index with a dangling entry point")
            return
        if not 0 <= self._entry < n:
            raise InvariantError(f"entry row {self._entry} out of range")
        if self._levels[self._entry] != self._max_level:
            raise InvariantError("entry point is not on the top layer")
        if int(np.max(self._levels[:n])) != self._max_level:
            raise InvariantError("max_level does not match stored levels")
        budget = {0: self._params.m0}
        for row in range(n):
            level = int(self._levels[row])
            if level >= 1 and self._up_off[row] < 0:
                raise InvariantError(f"row {row} missing upper-layer storage")
            for layer in range(level + 1):
                cap = budget.get(layer, self._params.m)
                nbrs = self._layer_lists(row, layer)
                if len(nbrs) > cap:
                    raise InvariantError(
                        f"row {row} layer {layer}: {len(nbrs)} edges exceeds {cap}"
                    )
                seen = set()
                for nb in nbrs:
                    nb = int(nb)
                    if not 0 <= nb < n:
                        raise InvariantError(
                            f"row {row} layer {layer}: neighbor row {nb} out of range"
                        )
                    if nb == row:
                        raise InvariantError(f"row {row} layer {layer}: self loop")
                    if nb in seen:
                        raise InvariantError(
                            f"row {row} layer {layer}: duplicate edge to {nb}"
                        )
                    seen.add(nb)
                    if self._levels[nb] < layer:
                        raise InvariantError(
                            f"row {row} layer {layer}: neighbor {nb} absent on layer"
                        )
                    back = self._layer_lists(nb, layer)
                    if row not in back:
                        raise InvariantError(
                            f"asymmetric edge {row}->{nb} on layer {layer}"
                        )

    def layer_connected(self, layer: int = 0) -> bool:
        """True when every node on the layer is reachable from the entry."""
        n = self._n
        if n == 0:
            return True
        members = [r for r in range(n) if self._levels[r] >= layer]
        if not members:
            return True
        start = self._entry if self._levels[self._entry] >= layer else members[0]
        seen = np.zeros(n, dtype=bool)
        seen[start] = True
        stack = [start]
        while stack:
            cur = stack.pop()
            for nb in self._layer_lists(cur, layer):
                nb = int(nb)
                if not seen[nb]:
                    seen[nb] = True
                    stack.append(nb)
        return all(seen[r] for r in members)

    # ------------------------------------------------------------------
    # persistence

    def save(self, path) -> None:
        """Write the full graph so a reload searches identically."""
        p = self._params
        head = struct.pack(
            "<BIIIdQIQqi",
            self._metric_code, p.m, p.m0, p.ef_construction,
            p.level_multiplier, p.rng_seed & 0xFFFFFFFFFFFFFFFF,
            self._dim, self._n, self._entry, self._max_level,
        )
        parts = [head]
        for row in range(self._n):
            level = int(self._levels[row])
            parts.append(struct.pack("<Qi", int(self._ids[row]), level))
            parts.append(self._vectors[row].tobytes())
            for layer in range(level + 1):
                nbrs = self._layer_lists(row, layer)
                parts.append(struct.pack("<H", len(nbrs)))
                parts.append(self._ids[nbrs].astype("<u8").tobytes())
        write_envelope(path, INDEX_MAGIC, INDEX_VERSION, b"".join(parts))

    @classmethod
    def load(cls, path, backend: str = "auto") -> "HnswIndex":
        _, payload = read_envelope(path, INDEX_MAGIC, (INDEX_VERSION,))
        rd = PayloadReader(payload, str(path))
        (metric_code, m, m0, efc, mult, seed, dim, count, entry, max_level) = rd.unpack(
            "<BIIIdQIQqi"
        )
        params = HnswParams(
            m=m, m0=m0, ef_construction=efc, level_multiplier=mult,
            metric=_METRIC_FROM_CODE[metric_code], rng_seed=seed,
        )
        idx = cls(dim, params=params, capacity=max(int(count), 8), backend=backend)

        neighbor_ids: list[list[np.ndarray]] = []
        for row in range(count):
            ext, level = rd.unpack("<Qi")
            vec = np.frombuffer(rd.read(4 * dim), dtype="<f4").copy()
            idx._vectors[row] = vec
            idx._norms[row] = norm_array(vec)
            idx._ids[row] = ext
            idx._levels[row] = level
            if level >= 1:
                if idx._next_up + level > idx._up_cap:
                    idx._grow_upper(idx._next_up + level)
                idx._up_off[row] = idx._next_up
                idx._next_up += level
            else:
                idx._up_off[row] = -1
            per_layer = []
            for _ in range(level + 1):
                (cnt,) = rd.unpack("<H")
                per_layer.append(np.frombuffer(rd.read(8 * cnt), dtype="<u8"))
            neighbor_ids.append(per_layer)
            if ext in idx._row_of_id:
                raise InvariantError(f"{path}: duplicate id {ext} in file")
            idx._row_of_id[int(ext)] = row
        if not rd.at_end():
            raise InvariantError(f"{path}: unexpected data after last node")

        for row, per_layer in enumerate(neighbor_ids):
            for layer, exts in enumerate(per_layer):
                try:
                    rows = np.array(
                        [idx._row_of_id[int(e)] for e in exts], dtype=np.int32
                    )
                except KeyError as exc:
                    raise InvariantError(f"{path}: edge to unknown id {exc}") from None
                if layer == 0:
                    idx._adj0[row, : len(rows)] = rows
                    idx._cnt0[row] = len(rows)
                else:
                    up = idx._up_off[row] + layer - 1
                    idx._adj_up[up, : len(rows)] = rows
                    idx._cnt_up[up] = len(rows)

        idx._n = int(count)
        idx._entry = int(entry)
        idx._max_level = int(max_level)
        # Replay the level draws so future inserts continue the sequence.
        for _ in range(count):
            idx._rng.random()
        return idx


# ----------------------------------------------------------------------
# exact reference search

class BruteForceSearcher:
    """Exhaustive scan over a fixed corpus, the exact baseline.

    Vectors are held as a float64 matrix so one BLAS product per query
    covers the whole corpus. Results use the same (distance, id) order
    as the graph search.
    """

    def __init__(self, vectors: np.ndarray, ids: np.ndarray,
                 metric: DistanceMetric = DistanceMetric.COSINE):
        mat = np.ascontiguousarray(np.asarray(vectors, dtype=np.float64))
        if mat.ndim != 2:
            raise ValueError("expected a 2-D corpus matrix")
        self._mat = mat
        self._ids = np.asarray(ids, dtype=np.uint64)
        if self._ids.shape != (mat.shape[0],):
            raise ValueError("ids must match the corpus row count")
        if len(np.unique(self._ids)) != len(self._ids):
            raise DuplicateIdError("corpus ids must be unique")
        self._metric = metric
        self._norms = np.sqrt(np.einsum("ij,ij->i", mat, mat))
        if metric is DistanceMetric.COSINE and np.any(self._norms == 0.0):
            raise ZeroVectorError("cosine metric cannot score a zero corpus vector")
        self._sq = np.einsum("ij,ij->i", mat, mat)

    @classmethod
    def from_embeddings(cls, corpus: Sequence[Embedding],
                        metric: DistanceMetric = DistanceMetric.COSINE):
        if not corpus:
            raise EmptyIndexError("corpus is empty")
        mat = np.stack([e.values for e in corpus]).astype(np.float64)
        ids = np.array([e.id for e in corpus], dtype=np.uint64)
        return cls(mat, ids, metric)

    def __len__(self) -> int:
        return self._mat.shape[0]

    def distances(self, query) -> np.ndarray:
        q = np.asarray(
            query.values if isinstance(query, Embedding) else query,
            dtype=np.float64,
        )
        if q.shape != (self._mat.shape[1],):
            raise DimensionMismatchError(
                f"corpus is {self._mat.shape[1]}-d, query is {q.shape}"
            )
        if self._metric is DistanceMetric.COSINE:
            qn = math.sqrt(float(q @ q))
            if qn == 0.0:
                raise ZeroVectorError("cosine metric cannot score a zero query")
            return np.clip(1.0 - (self._mat @ q) / (self._norms * qn), 0.0, 2.0)
        d = self._sq - 2.0 * (self._mat @ q) + float(q @ q)
        return np.maximum(d, 0.0)

    def search(self, query, k: int) -> SearchResult:
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        qid = query.id if isinstance(query, Embedding) else None
        dists = self.distances(query)
        n = len(dists)
        take = min(k, n)
        if take < n:
            # argpartition alone may split a tie group at the cut, so pull
            # in every row whose distance matches the boundary value.
            part = np.argpartition(dists, take - 1)[:take]
            bound = dists[part].max()
            cand = np.flatnonzero(dists <= bound)
        else:
            cand = np.arange(n)
        order = cand[np.lexsort((self._ids[cand], dists[cand]))][:take]
        hits = [Hit(int(self._ids[i]), float(dists[i])) for i in order]
        return SearchResult(hits=hits, query_id=qid, partial=take < k)


def brute_force_knn(corpus: Sequence[Embedding], query, k: int,
                    metric: DistanceMetric = DistanceMetric.COSINE) -> SearchResult:
    """Exact k nearest neighbors by scanning the whole corpus."""
    return BruteForceSearcher.from_embeddings(corpus, metric).search(query, k)
