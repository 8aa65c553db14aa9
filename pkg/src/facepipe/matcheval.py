"""Threshold-based face verification and identification scoring.

Verification compares two embeddings by cosine similarity against a
threshold (accept when similarity >= threshold, so the boundary accepts).
The sweep evaluates a labeled pair list over several thresholds at once;
pairs where either embedding is missing, or has zero norm, are counted as
"no face" rather than correct or wrong. Identification takes the top
retrieval hit and applies the same threshold rule, answering unknown below
it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ParseError
from .hnsw import HnswIndex
from .library import read_embedding_file
from .model import Embedding, cosine_similarity, cosine_similarity_arrays, norm_array
from .secondary import SecondaryConfig, secondary_search


@dataclass(frozen=True)
class PairRecord:
    """One labeled verification pair; a None side means no face was found."""

    emb_a: Optional[Embedding]
    emb_b: Optional[Embedding]
    same_identity: bool


@dataclass(frozen=True)
class SweepRow:
    """Outcome counts for one threshold over a fixed pair list.

    ``accuracy`` is (same_correct + diff_correct) / total pairs, with
    noface pairs in the denominator but never in the correct counts.
    """

    threshold: float
    same_correct: int
    same_wrong: int
    diff_correct: int
    diff_wrong: int
    noface: int
    accuracy: float

    @property
    def total(self) -> int:
        return self.same_correct + self.same_wrong + self.diff_correct + self.diff_wrong + self.noface


def verify_pair(a: Embedding, b: Embedding, threshold: float) -> bool:
    """Accept the pair iff cosine similarity is at least ``threshold``."""
    return cosine_similarity(a, b) >= threshold


def _pair_similarity(pair: PairRecord) -> Optional[float]:
    """Similarity of a pair, or None when either side counts as no face."""
    if pair.emb_a is None or pair.emb_b is None:
        return None
    if norm_array(pair.emb_a.values) == 0.0 or norm_array(pair.emb_b.values) == 0.0:
        return None
    return cosine_similarity(pair.emb_a, pair.emb_b)


def threshold_sweep(
    pairs: Sequence[PairRecord],
    thresholds: Sequence[float],
) -> list[SweepRow]:
    """Score every threshold against the same pair list.

    Similarities are computed once per pair, so rows differ only in how
    the threshold splits them and the result does not depend on pair
    order.
    """
    if not pairs:
        raise ValueError("threshold_sweep needs at least one pair")
    if not len(thresholds):
        raise ValueError("threshold_sweep needs at least one threshold")
    sims = [_pair_similarity(p) for p in pairs]
    rows = []
    for threshold in thresholds:
        threshold = float(threshold)
        same_correct = same_wrong = diff_correct = diff_wrong = noface = 0
        for pair, sim in zip(pairs, sims):
            if sim is None:
                noface += 1
            elif sim >= threshold:
                if pair.same_identity:
                    same_correct += 1
                else:
                    diff_wrong += 1
            else:
                if pair.same_identity:
                    same_wrong += 1
                else:
                    diff_correct += 1
        rows.append(
            SweepRow(
                threshold=threshold,
                same_correct=same_correct,
                same_wrong=same_wrong,
                diff_correct=diff_correct,
                diff_wrong=diff_wrong,
                noface=noface,
                accuracy=(same_correct + diff_correct) / len(pairs),
            )
        )
    return rows


def identify(
    query: Union[Embedding, np.ndarray],
    index: HnswIndex,
    labels: dict[int, str],
    threshold: float,
    secondary: Optional[SecondaryConfig] = None,
) -> Optional[str]:
    """Name the query from its nearest library hit, or None when unsure.

    Retrieval is a plain top-1 search, or a two-pass search when a
    secondary config is given. The decision always uses cosine similarity
    between the query and the hit's stored vector, applying the same
    inclusive threshold as verification.
    """
    if secondary is not None:
        result = secondary_search(index, query, secondary)
    else:
        result = index.knn_search(query, 1)
    if not result.hits:
        return None
    top = result.hits[0]
    q = query.values if isinstance(query, Embedding) else np.asarray(query)
    sim = min(max(cosine_similarity_arrays(q, index.vector(top.id)), -1.0), 1.0)
    if sim >= threshold:
        return labels[top.id]
    return None


# ----------------------------------------------------------------------
# pair list files: "<emb_file_a> <emb_file_b> <0|1>" per line, "-" = no face

def read_pairs_file(path) -> list[PairRecord]:
    """Load a labeled pair list; embedding paths resolve against the file."""
    path = Path(path)
    base = path.parent
    pairs = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
        if fields[2] not in ("0", "1"):
            raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {fields[2]!r}")
        embs = []
        for field in fields[:2]:
            if field == "-":
                embs.append(None)
            else:
                emb_path = Path(field)
                if not emb_path.is_absolute():
                    emb_path = base / emb_path
                embs.append(Embedding(values=read_embedding_file(emb_path), id=0))
        pairs.append(PairRecord(emb_a=embs[0], emb_b=embs[1], same_identity=fields[2] == "1"))
    if not pairs:
        raise ParseError(f"{path}: no pairs found")
    return pairs
