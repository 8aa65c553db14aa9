"""Feature library: labeled embeddings, bulk ingestion, binary persistence.

A library is an immutable ordered collection of (id, identity, embedding)
records with ids assigned sequentially from 0. It remembers when and from
what it was built, persists to a checksummed binary file (magic ``FLIB``),
and can be turned into a search index plus an id-to-identity map.

Text ingestion accepts one embedding per file (whitespace-separated
components) or a bulk file with ``label v1 v2 ... vd`` per line.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ._binio import PayloadReader, read_envelope, write_envelope
from .errors import DimensionMismatchError, ParseError
from .hnsw import HnswIndex, HnswParams
from .model import Embedding

LIBRARY_MAGIC = b"FLIB"
LIBRARY_VERSION = 1

_HEADER = struct.Struct("<IQd")  # dimension, count, created_at
_U32 = struct.Struct("<I")
_REC = struct.Struct("<QI")  # record id, label byte length


@dataclass(frozen=True)
class LibraryRecord:
    identity: str
    embedding: Embedding

    @property
    def id(self) -> int:
        return self.embedding.id


@dataclass(frozen=True)
class FeatureLibrary:
    dimension: int
    records: tuple[LibraryRecord, ...]
    created_at: float
    source_manifest: str = ""

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not self.records:
            raise ValueError("library must contain at least one record")
        for i, rec in enumerate(self.records):
            if rec.id != i:
                raise ValueError(f"record {i} carries id {rec.id}; ids must be sequential")
            if rec.embedding.dimension != self.dimension:
                raise DimensionMismatchError(
                    f"record {i} has dimension {rec.embedding.dimension}, "
                    f"library is {self.dimension}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def identity_of(self, record_id: int) -> str:
        return self.records[record_id].identity

    def label_map(self) -> dict[int, str]:
        return {rec.id: rec.identity for rec in self.records}

    def vectors(self) -> np.ndarray:
        """All embeddings stacked as an (n, dimension) float32 matrix."""
        return np.stack([rec.embedding.values for rec in self.records])


def build_library(
    entries: Sequence[tuple[str, Union[Embedding, np.ndarray, Sequence[float]]]],
    source_manifest: str = "",
    created_at: Optional[float] = None,
) -> FeatureLibrary:
    """Assemble a library from (identity, embedding) pairs.

    Ids are assigned by position starting at 0; any id on an incoming
    Embedding is replaced. All entries must share one dimension.
    """
    if not entries:
        raise ValueError("cannot build an empty library")
    records = []
    dimension = None
    for i, (identity, emb) in enumerate(entries):
        identity = str(identity)
        if not identity:
            raise ValueError(f"entry {i} has an empty identity")
        values = emb.values if isinstance(emb, Embedding) else emb
        embedding = Embedding(values=values, id=i, label=identity)
        if dimension is None:
            dimension = embedding.dimension
        elif embedding.dimension != dimension:
            raise DimensionMismatchError(
                f"entry {i} has dimension {embedding.dimension}, expected {dimension}"
            )
        records.append(LibraryRecord(identity=identity, embedding=embedding))
    return FeatureLibrary(
        dimension=dimension,
        records=tuple(records),
        created_at=time.time() if created_at is None else float(created_at),
        source_manifest=source_manifest,
    )


def index_library(
    library: FeatureLibrary,
    params: HnswParams = HnswParams(),
    backend: str = "auto",
) -> tuple[HnswIndex, dict[int, str]]:
    """Build a search index over the library.

    Returns the index and the id-to-identity map needed to read results.
    """
    index = HnswIndex(
        dimension=library.dimension,
        params=params,
        capacity=len(library),
        backend=backend,
    )
    for rec in library.records:
        index.insert(rec.embedding)
    return index, library.label_map()


# ----------------------------------------------------------------------
# binary persistence

def save_library(library: FeatureLibrary, path) -> None:
    parts = [_HEADER.pack(library.dimension, len(library), library.created_at)]
    manifest = library.source_manifest.encode("utf-8")
    parts.append(_U32.pack(len(manifest)))
    parts.append(manifest)
    for rec in library.records:
        label = rec.identity.encode("utf-8")
        parts.append(_REC.pack(rec.id, len(label)))
        parts.append(label)
        parts.append(rec.embedding.values.astype("<f4").tobytes())
    write_envelope(path, LIBRARY_MAGIC, LIBRARY_VERSION, b"".join(parts))


def load_library(path) -> FeatureLibrary:
    _, payload = read_envelope(path, LIBRARY_MAGIC, (LIBRARY_VERSION,))
    r = PayloadReader(payload, str(path))
    dimension, count, created_at = r.unpack(_HEADER)
    (manifest_len,) = r.unpack(_U32)
    manifest = r.read(manifest_len).decode("utf-8")
    records = []
    for _ in range(count):
        rec_id, label_len = r.unpack(_REC)
        identity = r.read(label_len).decode("utf-8")
        values = np.frombuffer(r.read(dimension * 4), dtype="<f4")
        records.append(
            LibraryRecord(
                identity=identity,
                embedding=Embedding(values=values, id=rec_id, label=identity),
            )
        )
    r.require_end()
    return FeatureLibrary(
        dimension=dimension,
        records=tuple(records),
        created_at=created_at,
        source_manifest=manifest,
    )


# ----------------------------------------------------------------------
# text ingestion

def read_embedding_file(path) -> np.ndarray:
    """One embedding as whitespace-separated components, any line layout."""
    fields = Path(path).read_text().split()
    if not fields:
        raise ParseError(f"{path}: empty embedding file")
    try:
        values = np.asarray([float(f) for f in fields], dtype=np.float32)
    except ValueError:
        raise ParseError(f"{path}: non-numeric embedding component") from None
    if not np.all(np.isfinite(values)):
        raise ParseError(f"{path}: embedding components must be finite")
    return values


def read_bulk_embeddings(path) -> list[tuple[str, np.ndarray]]:
    """Bulk file: one ``label v1 v2 ... vd`` record per line.

    Blank lines and ``#`` comments are skipped; every record must have the
    same dimension.
    """
    out: list[tuple[str, np.ndarray]] = []
    dimension = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 2:
            raise ParseError(f"{path}:{lineno}: expected a label and components")
        label = fields[0]
        try:
            values = np.asarray([float(f) for f in fields[1:]], dtype=np.float32)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric component") from None
        if not np.all(np.isfinite(values)):
            raise ParseError(f"{path}:{lineno}: components must be finite")
        if dimension is None:
            dimension = len(values)
        elif len(values) != dimension:
            raise ParseError(
                f"{path}:{lineno}: dimension {len(values)} does not match "
                f"earlier records ({dimension})"
            )
        out.append((label, values))
    if not out:
        raise ParseError(f"{path}: no records found")
    return out
