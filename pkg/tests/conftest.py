import numpy as np
import pytest

from facepipe import Embedding, FeatureLibrary, build_library


def unit_vectors(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Random directions on the unit sphere, float32 rows."""
    v = rng.normal(size=(n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v.astype(np.float32)


def embeddings_from(matrix: np.ndarray, start_id: int = 0) -> list[Embedding]:
    return [Embedding(values=row, id=start_id + i) for i, row in enumerate(matrix)]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture
def small_library(rng) -> FeatureLibrary:
    vecs = unit_vectors(rng, 32, 12)
    return build_library(
        [(f"person{i:02d}", vecs[i]) for i in range(len(vecs))],
        source_manifest="fixture",
        created_at=1_700_000_000.0,
    )
