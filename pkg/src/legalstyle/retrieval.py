"""Exact cosine-similarity retrieval over negative exemplar embeddings.

The index stores unit-normalized vectors and scans linearly: pool sizes
make exactness affordable, and tests can compare against a brute-force
oracle pair for pair.  Ties break toward the lower pair id.
"""

from __future__ import annotations

import numpy as np

from .errors import IndexBuildError, MissingPair, ZeroVector
from .experience import Exemplar, ExperiencePools
from .gateway import EmbeddingVector


class VectorIndex:
    def __init__(self, pair_ids: np.ndarray, matrix: np.ndarray, pools_fingerprint: str):
        self.pair_ids = pair_ids
        self.matrix = matrix  # unit-normalized rows
        self.pools_fingerprint = pools_fingerprint

    def __len__(self) -> int:
        return len(self.pair_ids)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]


def build_index(pools: ExperiencePools) -> VectorIndex:
    if len(pools) == 0:
        raise IndexBuildError("cannot index empty pools")
    dims = {len(e.embedding) for e in pools.negatives}
    if len(dims) != 1:
        raise IndexBuildError(f"mixed embedding dimensions: {sorted(dims)}")
    matrix = np.array([e.embedding for e in pools.negatives], dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0):
        raise IndexBuildError("zero-norm embedding in negative pool")
    matrix = matrix / norms[:, None]
    pair_ids = np.array([e.pair_id for e in pools.negatives], dtype=np.int64)
    return VectorIndex(pair_ids, matrix, pools.fingerprint())


def top_similar(index: VectorIndex, query: EmbeddingVector, y: int) -> list[int]:
    """Pair ids of the y most cosine-similar negatives, descending."""
    if y < 1:
        raise ValueError(f"y must be >= 1, got {y}")
    q = np.asarray(query.values, dtype=np.float64)
    if q.shape[0] != index.dimension:
        raise ValueError(f"query dimension {q.shape[0]} != index dimension {index.dimension}")
    norm = np.linalg.norm(q)
    if norm == 0:
        raise ZeroVector("cosine similarity undefined for zero-norm query")
    sims = index.matrix @ (q / norm)
    order = sorted(range(len(index)), key=lambda i: (-sims[i], index.pair_ids[i]))
    return [int(index.pair_ids[i]) for i in order[: min(y, len(index))]]


def with_positives(pools: ExperiencePools, pair_ids: list[int]) -> list[tuple[Exemplar, Exemplar]]:
    """(positive, negative) exemplar pairs in the given id order."""
    out = []
    for pid in pair_ids:
        if not 0 <= pid < len(pools):
            raise MissingPair(f"pair id {pid} not in pools of size {len(pools)}")
        out.append((pools.positives[pid], pools.negatives[pid]))
    return out
