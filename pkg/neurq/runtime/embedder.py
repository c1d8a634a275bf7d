"""Deterministic bag-of-tokens hash embedder."""

from typing import Optional, Sequence

import numpy as np

from neurq.runtime.features import hash_bucket


def token_count(text: Optional[str]) -> int:
    return len(text.split()) if text else 0


def embed(texts: Sequence[Optional[str]], dim: int = 64) -> np.ndarray:
    """L2-normalized sums of hashed token one-hots, one row per text.

    Identical token bags give identical vectors; empty texts embed to zeros.
    """
    vectors = np.zeros((len(texts), dim), dtype=np.float64)
    for i, text in enumerate(texts):
        for token in (text or "").split():
            vectors[i, hash_bucket(token, dim)] += 1.0
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    np.divide(vectors, norms, out=vectors, where=norms > 0)
    return vectors
