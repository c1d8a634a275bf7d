"""Mock generative model.

The number of generated tokens is drawn around ``len * token_expansion``
with relative spread ``expansion_jitter``, from an RNG seeded by the run
seed and the input text. The same draw sets the billed length of the item
and the length of its output, so outputs and costs are reproducible per
input.
"""

import hashlib
from typing import Optional, Sequence

import numpy as np

from neurq.runtime.costs import CostProfile
from neurq.runtime.embedder import token_count

VOCABULARY = 512


def _rng(seed: int, text: str) -> np.random.Generator:
    digest = hashlib.blake2b(f"{seed}:{text}".encode(), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def _draw_length(profile: CostProfile, text: str, rng: np.random.Generator) -> int:
    mean = token_count(text) * profile.token_expansion
    if profile.expansion_jitter > 0:
        mean *= max(0.0, 1.0 + profile.expansion_jitter * rng.standard_normal())
    return int(round(mean))


def decode_length(profile: CostProfile, text: Optional[str], seed: int = 0) -> int:
    """Generated tokens for ``text``; deterministic per (seed, text)."""
    text = text or ""
    return _draw_length(profile, text, _rng(seed, text))


def generate(texts: Sequence[Optional[str]], profile: CostProfile, seed: int = 0) -> list[str]:
    """One generated string per input text."""
    outputs = []
    for text in texts:
        text = text or ""
        rng = _rng(seed, text)
        n = _draw_length(profile, text, rng)
        ids = rng.integers(0, VOCABULARY, size=n)
        outputs.append(" ".join(f"tok{i}" for i in ids))
    return outputs
