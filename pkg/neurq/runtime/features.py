"""Row-to-matrix feature encoding.

Numeric columns pass through (NULL -> 0), booleans become 0/1 and text
columns are feature-hashed into ``buckets`` one-hot slots. Every column owns
a contiguous span of matrix dimensions so a model can be sliced by column.
"""

import hashlib
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np


def hash_bucket(value: Any, buckets: int) -> int:
    """Stable bucket of a categorical value."""
    digest = hashlib.blake2b(str(value).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


def infer_kinds(rows: Sequence[Sequence[Any]], width: int) -> tuple[str, ...]:
    """Encoding kind per column from the first non-NULL value: numeric, bool or text."""
    kinds = []
    for pos in range(width):
        kind = "numeric"
        for row in rows:
            value = row[pos]
            if value is None:
                continue
            if isinstance(value, bool):
                kind = "bool"
            elif isinstance(value, str):
                kind = "text"
            break
        kinds.append(kind)
    return tuple(kinds)


@dataclass(frozen=True)
class FeatureEncoder:
    columns: tuple[str, ...]
    kinds: tuple[str, ...]
    buckets: int = 32

    def width(self, kind: str) -> int:
        return self.buckets if kind == "text" else 1

    @property
    def dim(self) -> int:
        return sum(self.width(k) for k in self.kinds)

    def spans(self) -> dict[str, range]:
        """Matrix dimensions owned by each column."""
        out, start = {}, 0
        for name, kind in zip(self.columns, self.kinds):
            out[name] = range(start, start + self.width(kind))
            start += self.width(kind)
        return out

    def encode(self, rows: Sequence[Sequence[Any]]) -> np.ndarray:
        """Encode rows whose values are aligned with ``columns``."""
        matrix = np.zeros((len(rows), self.dim), dtype=np.float64)
        offsets = [span.start for span in self.spans().values()]
        for i, row in enumerate(rows):
            for pos, (kind, offset) in enumerate(zip(self.kinds, offsets)):
                value = row[pos]
                if value is None:
                    continue
                if kind == "text":
                    matrix[i, offset + hash_bucket(value, self.buckets)] = 1.0
                else:
                    matrix[i, offset] = float(value)
        return matrix

    def subset(self, columns: Sequence[str]) -> "FeatureEncoder":
        kinds = dict(zip(self.columns, self.kinds))
        return FeatureEncoder(tuple(columns), tuple(kinds[c] for c in columns), self.buckets)
