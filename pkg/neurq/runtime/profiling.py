"""Validation splits and feature masks for quality profiling."""

from itertools import combinations
from typing import Optional, Sequence

Split = tuple[list[int], list[int]]


def splits(n: int, holdout_fraction: float, min_holdout_rows: int, max_folds: int) -> list[Split]:
    """(train, test) row positions for validating a model on ``n`` rows.

    A trailing holdout is used when it has at least ``min_holdout_rows``
    rows; smaller data is cross-validated over interleaved folds. Fewer
    than two rows cannot be validated.
    """
    holdout = int(n * holdout_fraction)
    if holdout >= min_holdout_rows:
        cut = n - holdout
        return [(list(range(cut)), list(range(cut, n)))]
    k = min(max_folds, n)
    if k < 2:
        return []
    return [
        ([i for i in range(n) if i % k != fold], [i for i in range(n) if i % k == fold])
        for fold in range(k)
    ]


def profiled_masks(features: Sequence[str], max_features: int) -> list[tuple[str, ...]]:
    """Masks whose quality is measured at model creation.

    Every non-empty subset up to ``max_features`` columns; wider models get
    the full mask, each single column and each leave-one-out mask.
    """
    features = tuple(features)
    if len(features) <= max_features:
        return [m for size in range(1, len(features) + 1) for m in combinations(features, size)]
    masks = [features, *((c,) for c in features)]
    masks += [tuple(c for c in features if c != drop) for drop in features]
    return list(dict.fromkeys(masks))


def parse_quality_key(key: str) -> tuple[str, frozenset[str]]:
    variant, _, mask = key.partition("|")
    return variant, frozenset(mask.split(",")) if mask else frozenset()


def best_submask(profile: dict[str, float], variant: str, mask: Sequence[str]) -> Optional[float]:
    """Best profiled quality of ``variant`` over masks contained in ``mask``."""
    allowed = set(mask)
    best: Optional[float] = None
    for key, value in profile.items():
        kind, cols = parse_quality_key(key)
        if kind == variant and cols and cols <= allowed:
            best = value if best is None else max(best, value)
    return best
