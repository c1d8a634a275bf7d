"""Staged ridge pipeline: base model selection, relation modeling, fusion.

The base model is the ridge model re-solved under the penalty picked at
training time. Relation modeling fits a small ridge model over features
that relate each row to the other rows sharing its output key. Fusion
averages the base and relation predictions.
"""

from typing import Any, Optional, Sequence

import numpy as np

from neurq.runtime.ridge import RidgeModel, StageParams, predict, train_ridge


def relation_features(base: Sequence[float], keys: Optional[Sequence[Any]] = None) -> np.ndarray:
    """Per row: base prediction, mean base prediction of its key, log1p(key group size).

    Without keys every row is its own group.
    """
    base = np.asarray(base, dtype=np.float64)
    if keys is None:
        return np.column_stack([base, base, np.full(base.shape, np.log1p(1.0))])
    sums: dict[Any, float] = {}
    counts: dict[Any, int] = {}
    for key, value in zip(keys, base):
        sums[key] = sums.get(key, 0.0) + float(value)
        counts[key] = counts.get(key, 0) + 1
    means = np.array([sums[k] / counts[k] for k in keys])
    sizes = np.log1p(np.array([counts[k] for k in keys], dtype=np.float64))
    return np.column_stack([base, means, sizes])


def staged_base(model: RidgeModel) -> RidgeModel:
    """The model the first stage runs: re-solved under the selected penalty."""
    if model.stage is None:
        return model
    return model.with_lambda(model.stage.base_lambda)


def fit_stages(
    model: RidgeModel,
    rows: Sequence[Sequence[Any]],
    target: Sequence[float],
    base_lambda: float,
    lam: float,
    keys: Optional[Sequence[Any]] = None,
) -> RidgeModel:
    """Attach relation weights fitted on the training rows."""
    base = model.with_lambda(base_lambda).predict_rows(rows)
    relation = train_ridge(relation_features(base, keys), target, lam)
    return model.with_stage(StageParams(base_lambda, relation))


def fuse(model: RidgeModel, base: Sequence[float], keys: Optional[Sequence[Any]]) -> list[float]:
    """Relation modeling and fusion over first-stage predictions.

    A model without fitted stages relates each row to its key mean directly.
    """
    base = np.asarray(base, dtype=np.float64)
    if base.size == 0:
        return []
    features = relation_features(base, keys)
    if model.stage is None:
        related = features[:, 1]
    else:
        related = predict(model.stage.relation, features)
    return [float(v) for v in 0.5 * base + 0.5 * related]


def staged_predict(model: RidgeModel, rows: Sequence[Sequence[Any]], keys: Sequence[Any]) -> list[float]:
    return fuse(model, staged_base(model).predict_rows(rows), keys)
