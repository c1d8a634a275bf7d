"""Closed-form ridge regression.

The intercept is the last weight and is not regularized. Payloads keep the
Gram matrix and ``X^T y`` of the training data, so a variant restricted to
a subset of columns is re-solved exactly without the original rows.
"""

import io
import json
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from neurq.errors import ArityMismatch, DegenerateInput, EmptyMask
from neurq.runtime.features import FeatureEncoder


def _augment(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _penalty(dim: int, lam: float) -> np.ndarray:
    diag = np.full(dim + 1, lam)
    diag[-1] = 0.0
    return np.diag(diag)


def solve_normal(gram: np.ndarray, xty: np.ndarray, lam: float) -> np.ndarray:
    """Solve ``(G + lam * I') w = X^T y`` where I' skips the intercept."""
    return np.linalg.solve(gram + _penalty(gram.shape[0] - 1, lam), xty)


def train_ridge(features: np.ndarray, target: Sequence[float], lam: float) -> np.ndarray:
    """Weights (d + 1, intercept last) minimizing ||Xw - y||^2 + lam * ||w[:-1]||^2.

    Raises:
        DegenerateInput: when there are no rows
    """
    y = np.asarray(target, dtype=np.float64)
    if y.size == 0:
        raise DegenerateInput("ridge training needs at least one row")
    if lam <= 0:
        raise DegenerateInput(f"ridge lambda must be > 0, got {lam}")
    xa = _augment(features)
    return solve_normal(xa.T @ xa, xa.T @ y, lam)


def predict(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    if features.shape[1] != weights.shape[0] - 1:
        raise ArityMismatch(weights.shape[0] - 1, features.shape[1])
    return features @ weights[:-1] + weights[-1]


def quality(predictions: np.ndarray, target: Sequence[float]) -> float:
    """max(0, 1 - RMSE / std(target)) on a holdout."""
    y = np.asarray(target, dtype=np.float64)
    if y.size == 0:
        raise DegenerateInput("quality needs a non-empty holdout")
    rmse = float(np.sqrt(np.mean((np.asarray(predictions) - y) ** 2)))
    std = float(np.std(y))
    if std == 0.0:
        return 1.0 if rmse == 0.0 else 0.0
    return max(0.0, 1.0 - rmse / std)


@dataclass(frozen=True, eq=False)
class StageParams:
    """Fitted parameters of the staged pipeline.

    ``relation`` weights the relation features (base prediction, mean base
    prediction of the key, log1p of the key group size) plus an intercept.
    """

    base_lambda: float
    relation: np.ndarray


@dataclass(frozen=True, eq=False)
class RidgeModel:
    """A trained ridge regressor over encoded columns."""

    encoder: FeatureEncoder
    lam: float
    weights: np.ndarray
    gram: np.ndarray
    xty: np.ndarray
    stage: Optional[StageParams] = None

    @classmethod
    def fit(cls, encoder: FeatureEncoder, rows: Sequence[Sequence[Any]], target: Sequence[float], lam: float) -> "RidgeModel":
        y = np.asarray([0.0 if v is None else float(v) for v in target])
        if y.size == 0:
            raise DegenerateInput("ridge training needs at least one row")
        xa = _augment(encoder.encode(rows))
        gram, xty = xa.T @ xa, xa.T @ y
        return cls(encoder, lam, solve_normal(gram, xty, lam), gram, xty)

    @property
    def columns(self) -> tuple[str, ...]:
        return self.encoder.columns

    def predict_rows(self, rows: Sequence[Sequence[Any]]) -> np.ndarray:
        if rows and len(rows[0]) != len(self.columns):
            raise ArityMismatch(len(self.columns), len(rows[0]))
        return predict(self.weights, self.encoder.encode(rows))

    def slice(self, mask: Sequence[str]) -> "RidgeModel":
        """Variant using only ``mask`` columns, identical to training on them from scratch."""
        mask = tuple(c for c in self.columns if c in set(mask))
        if not mask:
            raise EmptyMask("model slice needs at least one permitted column")
        if mask == self.columns:
            return self
        spans = self.encoder.spans()
        dims = [d for c in mask for d in spans[c]] + [self.gram.shape[0] - 1]
        gram = self.gram[np.ix_(dims, dims)]
        xty = self.xty[dims]
        return RidgeModel(
            self.encoder.subset(mask), self.lam, solve_normal(gram, xty, self.lam), gram, xty, self.stage
        )

    def with_lambda(self, lam: float) -> "RidgeModel":
        """The same training data re-solved under another penalty."""
        if lam == self.lam:
            return self
        if lam <= 0:
            raise DegenerateInput(f"ridge lambda must be > 0, got {lam}")
        return RidgeModel(self.encoder, lam, solve_normal(self.gram, self.xty, lam), self.gram, self.xty, self.stage)

    def with_stage(self, stage: StageParams) -> "RidgeModel":
        return RidgeModel(self.encoder, self.lam, self.weights, self.gram, self.xty, stage)

    def to_bytes(self) -> bytes:
        meta = {
            "columns": list(self.encoder.columns),
            "kinds": list(self.encoder.kinds),
            "buckets": self.encoder.buckets,
            "lambda": self.lam,
        }
        arrays = {"weights": self.weights, "gram": self.gram, "xty": self.xty}
        if self.stage is not None:
            meta["base_lambda"] = self.stage.base_lambda
            arrays["relation"] = self.stage.relation
        buffer = io.BytesIO()
        np.savez(buffer, meta=np.array(json.dumps(meta)), **arrays)
        return buffer.getvalue()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "RidgeModel":
        with np.load(io.BytesIO(payload), allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            encoder = FeatureEncoder(tuple(meta["columns"]), tuple(meta["kinds"]), int(meta["buckets"]))
            stage = None
            if "relation" in data.files:
                stage = StageParams(float(meta["base_lambda"]), data["relation"])
            return cls(encoder, float(meta["lambda"]), data["weights"], data["gram"], data["xty"], stage)

    @property
    def size_mb(self) -> float:
        return (self.weights.nbytes + self.gram.nbytes + self.xty.nbytes) / 2**20
