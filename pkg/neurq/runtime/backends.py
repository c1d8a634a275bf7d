"""Pluggable model backends and the runtime that manages them.

Backends implement one model kind each:
- RidgeBackend: closed-form ridge over hashed features (AI-Train + AI-Infer)
- EmbedderBackend: deterministic hash embedder
- GenerativeBackend: seeded mock generator with token-dependent cost

ModelRuntime owns the backends, decodes and slices model payloads and
caches sliced variants as OptimizerState entries.
"""

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Optional, Sequence

import numpy as np
import structlog

from neurq.cache import CacheKey, CacheKind, CacheManager
from neurq.catalog import ModelRecord, quality_key
from neurq.errors import ArityMismatch, DegenerateInput, EmptyMask, ModelRuntimeError
from neurq.runtime import costs
from neurq.runtime.costs import CostProfile
from neurq.runtime.embedder import embed, token_count
from neurq.runtime.features import FeatureEncoder, infer_kinds
from neurq.runtime.generative import decode_length, generate
from neurq.runtime.profiling import Split, best_submask, profiled_masks, splits
from neurq.runtime.ridge import RidgeModel, predict, quality
from neurq.runtime.staged import fit_stages, fuse, staged_base, staged_predict

if TYPE_CHECKING:
    from neurq.config.types import NeurqConfig

logger = structlog.get_logger(__name__)

VARIANTS = ("direct", "staged")


@dataclass
class InferResult:
    """Outputs of one inference batch and its simulated cost."""

    outputs: list[Any]
    cost: float
    lengths: list[int] = field(default_factory=list)


class ModelBackend(ABC):
    """Base class for one model kind.

    Subclasses decode payloads into model objects and predict over rows
    whose values are aligned with the model's (masked) feature columns.
    """

    kind: str = ""

    def __init__(self, profile: CostProfile, seed: int = 0):
        self.profile = profile
        self.seed = seed

    @abstractmethod
    def load(self, payload: bytes, features: Sequence[str]) -> Any:
        """Decode a payload into a model object."""
        pass

    @abstractmethod
    def predict(self, model: Any, rows: Sequence[Sequence[Any]]) -> list[Any]:
        pass

    def lengths(self, rows: Sequence[Sequence[Any]]) -> list[int]:
        """Input length of each item (whitespace tokens of its text features)."""
        return [max(1, sum(token_count(v) for v in row if isinstance(v, str))) for row in rows]

    def slice(self, model: Any, mask: Sequence[str]) -> Any:
        return model

    def infer(self, model: Any, rows: Sequence[Sequence[Any]]) -> InferResult:
        lengths = self.lengths(rows)
        return InferResult(self.predict(model, rows), costs.batch_cost(self.profile, lengths), lengths)


class RidgeBackend(ModelBackend):
    kind = "ridge_regressor"

    def load(self, payload: bytes, features: Sequence[str]) -> RidgeModel:
        if not payload:
            raise ModelRuntimeError("ridge model has no trained weights")
        return RidgeModel.from_bytes(payload)

    def predict(self, model: RidgeModel, rows: Sequence[Sequence[Any]]) -> list[float]:
        return [float(v) for v in model.predict_rows(rows)]

    def lengths(self, rows: Sequence[Sequence[Any]]) -> list[int]:
        return [len(row) for row in rows]

    def slice(self, model: RidgeModel, mask: Sequence[str]) -> RidgeModel:
        return model.slice(mask)


class _TextBackend(ModelBackend):
    """Shared plumbing of text models: features are concatenated per row."""

    def load(self, payload: bytes, features: Sequence[str]) -> tuple[str, ...]:
        return tuple(features)

    def slice(self, model: tuple[str, ...], mask: Sequence[str]) -> tuple[str, ...]:
        return tuple(c for c in model if c in set(mask))

    @staticmethod
    def texts(model: tuple[str, ...], rows: Sequence[Sequence[Any]]) -> list[str]:
        if rows and len(rows[0]) != len(model):
            raise ArityMismatch(len(model), len(rows[0]))
        return [" ".join(v for v in row if isinstance(v, str)) for row in rows]


class EmbedderBackend(_TextBackend):
    kind = "hash_embedder"

    def __init__(self, profile: CostProfile, seed: int = 0, dim: int = 64):
        super().__init__(profile, seed)
        self.dim = dim

    def predict(self, model, rows) -> list[tuple[float, ...]]:
        return [tuple(float(x) for x in v) for v in embed(self.texts(model, rows), self.dim)]


class GenerativeBackend(_TextBackend):
    kind = "generative_mock"

    def predict(self, model, rows) -> list[str]:
        return generate(self.texts(model, rows), self.profile, self.seed)

    def lengths(self, rows: Sequence[Sequence[Any]]) -> list[int]:
        """Generated tokens per item, the unit the per-token term bills."""
        texts = [" ".join(v for v in row if isinstance(v, str)) for row in rows]
        return [decode_length(self.profile, text, self.seed) for text in texts]


class ModelRuntime:
    """Backends by kind plus model training, slicing and profiling.

    Args:
        config: Settings (profiles, hash buckets, embedding dim, ridge lambda)
        cache: Optional cache for sliced variants (OptimizerState entries)
    """

    def __init__(self, config: "NeurqConfig", cache: Optional[CacheManager] = None):
        self.config = config
        self.cache = cache
        self.lam = config.runtime.ridge_lambda
        self.buckets = config.runtime.hash_buckets
        models = config.models
        self.backends: dict[str, ModelBackend] = {}
        for backend_cls in (RidgeBackend, EmbedderBackend, GenerativeBackend):
            if backend_cls.kind not in models.profiles:
                continue
            profile = models.profiles[backend_cls.kind]
            if backend_cls is EmbedderBackend:
                self.backends[backend_cls.kind] = EmbedderBackend(
                    profile, config.seed, config.runtime.embedding_dim
                )
            else:
                self.backends[backend_cls.kind] = backend_cls(profile, config.seed)
        self._decoded: dict[tuple[str, int], Any] = {}
        self.slice_hits = 0
        self.slice_misses = 0

    def backend(self, kind: str) -> ModelBackend:
        try:
            return self.backends[kind]
        except KeyError:
            raise ModelRuntimeError(f"no backend for model kind '{kind}'") from None

    # -- training --

    def train(self, columns: Sequence[str], rows: Sequence[Sequence[Any]], target: Sequence[Any]) -> RidgeModel:
        """AI-Train: fit a ridge model on ``rows`` (aligned with ``columns``), stages included."""
        y = [0.0 if v is None else float(v) for v in target]
        model = self._fit(columns, rows, y)
        return fit_stages(model, rows, y, self._select_lambda(columns, rows, y), self.lam)

    def _fit(self, columns: Sequence[str], rows: Sequence[Sequence[Any]], y: Sequence[float]) -> RidgeModel:
        encoder = FeatureEncoder(tuple(columns), infer_kinds(rows, len(columns)), self.buckets)
        return RidgeModel.fit(encoder, rows, y, self.lam)

    def _splits(self, n: int) -> list[Split]:
        rt = self.config.runtime
        return splits(n, rt.holdout_fraction, rt.min_holdout_rows, rt.max_folds)

    def _select_lambda(self, columns: Sequence[str], rows: Sequence[Sequence[Any]], y: Sequence[float]) -> float:
        """Base model selection: the penalty with the best validated quality."""
        lambdas = self.config.models.base_lambdas
        folds = self._splits(len(rows))
        if len(lambdas) == 1 or not folds:
            return min(lambdas, key=lambda v: abs(v - self.lam))
        predicted = {lam: np.zeros(len(rows)) for lam in lambdas}
        tested: list[int] = []
        for train_idx, test_idx in folds:
            model = self._fit(columns, [rows[i] for i in train_idx], [y[i] for i in train_idx])
            matrix = model.encoder.encode([rows[i] for i in test_idx])
            for lam in lambdas:
                predicted[lam][test_idx] = predict(model.with_lambda(lam).weights, matrix)
            tested += test_idx
        truth = [y[i] for i in tested]
        scores = {lam: quality(predicted[lam][tested], truth) for lam in lambdas}
        return max(lambdas, key=scores.__getitem__)

    def create_model(
        self,
        name: str,
        kind: str,
        features: Sequence[str],
        rows: Sequence[Sequence[Any]],
        target_column: Optional[str] = None,
        target: Sequence[Any] = (),
        table: Optional[str] = None,
    ) -> ModelRecord:
        """Build a ModelRecord for ``CREATE MODEL``.

        Ridge models are profiled for both variants over the masks from
        ``profiled_masks``, then refit on all rows.
        """
        backend = self.backend(kind)
        payload = b""
        qualities: dict[str, float] = {}
        if kind == RidgeBackend.kind:
            if not rows:
                raise DegenerateInput(f"model {name} has no training rows")
            qualities = self.profile_variants(features, rows, target)
            payload = self.train(features, rows, target).to_bytes()
        logger.debug("model_built", model=name, kind=kind, profiled=len(qualities))
        return ModelRecord(
            name=name,
            kind=kind,
            feature_columns=tuple(features),
            target_column=target_column,
            table=table,
            weights=payload,
            cost_profile=backend.profile,
            quality_profile=qualities,
        )

    def profile_variants(
        self, features: Sequence[str], rows: Sequence[Sequence[Any]], target: Sequence[Any]
    ) -> dict[str, float]:
        """Validated quality per (variant, mask), keyed by ``quality_key``.

        Each fold trains the full pipeline once; mask variants are exact
        slices of it. Predictions are pooled over folds before scoring.
        """
        y = [0.0 if v is None else float(v) for v in target]
        folds = self._splits(len(rows))
        if not folds:
            return {}
        masks = profiled_masks(features, self.config.runtime.profile_max_features)
        predicted = {(v, m): np.zeros(len(rows)) for v in VARIANTS for m in masks}
        tested: list[int] = []
        for train_idx, test_idx in folds:
            model = self.train(features, [rows[i] for i in train_idx], [y[i] for i in train_idx])
            matrix = model.encoder.encode([rows[i] for i in test_idx])
            spans = model.encoder.spans()
            for mask in masks:
                variant = model.slice(mask)
                columns = matrix[:, [d for c in variant.columns for d in spans[c]]]
                direct = predict(variant.weights, columns)
                base = predict(staged_base(variant).weights, columns)
                predicted[("direct", mask)][test_idx] = direct
                predicted[("staged", mask)][test_idx] = fuse(variant, base, None)
            tested += test_idx
        truth = [y[i] for i in tested]
        return {
            quality_key(v, m): quality(values[tested], truth) for (v, m), values in predicted.items()
        }

    # -- inference --

    def load(self, record: ModelRecord) -> Any:
        key = record.key
        if key not in self._decoded:
            self._decoded[key] = self.backend(record.kind).load(record.weights, record.feature_columns)
        return self._decoded[key]

    def slice_for_mask(self, record: ModelRecord, mask: Sequence[str]) -> Any:
        """Model variant that reads only ``mask`` columns.

        Variants are cached as OptimizerState entries keyed by (model, mask),
        so a repeated request does not retrain.

        Raises:
            EmptyMask: if the mask is empty
        """
        mask = tuple(mask)
        if not mask:
            raise EmptyMask(f"empty feature mask for model {record.name}")
        model = self.load(record)
        if mask == tuple(record.feature_columns):
            return model
        key = CacheKey(
            CacheKind.OPTIMIZER_STATE,
            hashlib.blake2b(f"slice:{','.join(mask)}".encode(), digest_size=16).hexdigest(),
            None,
            record.key,
        )
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                self.slice_hits += 1
                return hit.entry.value
        self.slice_misses += 1
        variant = self.backend(record.kind).slice(model, mask)
        if self.cache is not None:
            size = variant.size_mb if isinstance(variant, RidgeModel) else 0.001
            self.cache.put(key, max(size, 1e-6), value=variant)
        logger.debug("model_sliced", model=record.name, version=record.version, mask=list(mask))
        return variant

    def infer(self, kind: str, model: Any, rows: Sequence[Sequence[Any]]) -> InferResult:
        return self.backend(kind).infer(model, rows)

    @staticmethod
    def staged_base(model: Any) -> Any:
        """First-stage model of the staged pipeline; other kinds run unchanged."""
        return staged_base(model) if isinstance(model, RidgeModel) else model

    @staticmethod
    def staged_predict(model: RidgeModel, rows: Sequence[Sequence[Any]], keys: Sequence[Any]) -> list[float]:
        return staged_predict(model, rows, keys)

    @staticmethod
    def fuse(model: RidgeModel, base: Sequence[float], keys: Sequence[Any]) -> list[float]:
        """Relation modeling and fusion over the first-stage predictions of ``keys``."""
        return fuse(model, base, keys)

    def quality_for(self, record: Optional[ModelRecord], variant: str, mask: Sequence[str]) -> float:
        """Profiled quality of (model, variant, mask).

        An unprofiled mask takes the best profiled mask it contains; without
        any profile the configured default per variant applies.
        """
        if record is not None:
            profiled = record.quality_profile.get(quality_key(variant, mask))
            if profiled is not None:
                return profiled
            fallback = best_submask(record.quality_profile, variant, mask)
            if fallback is not None:
                return fallback
        return self.config.models.default_quality.get(variant, 0.0)
