"""Tests for neurq configuration types."""

import json

import jsonschema
import pytest
import yaml

from neurq.config.types import (
    BatchPolicyConfig,
    CacheConfig,
    ExecutorConfig,
    ModelCostConfig,
    NeurqConfig,
    OpCost,
    RuntimeConfig,
)
from neurq.errors import ConfigError, MissingProfile
from neurq.resources import get_default_settings_yaml, get_settings_schema
from neurq.settings import default_settings_dict

TIERS = {
    "t0": {"capacity_mb": 10, "read_cost_ms_per_mb": 0.01},
    "t1": {"capacity_mb": 10, "read_cost_ms_per_mb": 0.1},
    "t2": {"capacity_mb": 10, "read_cost_ms_per_mb": 1.0},
}


class TestDefaults:
    """Tests for the packaged settings."""

    def test_default_values(self, settings):
        assert settings.executor.engines == 4
        assert settings.executor.engine_ids() == ["e0", "e1", "e2", "e3"]
        assert settings.batch_policy.boundaries == [16, 32, 64]
        assert settings.cache.tiers["t1"].read_cost == 0.1
        assert settings.optimizer.objective == "quality>=0.0"
        assert settings.models.default_quality == {"direct": 0.8, "staged": 0.9}

    def test_stages(self, settings):
        """The staged pipeline reads its penalty grid and one profile per stage."""
        models = settings.models
        assert models.base_lambdas == [0.1, 1.0, 10.0]
        assert (models.relation_modeling.batch_setup, models.relation_modeling.per_item) == (2.0, 0.25)
        assert (models.fusion.batch_setup, models.fusion.per_item) == (1.0, 0.1)
        assert settings.models.profile_for("generative_mock").expansion_jitter == 0.25

    def test_profiling_settings(self, settings):
        runtime = settings.runtime
        assert (runtime.min_holdout_rows, runtime.max_folds, runtime.profile_max_features) == (20, 5, 6)

    def test_profiles(self, settings):
        embedder = settings.models.profile_for("hash_embedder")
        assert embedder.padded
        assert embedder.weight_size == 440.0
        with pytest.raises(MissingProfile):
            ModelCostConfig().profile_for("ridge_regressor")

    def test_defaults_validate_against_schema(self):
        """The packaged YAML satisfies the packaged JSON schema."""
        schema = json.loads(get_settings_schema())
        jsonschema.validate(instance=default_settings_dict(), schema=schema)

    def test_schema_rejects_unknown_executor_keys(self):
        schema = json.loads(get_settings_schema())
        data = default_settings_dict()
        data["executor"]["turbo"] = True
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(instance=data, schema=schema)

    def test_write_defaults(self, temp_dir):
        path = temp_dir / "nested" / "settings.yaml"
        NeurqConfig.write_defaults(path)
        assert path.read_text() == get_default_settings_yaml()
        assert NeurqConfig.from_yaml(path) == NeurqConfig.default()


class TestValidation:
    """Invalid sections raise ConfigError."""

    def test_cache_tiers_required(self):
        with pytest.raises(ConfigError):
            NeurqConfig.from_dict({})

    def test_cache_cost_order(self):
        tiers = dict(TIERS, t1={"capacity_mb": 10, "read_cost_ms_per_mb": 2.0})
        with pytest.raises(ConfigError):
            CacheConfig.from_dict({"tiers": tiers})

    def test_cache_capacity(self):
        tiers = dict(TIERS, t2={"capacity_mb": 0, "read_cost_ms_per_mb": 1.0})
        with pytest.raises(ConfigError):
            CacheConfig.from_dict({"tiers": tiers})

    def test_cache_decay(self):
        with pytest.raises(ConfigError):
            CacheConfig.from_dict({"tiers": TIERS, "decay_per_ms": 1.5})

    @pytest.mark.parametrize(
        "data",
        [{"kind": "lifo"}, {"max_items": 0}, {"window_ms": 0}, {"boundaries": [32, 16]}],
    )
    def test_batch_policy(self, data):
        with pytest.raises(ConfigError):
            BatchPolicyConfig.from_dict(data)

    @pytest.mark.parametrize(
        "data",
        [{"engines": 0}, {"token_budget": 0}, {"mode": "warp"}, {"fault_rate": 1.0}, {"overload_threshold": 0}],
    )
    def test_executor(self, data):
        with pytest.raises(ConfigError):
            ExecutorConfig.from_dict(data)

    def test_unknown_model_kind(self):
        with pytest.raises(ConfigError):
            ModelCostConfig.from_dict({"profiles": {"llama": {}}})

    @pytest.mark.parametrize(
        "stages",
        [{"base_lambdas": []}, {"base_lambdas": [1.0, 0.0]}, {"fusion": {"per_item_ms": -1}}],
    )
    def test_stages(self, stages):
        with pytest.raises(ConfigError):
            ModelCostConfig.from_dict({"stages": stages})

    @pytest.mark.parametrize(
        "data",
        [{"holdout_fraction": 1.0}, {"min_holdout_rows": 0}, {"max_folds": 1}, {"profile_max_features": 0}],
    )
    def test_runtime(self, data):
        with pytest.raises(ConfigError):
            RuntimeConfig.from_dict(data)


class TestOpCost:
    def test_latency(self):
        cost = OpCost.from_dict({"setup_ms": 0.5, "per_row_ms": 0.001})
        assert cost.latency(1000) == pytest.approx(1.5)


class TestFromYaml:
    def test_partial_sections_use_field_defaults(self, temp_dir):
        path = temp_dir / "settings.yaml"
        path.write_text(yaml.safe_dump({"cache": {"tiers": TIERS}, "executor": {"engines": 2}}))
        config = NeurqConfig.from_yaml(path)
        assert config.executor.engines == 2
        assert config.executor.token_budget == 4096
        assert config.batch_policy.kind == "fixed"
