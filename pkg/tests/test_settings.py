"""Tests for neurq settings loading and overrides."""

import pytest
import yaml

from neurq.errors import ConfigError
from neurq.settings import load_settings, merged_settings, parse_override


class TestParseOverride:
    """Tests for --set style overrides."""

    def test_nested_key(self):
        assert parse_override("executor.engines=16") == {"executor": {"engines": 16}}

    def test_yaml_values(self):
        assert parse_override("executor.cse=false") == {"executor": {"cse": False}}
        assert parse_override("batch_policy.boundaries=[8, 24]") == {"batch_policy": {"boundaries": [8, 24]}}
        assert parse_override("executor.max_inflight_per_tenant=") == {"executor": {"max_inflight_per_tenant": None}}

    def test_value_may_contain_equals(self):
        assert parse_override("optimizer.objective=quality>=0.9") == {"optimizer": {"objective": "quality>=0.9"}}

    @pytest.mark.parametrize("bad", ["executor.engines", "=4", "..=4"])
    def test_malformed(self, bad):
        with pytest.raises(ConfigError):
            parse_override(bad)


class TestMergedSettings:
    """Defaults, then the user file, then overrides."""

    def test_user_file_is_partial(self, temp_dir):
        path = temp_dir / "settings.yaml"
        path.write_text(yaml.safe_dump({"executor": {"engines": 2}}))
        data = merged_settings(path)
        assert data["executor"]["engines"] == 2
        assert data["executor"]["token_budget"] == 4096
        assert data["cache"]["tiers"]["t2"]["capacity_mb"] == 1048576

    def test_overrides_win_in_order(self, temp_dir):
        path = temp_dir / "settings.yaml"
        path.write_text(yaml.safe_dump({"executor": {"engines": 2}}))
        data = merged_settings(path, ["executor.engines=8", {"executor": {"engines": 16}}])
        assert data["executor"]["engines"] == 16

    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigError):
            merged_settings(temp_dir / "missing.yaml")

    def test_empty_file(self, temp_dir):
        path = temp_dir / "settings.yaml"
        path.write_text("")
        assert merged_settings(path)["executor"]["engines"] == 4


class TestLoadSettings:
    def test_defaults(self):
        config = load_settings()
        assert config.seed == 7
        assert config.cache.enabled

    def test_overrides_are_validated(self):
        with pytest.raises(ConfigError):
            load_settings(overrides=["batch_policy.kind=lifo"])

    def test_typed_result(self):
        config = load_settings(overrides=["executor.mode=real_time", "cache.enabled=false"])
        assert config.executor.mode == "real_time"
        assert config.cache.enabled is False
