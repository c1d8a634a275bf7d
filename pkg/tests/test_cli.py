"""Tests for the neurq CLI."""

import json

from typer.testing import CliRunner

from neurq.cli import app, split_statements

runner = CliRunner()


class TestShellCommand:
    """Tests for shell -c."""

    def test_runs_a_query(self):
        result = runner.invoke(app, ["shell", "-c", "SELECT user_id FROM users WHERE user_age > 40"])
        assert result.exit_code == 0
        assert "2 rows" in result.stdout

    def test_runs_several_statements(self):
        result = runner.invoke(app, ["shell", "-c", "SELECT 1; SELECT user_id FROM users"])
        assert result.exit_code == 0
        assert "1 row" in result.stdout
        assert "6 rows" in result.stdout

    def test_max_rows(self):
        result = runner.invoke(app, ["shell", "--max-rows", "2", "-c", "SELECT user_id FROM users"])
        assert "6 rows (showing 2)" in result.stdout

    def test_error_exits_nonzero(self):
        result = runner.invoke(app, ["shell", "-c", "SELECT x FROM nope"])
        assert result.exit_code == 1
        assert "Error:" in result.stdout

    def test_tenant_policy(self):
        result = runner.invoke(app, ["shell", "-t", "support", "-c", "SELECT user_id FROM ratings"])
        assert result.exit_code == 1
        assert "support" in result.stdout

    def test_missing_manifest(self, temp_dir):
        result = runner.invoke(app, ["shell", "--db", str(temp_dir / "none.yaml"), "-c", "SELECT 1"])
        assert result.exit_code == 1
        assert "manifest not found" in result.stdout


class TestGlobalOptions:
    """Tests for --set and --config."""

    def test_invalid_override(self):
        result = runner.invoke(
            app, ["--set", "cache.tiers.t0.read_cost_ms_per_mb=5", "shell", "-c", "SELECT 1"]
        )
        assert result.exit_code == 1
        assert "t0 < t1 < t2" in result.stdout

    def test_valid_override(self):
        result = runner.invoke(app, ["--set", "executor.engines=1", "shell", "-c", "SELECT 1"])
        assert result.exit_code == 0

    def test_missing_config(self, temp_dir):
        result = runner.invoke(app, ["--config", str(temp_dir / "none.yaml"), "shell", "-c", "SELECT 1"])
        assert result.exit_code == 1
        assert "settings file not found" in result.stdout

    def test_help(self):
        result = runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        for command in ("shell", "explain", "bench"):
            assert command in result.stdout


class TestExplainCommands:
    def test_explain(self):
        result = runner.invoke(app, ["explain", "SELECT user_id FROM users WHERE user_age > 30"])
        assert result.exit_code == 0
        assert "logical plan" in result.stdout
        assert "users" in result.stdout

    def test_explain_physical(self):
        result = runner.invoke(
            app,
            [
                "explain-physical",
                "PREDICT VALUE OF e WITH PRIMARY KEY review_id FROM reviews USING MODEL review_embedder",
            ],
        )
        assert result.exit_code == 0
        assert "physical plan" in result.stdout
        assert "quality=" in result.stdout

    def test_bad_objective(self):
        result = runner.invoke(app, ["explain-physical", "SELECT 1", "-o", "speed>=3"])
        assert result.exit_code == 1
        assert "Error:" in result.stdout


class TestLoadCsvCommand:
    def test_loads_rows(self, temp_dir):
        path = temp_dir / "users.csv"
        path.write_text("user_id,user_age,user_gender\n7,44,m\n8,31,f\n")
        result = runner.invoke(app, ["load-csv", str(path), "--table", "users", "-c", "SELECT user_id FROM users"])
        assert result.exit_code == 0
        assert "Loaded 2 rows into users" in result.stdout
        assert "8 rows" in result.stdout

    def test_missing_file(self, temp_dir):
        result = runner.invoke(app, ["load-csv", str(temp_dir / "none.csv"), "--table", "users"])
        assert result.exit_code == 1
        assert "CSV not found" in result.stdout

    def test_malformed_cell(self, temp_dir):
        """A bad value is reported as an error, not a traceback."""
        path = temp_dir / "users.csv"
        path.write_text("user_id,user_age,user_gender\n7,old,m\n")
        result = runner.invoke(app, ["load-csv", str(path), "--table", "users"])
        assert result.exit_code == 1
        assert "Error:" in result.stdout
        assert "user_age" in result.stdout
        assert not isinstance(result.exception, ValueError)


class TestBenchCommand:
    """Small benchmark runs through the CLI."""

    SMALL = ["bench", "-w", "T", "--rows", "10", "--tenants", "2", "-e", "2"]

    def test_csv_to_stdout(self):
        result = runner.invoke(app, [*self.SMALL, "--format", "csv"])
        assert result.exit_code == 0
        assert result.stdout.startswith("config_id,tenant,metric,value")
        assert "T-full-default-e2-s7,*,completed,2" in result.stdout

    def test_writes_report(self, temp_dir):
        out = temp_dir / "results" / "t"
        result = runner.invoke(app, [*self.SMALL, "--seeds", "1,2", "--out", str(out)])
        assert result.exit_code == 0
        data = json.loads(out.with_suffix(".json").read_text())
        assert [r["config"]["seed"] for r in data["runs"]] == [1, 2]
        assert out.with_suffix(".csv").exists()

    def test_sweep(self, temp_dir):
        out = temp_dir / "sweep"
        result = runner.invoke(app, [*self.SMALL, "--sweep", "engines=1,2", "--out", str(out)])
        assert result.exit_code == 0
        data = json.loads(out.with_suffix(".json").read_text())
        assert [r["config"]["engines"] for r in data["runs"]] == [1, 2]

    def test_unknown_mode(self):
        result = runner.invoke(app, [*self.SMALL, "--mode", "nope"])
        assert result.exit_code == 1
        assert "Error:" in result.stdout

    def test_unknown_format(self):
        result = runner.invoke(app, [*self.SMALL, "--format", "xml"])
        assert result.exit_code == 1


class TestSplitStatements:
    def test_semicolons_in_literals(self):
        assert split_statements("SELECT 'a;b'; SELECT 2;") == ["SELECT 'a;b'", "SELECT 2"]

    def test_blank(self):
        assert split_statements(" ; ") == []
