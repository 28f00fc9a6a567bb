"""Tests for the fensemble command line."""

from __future__ import annotations

import csv
from unittest.mock import patch

import orjson
import pytest
from click.testing import CliRunner

from fensemble import __version__
from fensemble.cli import main
from fensemble.errors import IntegrityError


def _data_rows(path):
    lines = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    return list(csv.reader(lines))


@pytest.fixture
def runner():
    return CliRunner()


class TestGroup:
    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert __version__ in result.output

    def test_help_lists_commands(self, runner):
        result = runner.invoke(main, ["--help"])
        for command in ("sieve", "ensemble", "spectrum", "piqm", "model"):
            assert command in result.output


class TestSieve:
    def test_counts(self, runner):
        result = runner.invoke(main, ["sieve", "--limit", "1e6", "--nth", "1000"])
        assert result.exit_code == 0, result.output
        assert "pi(1000000)=78498" in result.output
        assert "x(1000)=7919" in result.output


class TestEnsembleCommand:
    def test_writes_table_and_stats(self, runner, tmp_path):
        result = runner.invoke(main, ["-o", str(tmp_path), "ensemble", "--N", "77"])
        assert result.exit_code == 0, result.output
        assert "F=23" in result.output

        header, *rows = _data_rows(tmp_path / "ensemble.csv")
        assert header == ["N_sigma", "x", "y", "pi_x", "pi_y", "E", "p", "q", "t", "u", "k", "kappa"]
        assert len(rows) == 23
        by_n = {int(row[0]): row for row in rows}
        assert by_n[77][5] == "1.25"
        assert by_n[49][6] == "0"

        stats = orjson.loads((tmp_path / "ensemble_stats.json").read_bytes())
        assert stats["F_exact"] == 23
        assert stats["interval"] == [49, 121]
        assert stats["F_asymptote"] is None

    def test_output_is_deterministic(self, runner, tmp_path):
        for name, threads in (("a", "1"), ("b", "4")):
            result = runner.invoke(
                main, ["-o", str(tmp_path / name), "--threads", threads, "ensemble", "--N", "10007"]
            )
            assert result.exit_code == 0, result.output
        for name in ("ensemble.csv", "ensemble_stats.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_exclude_squares(self, runner, tmp_path):
        result = runner.invoke(
            main, ["-o", str(tmp_path), "--exclude-squares", "ensemble", "--N", "77"]
        )
        assert result.exit_code == 0, result.output
        assert "F=22" in result.output

    def test_cache_dir(self, runner, tmp_path):
        args = ["-o", str(tmp_path / "out"), "--cache-dir", str(tmp_path / "cache"),
                "ensemble", "--N", "10007"]
        first = runner.invoke(main, args)
        table = (tmp_path / "out" / "ensemble.csv").read_bytes()
        second = runner.invoke(main, args)
        assert first.exit_code == second.exit_code == 0
        assert (tmp_path / "out" / "ensemble.csv").read_bytes() == table
        assert list((tmp_path / "cache").glob("ensemble-*.npz"))
        assert [p.name for p in (tmp_path / "cache").glob("sieve*")] == ["sieve.bin"]

    def test_n_too_small(self, runner, tmp_path):
        result = runner.invoke(main, ["-o", str(tmp_path), "ensemble", "--N", "8"])
        assert result.exit_code == 2

    def test_resource_bound(self, runner, tmp_path):
        result = runner.invoke(
            main, ["-o", str(tmp_path), "--interval-bound", "10", "ensemble", "--N", "77"]
        )
        assert result.exit_code == 3

    def test_failed_check(self, runner, tmp_path):
        with patch("fensemble.cli.verify_identities", side_effect=IntegrityError("mismatch")):
            result = runner.invoke(main, ["-o", str(tmp_path), "ensemble", "--N", "77"])
        assert result.exit_code == 4
        assert "mismatch" in result.output

    def test_bad_count(self, runner, tmp_path):
        result = runner.invoke(main, ["-o", str(tmp_path), "ensemble", "--N", "seventy"])
        assert result.exit_code == 2


class TestConfigFile:
    def test_values_apply(self, runner, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"interval-bound = 10\noutput_dir = {tmp_path}\n")
        result = runner.invoke(main, ["--config", str(cfg), "ensemble", "--N", "77"])
        assert result.exit_code == 3

    def test_flags_win(self, runner, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"interval_bound = 10\noutput_dir = {tmp_path}\n")
        result = runner.invoke(
            main, ["--config", str(cfg), "--interval-bound", "1000", "ensemble", "--N", "77"]
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "ensemble.csv").exists()

    def test_unknown_key(self, runner, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("N = 77\n")
        result = runner.invoke(main, ["--config", str(cfg), "sieve", "--limit", "10"])
        assert result.exit_code == 2
        assert "unknown keys" in result.output


class TestSeedless:
    def test_ensemble_records_flag(self, runner, tmp_path):
        for name in ("a", "b"):
            result = runner.invoke(
                main, ["-o", str(tmp_path / name), "--seedless", "ensemble", "--N", "77"]
            )
            assert result.exit_code == 0, result.output
        stats = orjson.loads((tmp_path / "a" / "ensemble_stats.json").read_bytes())
        assert stats["seedless"] is True
        for name in ("ensemble.csv", "ensemble_stats.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_absent_without_flag(self, runner, tmp_path):
        result = runner.invoke(main, ["-o", str(tmp_path), "ensemble", "--N", "77"])
        assert result.exit_code == 0, result.output
        stats = orjson.loads((tmp_path / "ensemble_stats.json").read_bytes())
        assert "seedless" not in stats

    def test_piqm_metadata(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["-o", str(tmp_path), "--seedless",
             "piqm", "--N", "1e6", "--xmin", "10", "--xmax", "20"],
        )
        assert result.exit_code == 0, result.output
        assert "# seedless=true" in (tmp_path / "piqm.csv").read_text().splitlines()

    def test_config_file_key(self, runner, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text("seedless=true\n")
        result = runner.invoke(
            main, ["--config", str(config), "-o", str(tmp_path), "ensemble", "--N", "77"]
        )
        assert result.exit_code == 0, result.output
        assert orjson.loads((tmp_path / "ensemble_stats.json").read_bytes())["seedless"] is True


class TestSpectrumCommand:
    def test_unknown_method(self, runner, tmp_path):
        result = runner.invoke(
            main, ["-o", str(tmp_path), "spectrum", "--N", "10000", "--method", "wkb"]
        )
        assert result.exit_code == 2

    def test_half_window(self, runner, tmp_path):
        result = runner.invoke(
            main, ["-o", str(tmp_path), "spectrum", "--N", "10000", "--emin", "1"]
        )
        assert result.exit_code == 2

    def test_ode_too_large(self, runner, tmp_path):
        result = runner.invoke(
            main, ["-o", str(tmp_path), "spectrum", "--N", "1e7", "--method", "ode"]
        )
        assert result.exit_code == 2

    def test_phase(self, runner, tmp_path):
        result = runner.invoke(
            main, ["-o", str(tmp_path), "spectrum", "--N", "10000", "--method", "phase"]
        )
        assert result.exit_code == 0, result.output
        header, *rows = _data_rows(tmp_path / "spectrum.csv")
        assert header == ["n", "k", "E_ode", "E_phase", "residual"]
        assert all(row[2] == "" for row in rows)
        assert all(int(row[0]) + int(row[1]) == 24 for row in rows)

    @pytest.mark.slow
    def test_both(self, runner, tmp_path):
        result = runner.invoke(
            main, ["-o", str(tmp_path), "spectrum", "--N", "10000", "--method", "both"]
        )
        assert result.exit_code == 0, result.output
        header, *rows = _data_rows(tmp_path / "spectrum.csv")
        assert 22 <= sum(row[2] != "" for row in rows) <= 26
        nodes = [int(row[0]) for row in rows]
        assert nodes == sorted(nodes, reverse=True)


class TestPiqmCommand:
    def test_needs_n(self, runner, tmp_path):
        result = runner.invoke(main, ["-o", str(tmp_path), "piqm"])
        assert result.exit_code == 2

    def test_table(self, runner, tmp_path):
        result = runner.invoke(
            main, ["-o", str(tmp_path), "piqm", "--N", "1e10", "--xmin", "10", "--xmax", "2000"]
        )
        assert result.exit_code == 0, result.output
        text = (tmp_path / "piqm.csv").read_text()
        assert "# N=10000000000" in text
        header, *rows = _data_rows(tmp_path / "piqm.csv")
        assert header[:7] == ["x", "pi_exact", "pi_qm", "pi_qm_asym", "u", "E_qm", "rel_err"]
        assert len(rows) == 1991
        flagged = [row for row in rows if row[2] == ""]
        assert flagged and all("validity" in row[-1] for row in flagged)
        assert int(rows[-1][0]) == 2000

    def test_model_failure(self, runner, tmp_path):
        result = runner.invoke(main, ["-o", str(tmp_path), "piqm", "--N", "77"])
        assert result.exit_code == 2

    def test_convergence(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["-o", str(tmp_path), "piqm", "--compare-N", "1e6,1e8", "--xmin", "10", "--xmax", "30"],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "piqm_N1000000.csv").exists()
        assert (tmp_path / "piqm_N100000000.csv").exists()
        header, *rows = _data_rows(tmp_path / "convergence.csv")
        assert header[0] == "N"
        assert [row[0] for row in rows] == ["1000000", "100000000"]


class TestModelCommand:
    def test_prints_and_saves(self, runner, tmp_path):
        result = runner.invoke(main, ["-o", str(tmp_path), "model", "--N", "1e8"])
        assert result.exit_code == 0, result.output
        assert "alpha=" in result.output
        assert "kappa1=" in result.output
        assert (tmp_path / "model.txt").read_text().startswith("N=100000000\n")

    def test_limit_exponents(self, runner, tmp_path):
        result = runner.invoke(
            main, ["-o", str(tmp_path), "--limit-exponents", "model", "--N", "1e8"]
        )
        assert result.exit_code == 0, result.output
        text = (tmp_path / "model.txt").read_text()
        assert "alpha=2\n" in text
        assert "beta=1\n" in text

    def test_limit_exponents_config_key(self, runner, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text("limit_exponents = true\n")
        result = runner.invoke(
            main, ["--config", str(config), "-o", str(tmp_path), "model", "--N", "1e8"]
        )
        assert result.exit_code == 0, result.output
        assert "alpha=2\n" in (tmp_path / "model.txt").read_text()

    def test_cardinality_source(self, runner, tmp_path):
        default = runner.invoke(main, ["-o", str(tmp_path / "a"), "model", "--N", "1e6"])
        exact = runner.invoke(
            main, ["-o", str(tmp_path / "b"), "model", "--N", "1e6", "--cardinality", "exact"]
        )
        assert default.exit_code == exact.exit_code == 0
        assert "cardinality_source=asymptote\n" in default.output
        assert "cardinality_source=exact\n" in exact.output
