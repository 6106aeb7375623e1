import os
import sys

from click.testing import CliRunner

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from commands.experiment_commands import experiment_cli
from commands.export_commands import export_cli


def test_every_experiment_is_a_command():
    assert set(experiment_cli.commands) == {
        "direction-curve",
        "coalescence",
        "sandwich",
        "bigeodesic",
        "cone",
        "oracle-sweep",
        "regeneration-tail",
        "bidirectional-density",
        "threshold",
    }


def test_config_error_is_a_usage_error(tmp_path):
    result = CliRunner().invoke(experiment_cli, ["cone", "--p", "2", "--out-dir", str(tmp_path)])
    assert result.exit_code == 2
    assert "p debe estar" in result.output


def test_config_file_error_reports_line(tmp_path):
    path = tmp_path / "cone.ini"
    path.write_text("[experiment]\nname = cone\n\n[window]\nwidht = 10\n", encoding="utf-8")
    result = CliRunner().invoke(experiment_cli, ["cone", "--config", str(path)])
    assert result.exit_code == 2
    assert "línea 5" in result.output


def test_failed_check_exits_with_one(tmp_path):
    path = tmp_path / "threshold.ini"
    path.write_text("[experiment]\nname = threshold\niterations = 2\n", encoding="utf-8")
    args = [
        "threshold", "--config", str(path), "--p", "0.5", "--width", "60", "--depth", "60",
        "--escape-margin", "5", "--workers", "1", "--out-dir", str(tmp_path / "out"),
    ]
    result = CliRunner().invoke(experiment_cli, args + ["--check"])
    assert result.exit_code == 1
    assert os.path.exists(tmp_path / "out" / "manifest.json")

    result = CliRunner().invoke(experiment_cli, args)
    assert result.exit_code == 0


def test_successful_run_prints_manifest(tmp_path):
    out = tmp_path / "cone"
    result = CliRunner().invoke(
        experiment_cli,
        [
            "cone", "--p", "1", "--width", "60", "--depth", "60", "--escape-margin", "4",
            "--replicas", "4", "--workers", "1", "--seed", "2", "--out-dir", str(out), "--check",
        ],
    )
    assert result.exit_code == 0, result.output
    assert str(out / "manifest.json") in result.output


def test_snapshot_export(tmp_path):
    result = CliRunner().invoke(
        export_cli,
        ["snapshot", "--seed", "3", "--width", "12", "--depth", "10", "--escape-margin", "2", "--out-dir", str(tmp_path), "--render"],
    )
    assert result.exit_code == 0, result.output
    for name in ("field_3.txt", "levels_3.txt", "bidirectional_3.json", "field_3.svg"):
        assert (tmp_path / name).exists()
    with open(tmp_path / "levels_3.txt", encoding="utf-8") as fh:
        assert sum(1 for _ in fh) == 120


def test_snapshot_rejects_bad_excess(tmp_path):
    result = CliRunner().invoke(export_cli, ["snapshot", "--excess", "atom:1", "--out-dir", str(tmp_path)])
    assert result.exit_code == 2
