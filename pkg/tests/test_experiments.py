import json
import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from services.artifacts import read_csv
from services.errors import ConfigError
from services.experiments import (
    EXPERIMENTS,
    RUNNERS,
    load_config,
    parse_config_text,
    run,
)


def _config(tmp_path, experiment, sub="out", **overrides):
    overrides.setdefault("workers", 1)
    overrides["out_dir"] = str(tmp_path / sub)
    return load_config(experiment=experiment, overrides=overrides)


def test_every_experiment_has_a_runner():
    assert set(RUNNERS) == set(EXPERIMENTS)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text("[experiment]\nname = cone\nfoo = 1\n")
    assert info.value.line == 3
    assert info.value.section == "experiment"
    assert info.value.key == "foo"


def test_unknown_section_and_bad_value():
    with pytest.raises(ConfigError) as info:
        parse_config_text("# comentario\n[bogus]\nx = 1\n")
    assert info.value.line == 2
    with pytest.raises(ConfigError) as info:
        parse_config_text("[window]\nwidth = diez\n")
    assert info.value.line == 2
    assert "línea 2" in str(info.value)


def test_file_values_are_validated_with_line(tmp_path):
    path = tmp_path / "cone.ini"
    path.write_text("[experiment]\nname = cone\np = 1.5\n", encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_config(str(path))
    assert info.value.line == 3
    assert info.value.key == "p"


def test_file_overrides_and_defaults(tmp_path):
    path = tmp_path / "sandwich.ini"
    path.write_text(
        "[experiment]\nname = sandwich\np = 0.8\nseed = 4\n\n[window]\nwidth = 120\n\n[output]\nrender = yes\n",
        encoding="utf-8",
    )
    config = load_config(str(path), "sandwich", {"p": 0.9, "seed": None})
    assert config.p == 0.9
    assert config.seed == 4
    assert config.width == 120
    assert config.depth == 400
    assert config.sites_per_replica == 5
    assert config.render is True
    with pytest.raises(ConfigError):
        load_config(str(path), "cone")


def test_validation_errors(tmp_path):
    with pytest.raises(ConfigError):
        _config(tmp_path, "cone", width=10, depth=10, escape_margin=5)
    with pytest.raises(ConfigError):
        _config(tmp_path, "oracle-sweep", width=6, depth=5)
    with pytest.raises(ConfigError):
        _config(tmp_path, "coalescence", separations=[3])
    with pytest.raises(ConfigError):
        _config(tmp_path, "cone", excess="atom:0.5")
    with pytest.raises(ConfigError):
        load_config(overrides={"p": 0.7})


def test_scientific_config_excludes_paths_and_workers(tmp_path):
    config = _config(tmp_path, "cone")
    data = config.scientific()
    assert "out_dir" not in data and "workers" not in data and "check" not in data
    assert data["width"] == 2000


def test_cone_manifest_is_reproducible(tmp_path):
    options = dict(p=1.0, width=60, depth=60, escape_margin=4, replicas=4, seed=5)
    first = run(_config(tmp_path, "cone", "a", **options))
    second = run(_config(tmp_path, "cone", "b", **options))
    assert first.passed
    with open(first.manifest_path, "rb") as fh_a, open(second.manifest_path, "rb") as fh_b:
        assert fh_a.read() == fh_b.read()
    assert first.manifest["checks"] == {"alpha_in_range": True, "cone_algebra": True}
    assert [f["path"] for f in first.manifest["files"]] == ["cone.json"]

    third = run(_config(tmp_path, "cone", "c", **{**options, "seed": 6}))
    assert third.manifest["config_hash"] != first.manifest["config_hash"]


def test_threshold_band_against_p(tmp_path):
    options = dict(width=60, depth=60, escape_margin=5, iterations=2)
    below = run(_config(tmp_path, "threshold", "low", p=0.5, **options))
    assert not below.passed
    lo, hi = below.manifest["summary"]["band"]
    assert 0.5 <= lo < hi <= 0.9
    above = run(_config(tmp_path, "threshold", "high", p=0.95, **options))
    assert above.passed


def test_bidirectional_density_on_open_lattice(tmp_path):
    result = run(_config(tmp_path, "bidirectional-density", p=1.0, width=30, depth=30, escape_margin=3, replicas=3))
    assert result.passed
    assert result.manifest["summary"]["density"] == 1.0
    assert result.manifest["summary"]["escape_probability"] == 1.0


def test_regeneration_tail_without_enough_samples(tmp_path):
    config = _config(tmp_path, "regeneration-tail", p=1.0, width=40, depth=40, escape_margin=4, replicas=3, q=1.0)
    result = run(config)
    checks = result.manifest["checks"]
    assert checks["tail_rate_positive"] is False
    assert checks["stabilization"] and checks["increment_bound"]
    assert result.manifest["censoring"]["non_percolating_origins"] == 0
    rows = read_csv(os.path.join(config.out_dir, "regenerations.csv"))
    assert len(rows) == 3 * 34
    assert list(rows[0]) == ["replica", "q", "j", "T_j", "Y_j_x", "Y_j_t", "censored"]
    assert rows[33]["T_j"] == "34"


def test_coalescence_writes_one_csv_per_separation(tmp_path):
    config = _config(
        tmp_path, "coalescence", p=1.0, width=40, depth=40, escape_margin=4, replicas=3, separations=[0, 2],
    )
    result = run(config)
    assert result.manifest["checks"]["coalescence_0"]
    assert result.manifest["checks"]["parity"]
    paths = [f["path"] for f in result.manifest["files"]]
    assert paths == ["coalescence_sep0.csv", "coalescence_sep2.csv", "drift_profile.json"]
    zero = read_csv(os.path.join(config.out_dir, "coalescence_sep0.csv"))
    assert {row["Z_j"] for row in zero} == {"0"}
    # Sin max_length todas las trazas terminan censuradas por el borde y aun así cuentan.
    assert result.manifest["summary"]["separations"]["0"] == {"runs": 3, "coalesced": 3, "rate": 1.0}


def test_oracle_sweep_passes(tmp_path):
    config = _config(tmp_path, "oracle-sweep", width=4, depth=4, replicas=5, escape_margin=4)
    result = run(config)
    assert result.passed, result.manifest["checks"]
    summary = result.manifest["summary"]
    assert summary["passage_pairs"] == 15
    assert summary["level_patterns"] == 100
    assert summary["prefixes_checked"] > 0
    with open(os.path.join(config.out_dir, "oracle_sweep.json"), encoding="utf-8") as fh:
        assert json.load(fh)["passage_mismatches"] == 0


def test_bigeodesic_with_figure(tmp_path):
    config = _config(
        tmp_path, "bigeodesic", p=0.75, width=120, depth=120, escape_margin=8, replicas=2,
        sites_per_replica=2, render=True,
    )
    result = run(config)
    assert result.manifest["summary"]["sites"] > 0
    assert result.manifest["checks"]["subpaths"]
    assert os.path.exists(os.path.join(config.out_dir, "bigeodesic.svg"))
