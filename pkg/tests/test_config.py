"""Tests for settings, presets and run-config loading."""

import pytest

from cstdoa.config import Settings, available_presets, load_run_config, parse_run_config, settings
from cstdoa.exceptions import ConfigError

MINIMAL = """
name = "tiny"
seed = 3

[scenario]
sensors = [[0.0, 0.0], [1.0, 0.0]]
block_length = 255
duration = 0.5

[sensing]
degree = 8
rows = 16
"""


@pytest.fixture
def minimal_file(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(MINIMAL)
    return path


def test_shipped_presets():
    assert {"desk-255", "paper-fig5"} <= set(available_presets())


def test_circle_preset_values():
    cfg = load_run_config(preset="paper-fig5")
    assert cfg.block_length == 4095
    assert cfg.sensing.rows == 40
    assert cfg.compression_ratio == pytest.approx(4095 / 40)
    assert cfg.scenario.sensors == [(0.0, 0.0), (-1.0, 0.0), (1.0, 0.0)]
    assert cfg.scenario.trajectory.radius == 5.0
    assert cfg.scenario.trajectory.speed == 0.47
    assert cfg.scenario.source.kind == "noise-burst"
    assert cfg.solver.normalize_columns


def test_desk_preset_values():
    cfg = load_run_config(preset="desk-255")
    assert cfg.block_length == 255
    assert cfg.sensing.rows == 16
    assert not cfg.refine
    assert cfg.scenario.source.kind == "noise-burst"


def test_unknown_preset():
    with pytest.raises(ConfigError, match="Unknown preset"):
        load_run_config(preset="nope")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "absent.toml")


def test_neither_file_nor_preset():
    with pytest.raises(ConfigError):
        load_run_config()


def test_bad_toml(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("name = \n")
    with pytest.raises(ConfigError, match="Failed to parse"):
        load_run_config(path)


def test_file_with_overrides(minimal_file, tmp_path):
    cfg = load_run_config(minimal_file, overrides={"seed": 11, "output_dir": str(tmp_path), "workers": None})
    assert cfg.name == "tiny"
    assert cfg.seed == 11
    assert cfg.output_dir == tmp_path
    assert cfg.workers is None


def test_errors_name_the_field_path():
    with pytest.raises(ConfigError) as exc:
        parse_run_config(
            {
                "scenario": {"sensors": [[0, 0], [1, 0]], "block_length": 255, "duration": -1},
                "sensing": {"degree": 8, "rows": 16},
            }
        )
    assert "scenario.duration" in str(exc.value)


def test_rows_must_be_below_block_length():
    with pytest.raises(ConfigError, match="rows"):
        parse_run_config(
            {
                "scenario": {"sensors": [[0, 0], [1, 0]], "block_length": 15, "duration": 1},
                "sensing": {"degree": 4, "rows": 15},
            }
        )


def test_block_length_must_match_degree():
    with pytest.raises(ConfigError, match="block_length"):
        parse_run_config(
            {
                "scenario": {"sensors": [[0, 0], [1, 0]], "block_length": 255, "duration": 1},
                "sensing": {"degree": 9, "rows": 16},
            }
        )


def test_block_length_must_be_mersenne():
    with pytest.raises(ConfigError, match="block_length"):
        parse_run_config(
            {
                "scenario": {"sensors": [[0, 0], [1, 0]], "block_length": 256, "duration": 1},
                "sensing": {"degree": 8, "rows": 16},
            }
        )


def test_jackknife_keeps_enough_rows():
    with pytest.raises(ConfigError, match="jackknife"):
        parse_run_config(
            {
                "scenario": {"sensors": [[0, 0], [1, 0]], "block_length": 255, "duration": 1},
                "sensing": {"degree": 8, "rows": 10},
            }
        )


def test_single_sensor_rejected():
    with pytest.raises(ConfigError, match="sensors"):
        parse_run_config(
            {
                "scenario": {"sensors": [[0, 0]], "block_length": 255, "duration": 1},
                "sensing": {"degree": 8, "rows": 16},
            }
        )


def test_carrier_above_nyquist_rejected():
    with pytest.raises(ConfigError, match="carrier"):
        parse_run_config(
            {
                "scenario": {
                    "sensors": [[0, 0], [1, 0]],
                    "block_length": 255,
                    "duration": 1,
                    "sample_rate": 1000,
                    "source": {"kind": "gaussian-sine", "carrier_hz": 600},
                },
                "sensing": {"degree": 8, "rows": 16},
            }
        )


def test_audio_pair_needs_existing_files(tmp_path):
    with pytest.raises(ConfigError, match="audio file not found"):
        parse_run_config(
            {
                "mode": "audio-pair",
                "audio": {
                    "reference": {"path": str(tmp_path / "a.wav")},
                    "sensor": {"path": str(tmp_path / "b.wav")},
                },
                "sensing": {"degree": 8, "rows": 16},
            }
        )


def test_simulate_needs_scenario():
    with pytest.raises(ConfigError, match="scenario"):
        parse_run_config({"sensing": {"degree": 8, "rows": 16}})


def test_settings_locate_presets():
    assert settings.PRESETS_DIR.is_dir()


def test_runs_dir_defaults_under_data_dir(tmp_path):
    local = Settings(DATA_DIR=tmp_path, OUTPUT_DIR=None)
    assert local.runs_dir == tmp_path / "runs"


def test_output_dir_overrides_runs_dir(tmp_path):
    local = Settings(DATA_DIR=tmp_path, OUTPUT_DIR=tmp_path / "elsewhere")
    assert local.runs_dir == tmp_path / "elsewhere"
