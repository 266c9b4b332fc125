import math

import pytest

from core.config import (CodecSettings, PRESETS, get_preset_config, load_codec_config,
                         load_training_config, validate_values, CONFIG_SCHEMA)
from core.errors import ConfigError


@pytest.mark.parametrize('preset', sorted(PRESETS))
def test_presets_are_valid(preset):
    config = load_codec_config(preset=preset)
    assert config.preset == preset
    assert config.validate() == (True, [])
    assert config.lod.k == config.dald.k
    assert config.dald.descriptor_dim % config.model_arch['num_heads'] == 0


def test_desk_defaults():
    config = load_codec_config(preset='desk')
    assert (config.lod.T, config.lod.L, config.lod.k) == (8, 24, 7)
    assert config.dald.thresholds_x == (0.0, 1.0, 3.0, math.inf)
    assert config.dald.descriptor_dim == 111
    assert config.partition.batch_size == 256


def test_lidar_preset():
    config = load_codec_config(preset='lidar')
    assert config.dald.thresholds_z == (0.2, 0.4, 1.0, math.inf)
    assert config.partition.batch_size == 4096
    assert config.lod.L == 16


def test_unknown_preset():
    with pytest.raises(ConfigError):
        get_preset_config('nope')


def test_file_and_overrides(tmp_path):
    path = tmp_path / 'codec.env'
    path.write_text('PRESET=object\nLOD_T=4\nSEED=9\nLR=0.01\nDALD_THRESHOLDS_X=0,2,4,inf\n')
    config = load_codec_config(str(path), overrides={'SEED': 3})
    assert config.preset == 'object'
    assert config.lod.T == 4
    assert config.lod.k == 11
    assert config.partition.seed == 3
    assert config.dald.thresholds_x == (0.0, 2.0, 4.0, math.inf)

    training = load_training_config(str(path), {'EPOCHS': 2})
    assert training.lr == pytest.approx(0.01)
    assert training.epochs == 2
    assert training.seed == 9


def test_explicit_preset_wins_over_file(tmp_path):
    path = tmp_path / 'codec.env'
    path.write_text('PRESET=object\n')
    assert load_codec_config(str(path), preset='lidar').preset == 'lidar'


def test_missing_file():
    with pytest.raises(ConfigError):
        load_codec_config('/nonexistent/codec.env')
    with pytest.raises(ConfigError):
        load_training_config('/nonexistent/codec.env')


@pytest.mark.parametrize('overrides', [
    {'LOD_T': 6, 'LOD_L': 6},
    {'LOD_T': 0},
    {'MODEL_HEADS': 4},
    {'DALD_THRESHOLDS_X': '0,3,1,inf'},
    {'DALD_THRESHOLDS_Y': '0,1,inf'},
    {'PARTITION_BATCH_N': 0},
    {'UNKNOWN_KEY': 1},
    {'LOD_SCHEDULE': '8,4'},
    {'LOD_T': 3, 'LOD_L': 5, 'LOD_SCHEDULE': '8,8,4'},
])
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_codec_config(preset='desk', overrides=overrides)


def test_explicit_schedule():
    config = load_codec_config(preset='desk', overrides={'LOD_T': 3, 'LOD_L': 5, 'LOD_SCHEDULE': '8,4,0'})
    assert config.lod.base_distance_schedule == (8, 4, 0)


def test_validate_values_coerces_strings():
    doc = validate_values({'LOD_T': '5', 'PARTITION_ALPHA': '12.5'}, CONFIG_SCHEMA)
    assert doc == {'LOD_T': 5, 'PARTITION_ALPHA': 12.5}


def test_training_defaults_and_errors():
    config = load_training_config()
    assert (config.lr, config.epochs, config.batch_count) == (1e-3, 8, 32)
    with pytest.raises(ConfigError):
        load_training_config(overrides={'EPOCHS': -1})


def test_thread_setting(monkeypatch):
    monkeypatch.setenv('DPCC_THREADS', '3')
    assert CodecSettings.get_threads() == 3
    monkeypatch.setenv('DPCC_THREADS', 'many')
    assert CodecSettings.get_threads() >= 1
    monkeypatch.setenv('DPCC_PRESET', 'lidar')
    assert load_codec_config().preset == 'lidar'
