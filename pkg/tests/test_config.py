import json

import pytest
import yaml

from lsanet.config import (
    PRESETS,
    LayerSpec,
    NetworkConfig,
    RunRecord,
    desk_config,
    load_network_config,
    modelnet40_config,
)
from lsanet.errors import ConfigError
from lsanet.validators import validate_network_config
from tests.conftest import tiny_config


@pytest.mark.parametrize('name', sorted(PRESETS))
def test_presets_are_valid(name):
    validate_network_config(load_network_config(name))


def test_modelnet40_preset_backbone():
    config = modelnet40_config()
    assert [(l.n_centroids, l.k, l.radius) for l in config.layers] == [(512, 32, 0.2), (128, 64, 0.4), (1, 128, None)]
    assert config.layers[-1].widths == (256, 512, 1024)
    assert config.head_widths == (512, 256)
    assert config.dropout_rate == 0.4


def test_dict_round_trip(tiny):
    assert NetworkConfig.from_dict(tiny.to_dict()) == tiny


def test_to_dict_is_yaml_safe(tiny):
    assert yaml.safe_load(yaml.dump(tiny.to_dict())) == tiny.to_dict()


def test_layer_key_aliases_and_flags_section(tmp_path):
    path = tmp_path / 'net.json'
    path.write_text(json.dumps({
        'layers': [
            {'N': 32, 'K': 8, 'F': [8, 16], 'radius': 0.3},
            {'N': 1, 'K': 8, 'F': [16, 32]},
        ],
        'num_classes': 4,
        'sfe_lift_widths': [8],
        'flags': {'use_lsa': False},
        'training': {'base_lr': '2e-3', 'n_points': 64},
    }))
    config = load_network_config(path)
    assert config.layers[0] == LayerSpec(32, 8, (8, 16), 0.3)
    assert config.use_lsa is False
    assert config.training.base_lr == pytest.approx(0.002)
    assert config.training.n_points == 64


def test_yaml_files_load(tmp_path):
    path = tmp_path / 'net.yaml'
    path.write_text(yaml.dump(desk_config().to_dict()))
    assert load_network_config(path) == desk_config()


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match='colour'):
        NetworkConfig.from_dict({'layers': [], 'colour': 'red'})
    with pytest.raises(ConfigError, match='depth'):
        NetworkConfig.from_dict({'layers': [{'N': 1, 'K': 4, 'F': [8], 'depth': 2}]})


def test_missing_layer_field():
    with pytest.raises(ConfigError, match='widths'):
        NetworkConfig.from_dict({'layers': [{'N': 1, 'K': 4}]})


def test_unknown_source():
    with pytest.raises(ConfigError):
        load_network_config('no-such-preset')


@pytest.mark.parametrize('change', [
    {'layers': []},
    {'num_classes': 1},
    {'dropout_rate': 1.0},
    {'sfe_lift_widths': (4,)},
    {'region_mean': 'median'},
    {'sfe_combine': 'product'},
    {'head_widths': (0,)},
])
def test_invalid_configs(change):
    with pytest.raises(ConfigError):
        validate_network_config(tiny_config(**change))


def test_sampled_layer_needs_a_radius(tiny):
    tiny.layers[0] = LayerSpec(16, 8, (8, 8, 16))
    with pytest.raises(ConfigError, match='radius'):
        validate_network_config(tiny)


def test_too_few_points_for_the_first_layer(tiny):
    tiny.training.n_points = 8
    with pytest.raises(ConfigError, match='n_points'):
        validate_network_config(tiny)


def test_run_record_update(tmp_path, tiny):
    record = RunRecord(tmp_path)
    assert not record.exists()
    record.write({'seed': 3, 'config': tiny.to_dict(), 'last_epoch': -1})
    record.update(last_epoch=4)
    assert record.read()['last_epoch'] == 4
    assert record.network_config() == tiny


def test_missing_run_record(tmp_path):
    with pytest.raises(ConfigError):
        RunRecord(tmp_path).read()
