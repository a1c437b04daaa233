import csv
import json

import pytest

from lsanet import cli
from lsanet.app_paths import AppPaths
from lsanet.config import RunRecord
from tests.conftest import tiny_config


@pytest.fixture(autouse=True)
def no_app_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(AppPaths, 'main_dir_path', tmp_path / 'missing-app-dir')


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / 'tiny.json'
    path.write_text(json.dumps(tiny_config().to_dict()))
    return path


@pytest.fixture
def trained_run(tmp_path, config_file):
    out = tmp_path / 'run'
    status = cli.run([
        'train', '--config', str(config_file), '--epochs', '1', '--out', str(out),
        '--n-train', '8', '--n-test', '4',
    ])
    assert status == 0
    return out


def test_params_table(config_file, capsys):
    assert cli.run(['params', '--config', str(config_file)]) == 0
    output = capsys.readouterr().out
    assert 'total' in output
    assert 'layers.0.lsa' in output


def test_params_flags_shrink_the_model(config_file, capsys):
    cli.run(['params', '--config', str(config_file)])
    full = capsys.readouterr().out
    cli.run(['params', '--config', str(config_file), '--no-lsa', '--no-sfe'])
    plain = capsys.readouterr().out
    assert 'layers.0.sfe' in full
    assert 'layers.0.sfe' not in plain


def test_unknown_config_exits_with_one():
    assert cli.run(['params', '--config', 'no-such-preset']) == 1


def test_missing_command_is_a_usage_error():
    with pytest.raises(SystemExit):
        cli.run([])


def test_gradcheck_op_scope(capsys):
    assert cli.run(['gradcheck', '--scope', 'op', '--seeds', '2']) == 0
    assert 'sigmoid' in capsys.readouterr().out


def test_train_records_the_run(trained_run):
    record = RunRecord(trained_run).read()
    assert record['data'] == {'source': 'synthetic', 'n_train': 8, 'n_test': 4, 'seed': 0}
    assert record['augment']['dropout_max_ratio'] == pytest.approx(0.875)
    assert (trained_run / 'last.lsan').exists()


def test_resume_reads_the_stored_run(trained_run, tmp_path):
    status = cli.run(['train', '--config', 'desk', '--epochs', '2', '--out', str(trained_run), '--resume'])
    assert status == 0
    assert RunRecord(trained_run).read()['last_epoch'] == 1


def test_eval_checkpoint(trained_run, capsys):
    assert cli.run(['eval', '--ckpt', str(trained_run / 'last.lsan')]) == 0
    assert 'Overall accuracy' in capsys.readouterr().out


def test_density_csv(trained_run, tmp_path):
    out = tmp_path / 'density.csv'
    assert cli.run(['density', '--ckpt', str(trained_run / 'last.lsan'), '--points', '64,32', '--out', str(out)]) == 0
    with open(out) as file:
        assert [row['n_points'] for row in csv.DictReader(file)] == ['64', '32']


def test_export_sdw(trained_run, tmp_path):
    out = tmp_path / 'sdw.csv'
    assert cli.run(['export-sdw', '--ckpt', str(trained_run / 'last.lsan'), '--layer', '1', '--out', str(out)]) == 0
    with open(out) as file:
        assert sum(1 for _ in file) == 1 + 4 * 4


def test_export_sdw_bad_layer(trained_run, tmp_path):
    out = tmp_path / 'sdw.csv'
    assert cli.run(['export-sdw', '--ckpt', str(trained_run / 'last.lsan'), '--layer', '9', '--out', str(out)]) == 1


def test_eval_missing_checkpoint(tmp_path):
    assert cli.run(['eval', '--ckpt', str(tmp_path / 'nowhere' / 'last.lsan')]) == 1


def _losses(run_dir):
    with open(run_dir / 'metrics.jsonl') as file:
        return [json.loads(line)['loss'] for line in file]


def test_resume_keeps_the_recorded_seed(tmp_path, config_file):
    common = ['--config', str(config_file), '--n-train', '8', '--n-test', '4']
    full, split = tmp_path / 'full', tmp_path / 'split'
    assert cli.run(['train', *common, '--seed', '3', '--epochs', '2', '--out', str(full)]) == 0
    assert cli.run(['train', *common, '--seed', '3', '--epochs', '1', '--out', str(split)]) == 0
    assert cli.run(['train', '--config', str(config_file), '--epochs', '2', '--out', str(split), '--resume']) == 0
    assert RunRecord(split).read()['seed'] == 3
    assert _losses(split) == _losses(full)
