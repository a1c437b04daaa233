import csv
import json

import numpy as np
import pytest

from lsanet.autograd import Tensor, load_checkpoint
from lsanet.config import RunRecord, desk_config
from lsanet.db import RunLedger
from lsanet.errors import CheckpointError, ConfigError, NonFiniteLossError
from lsanet.geometry import AugmentOptions
from lsanet.network import build, evaluate
from lsanet.pipeline import (
    ABLATION_VARIANTS,
    MetricsLog,
    TrainRun,
    epoch_order,
    eval_density_sweep,
    export_sdw,
    load_model,
    run_ablation,
    synth_dataset,
    train,
)
from lsanet.pipeline import trainer
from tests.conftest import tiny_config


AUGMENT = AugmentOptions(jitter_sigma=0.01, dropout_max_ratio=0.5)


@pytest.fixture(scope='module')
def splits():
    return synth_dataset(n_train=8, n_test=4, seed=0, n_points=64)


@pytest.fixture(scope='module')
def trained(tmp_path_factory, splits):
    out = tmp_path_factory.mktemp('run')
    run = TrainRun(tiny_config(), out, seed=0, epochs=2, augment=AUGMENT, checkpoint_every=1)
    return train(run, *splits)


def test_training_writes_its_artifacts(trained):
    out = trained.out_dir
    assert {p.name for p in out.iterdir()} >= {'run.yaml', 'metrics.jsonl', 'last.lsan', 'epoch_0000.lsan', 'epoch_0001.lsan'}
    assert RunRecord(out).read()['last_epoch'] == 1
    assert [entry['epoch'] for entry in trained.history] == [0, 1]
    for entry in trained.history:
        assert np.isfinite(entry['loss'])
        assert 0.0 <= entry['test_oa'] <= 1.0
        assert entry['lr'] == pytest.approx(0.002)


def test_checkpoint_carries_training_state(trained):
    arrays = load_checkpoint(trained.out_dir / 'last.lsan')
    assert float(arrays['run.epoch']) == 1.0
    assert float(arrays['optim.t']) == 4.0
    assert 'optim.m.head.weight' in arrays
    assert 'layers.0.lsa.mlp.0.bn.running_mean' in arrays


def test_resume_matches_an_uninterrupted_run(tmp_path, splits, trained):
    config = tiny_config()
    interrupted = TrainRun(config, tmp_path, seed=0, epochs=1, augment=AUGMENT, checkpoint_every=1)
    train(interrupted, *splits)
    resumed = TrainRun(config, tmp_path, seed=0, epochs=2, augment=AUGMENT, checkpoint_every=1)
    result = train(resumed, *splits, resume=True)
    assert [entry['loss'] for entry in result.history] == [entry['loss'] for entry in trained.history]
    full = load_checkpoint(trained.out_dir / 'last.lsan')
    again = load_checkpoint(tmp_path / 'last.lsan')
    for name, array in full.items():
        np.testing.assert_array_equal(again[name], array, err_msg=name)


def test_resume_without_checkpoint_starts_fresh(tmp_path, splits):
    run = TrainRun(tiny_config(), tmp_path, seed=0, epochs=1)
    result = train(run, *splits, resume=True)
    assert [entry['epoch'] for entry in result.history] == [0]


def test_epoch_order_depends_only_on_seed_and_epoch():
    np.testing.assert_array_equal(epoch_order(3, 1, 10), epoch_order(3, 1, 10))
    assert not np.array_equal(epoch_order(3, 1, 50), epoch_order(3, 2, 50))
    assert sorted(epoch_order(3, 1, 10).tolist()) == list(range(10))


def test_non_finite_loss_keeps_the_last_good_checkpoint(tmp_path, splits, monkeypatch):
    calls = []
    real_cross_entropy = trainer.cross_entropy

    def poisoned(logits, labels):
        calls.append(1)
        if len(calls) > 2:
            return Tensor(np.asarray(np.nan))
        return real_cross_entropy(logits, labels)

    monkeypatch.setattr(trainer, 'cross_entropy', poisoned)
    run = TrainRun(tiny_config(), tmp_path, seed=0, epochs=3)
    with pytest.raises(NonFiniteLossError):
        train(run, *splits)
    assert float(load_checkpoint(tmp_path / 'last.lsan')['run.epoch']) == 0.0
    assert len(MetricsLog(tmp_path / 'metrics.jsonl').read()) == 1


def test_metrics_log_ignores_a_torn_line(tmp_path):
    log = MetricsLog(tmp_path / 'metrics.jsonl')
    log.append({'epoch': 0, 'loss': 1.5})
    with open(log.path, 'a') as file:
        file.write('{"epoch": 1, "lo')
    assert log.read() == [{'epoch': 0, 'loss': 1.5}]


def test_ledger_records_runs_and_epochs(tmp_path, splits):
    ledger = RunLedger(tmp_path / 'ledger.db')
    ledger.db_setup()
    ledger.db_setup()
    run = TrainRun(tiny_config(), tmp_path / 'run', seed=5, epochs=1, name='ledger-test', variant='+LSA')
    history = train(run, *splits, ledger=ledger).history
    assert ledger.final_test_accuracy('ledger-test') == [('+LSA', 5, history[-1]['test_oa'])]


def test_load_model_restores_the_trained_weights(trained, splits):
    params, run = load_model(trained.out_dir / 'last.lsan')
    assert run['seed'] == 0
    expected = evaluate(trained.params, splits[1], 64)
    assert evaluate(params, splits[1], 64) == expected


def test_load_model_needs_the_run_record(tmp_path, trained):
    (tmp_path / 'last.lsan').write_bytes((trained.out_dir / 'last.lsan').read_bytes())
    with pytest.raises(CheckpointError):
        load_model(tmp_path / 'last.lsan')


def test_density_sweep_keeps_request_order(trained, tmp_path):
    _, test = synth_dataset(n_train=0, n_test=4, n_points=128)
    out_csv = tmp_path / 'density.csv'
    rows = eval_density_sweep(trained.params, test, [64, 128, 96], out_csv=out_csv)
    assert [row.n_points for row in rows] == [64, 128, 96]
    with open(out_csv) as file:
        table = list(csv.DictReader(file))
    assert [int(row['n_points']) for row in table] == [64, 128, 96]
    assert float(table[1]['overall_accuracy']) == rows[1].overall_accuracy


def test_default_density_sweep_reaches_below_the_first_layer_size(tmp_path):
    params = build(desk_config(), seed=0)
    _, test = synth_dataset(n_train=0, n_test=8, n_points=1024)
    rows = eval_density_sweep(params, test, out_csv=tmp_path / 'density.csv')
    assert [row.n_points for row in rows] == [1024, 512, 256, 128, 64]
    full = evaluate(params, test, 1024)
    assert rows[0].overall_accuracy == full.overall_accuracy
    assert rows[0].mean_class_accuracy == full.mean_class_accuracy
    assert all(0.0 <= row.overall_accuracy <= 1.0 for row in rows)


def test_export_sdw_rows(trained, splits, tmp_path):
    out = tmp_path / 'sdw.csv'
    count = export_sdw(trained.params, splits[1][0], 0, out)
    assert count == 16 * 8
    with open(out) as file:
        rows = list(csv.reader(file))
    header, body = rows[0], rows[1:]
    assert header[:5] == ['region', 'slot', 'x', 'y', 'z']
    assert len(header) == 5 + 8
    assert len(body) == count
    values = np.array([[float(v) for v in row[5:]] for row in body])
    assert np.all((values > 0) & (values < 1))
    relative = np.array([[float(v) for v in row[2:5]] for row in body]).reshape(16, 8, 3)
    assert np.all((np.abs(relative) < 1e-7).all(axis=-1).any(axis=-1))


def test_export_sdw_refuses_layers_without_sdws(splits, tmp_path):
    params = build(tiny_config(use_lsa=False), seed=0)
    with pytest.raises(ConfigError):
        export_sdw(params, splits[1][0], 0, tmp_path / 'sdw.csv')
    with pytest.raises(ConfigError):
        export_sdw(build(tiny_config(), seed=0), splits[1][0], 7, tmp_path / 'sdw.csv')


def test_ablation_trains_every_variant(tmp_path, splits):
    rows = run_ablation(tiny_config(), [0], tmp_path, *splits, epochs=1)
    assert [row.variant for row in rows] == list(ABLATION_VARIANTS)
    with open(tmp_path / 'ablation.csv') as file:
        table = list(csv.reader(file))
    assert table[0] == ['variant', 'mean_oa', 'std_oa', 'seed_0']
    assert len(table) == 1 + len(ABLATION_VARIANTS)
    records = [json.loads(p.read_text().splitlines()[0]) for p in tmp_path.glob('*/seed_0/metrics.jsonl')]
    assert len(records) == len(ABLATION_VARIANTS)
    assert all(record['epoch'] == 0 for record in records)
