"""Desk-scale end-to-end runs; deselected by default, run with `pytest -m slow`."""
import pytest

from lsanet.config import desk_config
from lsanet.geometry import AugmentOptions
from lsanet.network import evaluate
from lsanet.pipeline import TrainRun, overfit_batch, synth_dataset, train


pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


@pytest.fixture(scope='module')
def desk_splits():
    return synth_dataset(n_train=512, n_test=128, seed=0, n_points=1024)


@pytest.fixture(scope='module')
def desk_runs(tmp_path_factory, desk_splits):
    augment = AugmentOptions(jitter_sigma=0.01, dropout_max_ratio=0.875)
    runs = {}
    for seed in SEEDS:
        out = tmp_path_factory.mktemp(f'desk-{seed}')
        runs[seed] = train(TrainRun(desk_config(), out, seed=seed, augment=augment), *desk_splits)
    return runs


def test_desk_training_reaches_target_accuracy(desk_runs):
    final = [run.history[-1]['test_oa'] for run in desk_runs.values()]
    assert sum(oa >= 0.95 for oa in final) >= 2, final


def test_single_batch_is_memorized(desk_splits):
    train_set, _ = desk_splits
    clouds = [train_set[i] for i in range(8)]
    losses = overfit_batch(desk_config().with_flags(dropout_rate=0.0), clouds, steps=200)
    assert min(losses) < 0.01


@pytest.mark.parametrize('n_points', [512, 256])
def test_accuracy_holds_at_lower_density(desk_runs, desk_splits, n_points):
    params = desk_runs[0].params
    _, test_set = desk_splits
    full = evaluate(params, test_set, 1024).overall_accuracy
    sparse = evaluate(params, test_set, n_points).overall_accuracy
    assert sparse >= 0.85 * full
