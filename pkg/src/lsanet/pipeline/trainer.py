"""Training loop: seeded shuffling and augmentation, Adam with step decay,
per-epoch JSONL metrics and resumable checkpoints."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn

from lsanet.autograd import AdamState, Tape, adam_step, backward, cross_entropy, load_checkpoint, save_checkpoint
from lsanet.config import NetworkConfig, RunRecord
from lsanet.db import RunLedger
from lsanet.errors import CheckpointError, NonFiniteLossError
from lsanet.geometry import AugmentOptions, augment
from lsanet.network import ModelParams, build, evaluate, forward_classify


logger = logging.getLogger(__name__)

LAST_CHECKPOINT = 'last.lsan'
METRICS_FILE = 'metrics.jsonl'

# Seed stream ids; one per independent source of randomness
DATA_ORDER_STREAM = 0
AUGMENT_STREAM = 1
DROPOUT_STREAM = 2


@dataclass
class TrainRun:
    config: NetworkConfig
    out_dir: Path
    seed: int = 0
    epochs: int | None = None
    batch_size: int | None = None
    augment: AugmentOptions = field(default_factory=AugmentOptions)
    checkpoint_every: int = 10
    name: str = 'train'
    variant: str = 'default'
    data: dict[str, Any] = field(default_factory=dict)
    show_progress: bool = False

    @property
    def total_epochs(self) -> int:
        return self.epochs or self.config.training.epochs

    @property
    def effective_batch_size(self) -> int:
        return self.batch_size or self.config.training.batch_size

    def record(self) -> dict[str, Any]:
        return {
            'name': self.name,
            'variant': self.variant,
            'seed': self.seed,
            'epochs': self.total_epochs,
            'batch_size': self.effective_batch_size,
            'checkpoint_every': self.checkpoint_every,
            'augment': asdict(self.augment),
            'data': self.data,
            'config': self.config.to_dict(),
            'last_epoch': -1,
        }


class MetricsLog:
    """Append-only JSON lines, flushed after every record"""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)

    def append(self, record: dict[str, Any]) -> None:
        with open(self.path, 'a') as file:
            file.write(json.dumps(record) + '\n')
            file.flush()

    def read(self) -> list[dict[str, Any]]:
        """Every complete record; a torn final line is ignored"""
        if not self.path.exists():
            return []
        records = []
        for line in self.path.read_text().splitlines():
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                logger.warning('ignoring unreadable line in %s', self.path)
        return records


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict[str, Any]]
    out_dir: Path


def training_state(params: ModelParams, optim: AdamState, epoch: int) -> dict[str, np.ndarray]:
    arrays = params.state_dict()
    arrays['optim.t'] = np.asarray(float(optim.t))
    for name in optim.m:
        arrays[f'optim.m.{name}'] = optim.m[name]
        arrays[f'optim.v.{name}'] = optim.v[name]
    arrays['run.epoch'] = np.asarray(float(epoch))
    return arrays


def restore_training_state(arrays: dict[str, np.ndarray], params: ModelParams, optim: AdamState) -> int:
    """Load weights, buffers and Adam state in place; return the last completed epoch"""
    if 'run.epoch' not in arrays or 'optim.t' not in arrays:
        raise CheckpointError('checkpoint carries no training state')
    params.load_state_dict(arrays)
    optim.t = int(arrays['optim.t'])
    optim.m = {k[len('optim.m.'):]: v.copy() for k, v in arrays.items() if k.startswith('optim.m.')}
    optim.v = {k[len('optim.v.'):]: v.copy() for k, v in arrays.items() if k.startswith('optim.v.')}
    return int(arrays['run.epoch'])


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, DATA_ORDER_STREAM, epoch]).permutation(n)


def _new_optimizer(config: NetworkConfig) -> AdamState:
    training = config.training
    return AdamState(
        base_lr=training.base_lr,
        decay_ratio=training.decay_ratio,
        decay_interval_epochs=training.decay_interval_epochs,
        lr_floor=training.lr_floor,
    )


def train_step(
        params: ModelParams,
        optim: AdamState,
        clouds: list,
        labels: np.ndarray,
        epoch: int,
        rng: np.random.Generator,
) -> tuple[float, np.ndarray, float]:
    """One forward/backward/Adam update; returns (loss, predictions, lr)"""
    with Tape() as tape:
        logits = forward_classify(params, clouds, 'train', rng=rng)
        loss = cross_entropy(logits, labels)
    value = loss.item()
    if not math.isfinite(value):
        raise NonFiniteLossError(f'loss became {value} at epoch {epoch}')
    grads = backward(tape, loss)
    named = dict(params.named_parameters())
    lr = adam_step(optim, named, {name: grads[tensor] for name, tensor in named.items()}, epoch)
    return value, np.argmax(logits.data, axis=-1), lr


def train(
        run: TrainRun,
        train_set,
        test_set=None,
        *,
        resume: bool = False,
        ledger: RunLedger | None = None,
) -> TrainResult:
    """Train `run.config` on `train_set`, evaluating on `test_set` after every epoch.

    With `resume`, weights, batch-norm statistics, Adam moments and the epoch
    counter come from `out_dir/last.lsan` and training continues after the
    stored epoch. Checkpoints are written only after an epoch completes, so
    an abort leaves the last good one in place.
    """
    out_dir = Path(run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = RunRecord(out_dir)
    metrics = MetricsLog(out_dir / METRICS_FILE)
    config = run.config
    n_points = config.training.n_points

    params = build(config, run.seed)
    optim = _new_optimizer(config)
    start_epoch = 0
    last_path = out_dir / LAST_CHECKPOINT
    if resume and last_path.exists():
        start_epoch = restore_training_state(load_checkpoint(last_path), params, optim) + 1
        logger.info('resuming %s after epoch %d', out_dir, start_epoch - 1)
    else:
        record.write(run.record())
        metrics.path.unlink(missing_ok=True)

    run_id = ledger.create_run_entry(run.name, run.variant, run.seed, out_dir) if ledger else None
    batch_size = run.effective_batch_size
    n_batches = math.ceil(len(train_set) / batch_size)

    with Progress(
            SpinnerColumn(),
            TextColumn('[progress.description]{task.description}'),
            BarColumn(),
            TaskProgressColumn(),
            disable=not run.show_progress,
    ) as progress:
        for epoch in range(start_epoch, run.total_epochs):
            started = time.perf_counter()
            task = progress.add_task(f'Epoch {epoch + 1}', total=n_batches)
            order = epoch_order(run.seed, epoch, len(train_set))
            dropout_rng = np.random.default_rng([run.seed, DROPOUT_STREAM, epoch])
            total_loss, correct, lr = 0.0, 0, optim.effective_lr(epoch)

            for start in range(0, len(order), batch_size):
                indices = order[start:start + batch_size]
                clouds = [
                    augment(train_set[int(i)], np.random.SeedSequence([run.seed, AUGMENT_STREAM, epoch, int(i)]),
                            run.augment)
                    for i in indices
                ]
                labels = np.array([cloud.label for cloud in clouds], dtype=np.intp)
                loss, predictions, lr = train_step(params, optim, clouds, labels, epoch, dropout_rng)
                total_loss += loss * len(indices)
                correct += int((predictions == labels).sum())
                progress.update(task, advance=1)

            entry = {
                'epoch': epoch,
                'loss': total_loss / len(order),
                'train_oa': correct / len(order),
                'lr': lr,
            }
            if test_set is not None and len(test_set):
                result = evaluate(params, test_set, n_points, seed=run.seed, batch_size=batch_size)
                entry['test_oa'] = result.overall_accuracy
                entry['test_ma'] = result.mean_class_accuracy
            entry['seconds'] = time.perf_counter() - started

            save_checkpoint(last_path, training_state(params, optim, epoch))
            if (epoch + 1) % run.checkpoint_every == 0 or epoch + 1 == run.total_epochs:
                save_checkpoint(out_dir / f'epoch_{epoch:04d}.lsan', training_state(params, optim, epoch))
            record.update(last_epoch=epoch)
            metrics.append(entry)
            if ledger is not None:
                ledger.create_epoch_entry(run_id, entry)
            logger.info(
                'epoch %d: loss %.4f train OA %.4f test OA %s lr %.6g',
                epoch, entry['loss'], entry['train_oa'],
                f"{entry['test_oa']:.4f}" if 'test_oa' in entry else '-', lr,
            )

    return TrainResult(params=params, history=metrics.read(), out_dir=out_dir)


def overfit_batch(
        config: NetworkConfig,
        clouds: list,
        steps: int,
        seed: int = 0,
) -> list[float]:
    """Repeated updates on one fixed batch; returns the loss of every step"""
    params = build(config, seed)
    optim = _new_optimizer(config)
    labels = np.array([cloud.label for cloud in clouds], dtype=np.intp)
    rng = np.random.default_rng([seed, DROPOUT_STREAM])
    return [train_step(params, optim, clouds, labels, 0, rng)[0] for _ in range(steps)]
