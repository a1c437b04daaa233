"""Offline reports over trained checkpoints: density sweep, SDW export, ablation."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from lsanet.autograd import load_checkpoint
from lsanet.config import NetworkConfig, RunRecord
from lsanet.db import RunLedger
from lsanet.errors import CheckpointError, ConfigError
from lsanet.geometry import AugmentOptions, PointCloud
from lsanet.layers import LSARecord
from lsanet.network import ModelParams, build, evaluate, forward_classify, group_stages
from lsanet.pipeline.trainer import TrainRun, train
from lsanet.settings import DENSITY_POINT_COUNTS


logger = logging.getLogger(__name__)


def load_model(checkpoint: Path) -> tuple[ModelParams, dict]:
    """Rebuild a model from a checkpoint and the run.yaml beside it"""
    checkpoint = Path(checkpoint)
    record = RunRecord(checkpoint.parent)
    if not record.exists():
        raise CheckpointError(f'no {RunRecord.file_name} next to {checkpoint}')
    run = record.read()
    arrays = load_checkpoint(checkpoint)
    weights = [a for name, a in arrays.items() if not name.startswith(('optim.', 'run.'))]
    dtype = weights[0].dtype if weights else None
    params = build(NetworkConfig.from_dict(run['config']), int(run['seed']), dtype)
    params.load_state_dict(arrays)
    return params, run


@dataclass(frozen=True)
class DensityRow:
    n_points: int
    overall_accuracy: float
    mean_class_accuracy: float


def eval_density_sweep(
        params: ModelParams,
        dataset: Sequence[PointCloud],
        point_counts: Sequence[int] = DENSITY_POINT_COUNTS,
        seed: int = 0,
        out_csv: Path | None = None,
        rotate: bool = False,
) -> list[DensityRow]:
    """Accuracy at each requested point count, in request order"""
    rows = []
    for n_points in point_counts:
        result = evaluate(params, dataset, int(n_points), seed=seed, rotate=rotate)
        rows.append(DensityRow(int(n_points), result.overall_accuracy, result.mean_class_accuracy))
    if out_csv is not None:
        with open(out_csv, 'w', newline='') as file:
            writer = csv.writer(file)
            writer.writerow(['n_points', 'overall_accuracy', 'mean_class_accuracy'])
            writer.writerows((r.n_points, r.overall_accuracy, r.mean_class_accuracy) for r in rows)
    return rows


def export_sdw(params: ModelParams, cloud: PointCloud, layer: int, out_path: Path) -> int:
    """CSV of the first-level SDWs of one layer for one cloud; returns the row count.

    Columns: region, slot, x, y, z (relative coordinates), e0..e{F-1}.
    """
    if not 0 <= layer < len(params.layers):
        raise ConfigError(f'layer index {layer} outside 0..{len(params.layers) - 1}')
    if not params.layers[layer].lsa.use_lsa:
        raise ConfigError(f'layer {layer} generates no SDWs (LSA is disabled)')
    groupings = group_stages(params.config, cloud.coords[None])
    records: list[LSARecord] = []
    forward_classify(params, cloud, 'infer', recorder=records, groupings=groupings)
    sdw = records[layer].sdw[0][0]
    relative = groupings[layer].relative_coords[0]
    n_regions, k, channels = sdw.shape
    with open(out_path, 'w', newline='') as file:
        writer = csv.writer(file)
        writer.writerow(['region', 'slot', 'x', 'y', 'z'] + [f'e{c}' for c in range(channels)])
        for region in range(n_regions):
            for slot in range(k):
                writer.writerow(
                    [region, slot]
                    + [repr(float(v)) for v in relative[region, slot]]
                    + [repr(float(v)) for v in sdw[region, slot]]
                )
    return n_regions * k


ABLATION_VARIANTS: dict[str, dict[str, bool]] = {
    'baseline': dict(use_sfe=False, use_lsa=False),
    '+SFE': dict(use_sfe=True, use_lsa=False),
    '+LSA w/o region encoder': dict(use_sfe=False, use_lsa=True, use_region_encoder=False),
    '+LSA w/o pool modulation': dict(use_sfe=False, use_lsa=True, use_modulated_pool=False),
    '+LSA': dict(use_sfe=False, use_lsa=True),
    '+LSA+SFE': dict(use_sfe=True, use_lsa=True),
}


@dataclass(frozen=True)
class AblationRow:
    variant: str
    accuracies: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


def run_ablation(
        config: NetworkConfig,
        seeds: Sequence[int],
        out_dir: Path,
        train_set,
        test_set,
        epochs: int | None = None,
        augment: AugmentOptions | None = None,
        ledger: RunLedger | None = None,
        data: dict | None = None,
) -> list[AblationRow]:
    """Train every variant on every seed over the same data stream; returns final test OA.

    Flags only change the network, so a seed yields identical batches,
    augmentations and head-dropout draws for all variants.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant, flags in ABLATION_VARIANTS.items():
        variant_config = config.with_flags(**{'use_region_encoder': True, 'use_modulated_pool': True, **flags})
        accuracies = []
        for seed in seeds:
            slug = variant.replace('+', 'plus-').replace(' ', '-').replace('/', '')
            run = TrainRun(
                config=variant_config,
                out_dir=out_dir / slug / f'seed_{seed}',
                seed=seed,
                epochs=epochs,
                augment=augment or AugmentOptions(),
                name=out_dir.name,
                variant=variant,
                data=data or {},
            )
            history = train(run, train_set, test_set, ledger=ledger).history
            accuracies.append(history[-1].get('test_oa', float('nan')))
        rows.append(AblationRow(variant, tuple(accuracies)))
        logger.info('%s: test OA %.4f ± %.4f', variant, rows[-1].mean, rows[-1].std)

    with open(out_dir / 'ablation.csv', 'w', newline='') as file:
        writer = csv.writer(file)
        writer.writerow(['variant', 'mean_oa', 'std_oa'] + [f'seed_{s}' for s in seeds])
        writer.writerows([r.variant, r.mean, r.std, *r.accuracies] for r in rows)
    return rows
