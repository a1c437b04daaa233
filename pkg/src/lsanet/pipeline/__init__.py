"""Collection of datasets, training, reports and diagnostics"""


# Local imports.
from .datasets import (
    SHAPES,
    PointCloudDataset,
    SyntheticShapeSpec,
    load_off_dir,
    load_splits,
    parse_off,
    sample_off_mesh,
    sample_shape,
    synth_dataset,
)
from .trainer import MetricsLog, TrainResult, TrainRun, epoch_order, overfit_batch, train, train_step
from .reports import (
    ABLATION_VARIANTS,
    AblationRow,
    DensityRow,
    eval_density_sweep,
    export_sdw,
    load_model,
    run_ablation,
)
from .diagnostics import assert_gradients, run_gradcheck, toy_config

# Public symbols
__all__ = [
    'SHAPES',
    'PointCloudDataset',
    'SyntheticShapeSpec',
    'load_off_dir',
    'load_splits',
    'parse_off',
    'sample_off_mesh',
    'sample_shape',
    'synth_dataset',
    'MetricsLog',
    'TrainResult',
    'TrainRun',
    'epoch_order',
    'overfit_batch',
    'train',
    'train_step',
    'ABLATION_VARIANTS',
    'AblationRow',
    'DensityRow',
    'eval_density_sweep',
    'export_sdw',
    'load_model',
    'run_ablation',
    'assert_gradients',
    'run_gradcheck',
    'toy_config',
]
