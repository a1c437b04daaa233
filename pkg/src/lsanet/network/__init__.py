"""Collection of classifier assembly, parameter accounting and metrics"""


# Local imports.
from lsanet.autograd import cross_entropy
from .model import (
    ClassifierHead,
    ModelParams,
    StageParams,
    build,
    count_parameters,
    dropout,
    forward_classify,
    group_stages,
    head_forward,
)
from .metrics import EvalResult, classification_metrics, evaluate, predict, repeat_points, subsample

# Public symbols
__all__ = [
    'ClassifierHead',
    'ModelParams',
    'StageParams',
    'build',
    'count_parameters',
    'dropout',
    'forward_classify',
    'group_stages',
    'head_forward',
    'EvalResult',
    'classification_metrics',
    'cross_entropy',
    'evaluate',
    'predict',
    'repeat_points',
    'subsample',
]
