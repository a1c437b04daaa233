from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import yaml

from lsanet.errors import ConfigError
from lsanet.settings import (
    BASE_LR,
    BATCH_SIZE,
    DECAY_INTERVAL_EPOCHS,
    DECAY_RATIO,
    DEFAULT_N_POINTS,
    LR_FLOOR,
)


@dataclass
class LayerSpec:
    """One backbone stage: N regions of K neighbors within `radius`, MLP widths F"""
    n_centroids: int
    k: int
    widths: tuple[int, ...]
    radius: float | None = None

    @property
    def is_group_all(self) -> bool:
        return self.n_centroids == 1


@dataclass
class TrainingConfig:
    base_lr: float = BASE_LR
    decay_ratio: float = DECAY_RATIO
    decay_interval_epochs: int = DECAY_INTERVAL_EPOCHS
    lr_floor: float = LR_FLOOR
    batch_size: int = BATCH_SIZE
    epochs: int = 250
    n_points: int = DEFAULT_N_POINTS


@dataclass
class NetworkConfig:
    layers: list[LayerSpec]
    head_widths: tuple[int, ...] = (512, 256)
    num_classes: int = 40
    dropout_rate: float = 0.4
    sfe_lift_widths: tuple[int, ...] = (32, 64)
    use_sfe: bool = True
    use_lsa: bool = True
    use_region_encoder: bool = True
    use_modulated_pool: bool = True
    sdw_pre_relu: bool = False
    region_mean: Literal['all', 'valid'] = 'all'
    sfe_combine: Literal['concat', 'sum'] = 'concat'
    training: TrainingConfig = field(default_factory=TrainingConfig)

    @property
    def sampled_layers(self) -> list[LayerSpec]:
        return [layer for layer in self.layers if not layer.is_group_all]

    def with_flags(self, **flags: bool) -> NetworkConfig:
        return dataclasses.replace(self, **flags)

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data['layers'] = [
            {'n_centroids': l.n_centroids, 'k': l.k, 'radius': l.radius, 'widths': list(l.widths)}
            for l in self.layers
        ]
        data['head_widths'] = list(self.head_widths)
        data['sfe_lift_widths'] = list(self.sfe_lift_widths)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NetworkConfig:
        data = dict(data)
        data.update(data.pop('flags', None) or {})
        _reject_unknown(cls, data, 'network config')
        if 'layers' not in data:
            raise ConfigError('network config needs a "layers" list')
        kwargs = {key: value for key, value in data.items() if key not in ('layers', 'training')}
        for key in ('head_widths', 'sfe_lift_widths'):
            if key in kwargs:
                kwargs[key] = tuple(int(v) for v in kwargs[key])
        for key in ('num_classes',):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        if 'dropout_rate' in kwargs:
            kwargs['dropout_rate'] = float(kwargs['dropout_rate'])
        training = data.get('training') or {}
        _reject_unknown(TrainingConfig, training, 'training config')
        return cls(
            layers=[_layer_from_dict(layer) for layer in data['layers']],
            training=TrainingConfig(**{
                f.name: type(getattr(TrainingConfig(), f.name))(training[f.name])
                for f in dataclasses.fields(TrainingConfig) if f.name in training
            }),
            **kwargs,
        )


LAYER_KEY_ALIASES = {'N': 'n_centroids', 'K': 'k', 'F': 'widths'}


def _layer_from_dict(data: dict[str, Any]) -> LayerSpec:
    data = {LAYER_KEY_ALIASES.get(key, key): value for key, value in data.items()}
    _reject_unknown(LayerSpec, data, 'layer spec')
    try:
        radius = data.get('radius')
        return LayerSpec(
            n_centroids=int(data['n_centroids']),
            k=int(data['k']),
            widths=tuple(int(w) for w in data['widths']),
            radius=None if radius is None else float(radius),
        )
    except KeyError as exc:
        raise ConfigError(f'layer spec is missing {exc.args[0]!r}') from exc


def _reject_unknown(cls: type, data: dict[str, Any], what: str) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f'{what}: unknown field {unknown[0]!r}')


def modelnet40_config() -> NetworkConfig:
    """Backbone of the ModelNet40 classifier"""
    return NetworkConfig(
        layers=[
            LayerSpec(512, 32, (64, 64, 128), 0.2),
            LayerSpec(128, 64, (128, 128, 256), 0.4),
            LayerSpec(1, 128, (256, 512, 1024)),
        ],
        num_classes=40,
    )


def desk_config() -> NetworkConfig:
    """Reduced backbone for the 4-class synthetic shapes, trainable on a CPU"""
    return NetworkConfig(
        layers=[
            LayerSpec(128, 16, (32, 32, 64), 0.2),
            LayerSpec(32, 32, (64, 64, 128), 0.4),
            LayerSpec(1, 32, (128, 256, 256)),
        ],
        num_classes=4,
        training=TrainingConfig(epochs=60),
    )


PRESETS = {'modelnet40': modelnet40_config, 'desk': desk_config}


def load_network_config(source: str | Path) -> NetworkConfig:
    """Preset name or path to a JSON/YAML file mirroring NetworkConfig"""
    if str(source) in PRESETS:
        return PRESETS[str(source)]()
    path = Path(source)
    if not path.exists():
        raise ConfigError(f'no preset or config file named {source!r}')
    with open(path) as file:
        data = yaml.safe_load(file)
    if not isinstance(data, dict):
        raise ConfigError(f'{path}: expected a mapping at top level')
    return NetworkConfig.from_dict(data)


class RunRecord:
    """Class used to manage run.yaml next to a run's checkpoints"""
    file_name = 'run.yaml'

    def __init__(self, run_dir: Path) -> None:
        self.path = Path(run_dir) / self.file_name

    def exists(self) -> bool:
        return self.path.exists()

    def write(self, record: dict[str, Any]) -> None:
        with open(self.path, 'w') as file:
            yaml.dump(record, file, sort_keys=False)

    def read(self) -> dict[str, Any]:
        if not self.path.exists():
            raise ConfigError(f'no run record at {self.path}')
        with open(self.path) as file:
            return yaml.safe_load(file)

    def update(self, **values: Any) -> None:
        """Update run.yaml with the given top-level values"""
        record = self.read()
        record.update(values)
        self.write(record)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig.from_dict(self.read()['config'])
