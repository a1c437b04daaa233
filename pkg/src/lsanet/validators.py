from lsanet.config import NetworkConfig
from lsanet.errors import ConfigError


def validate_network_config(config: NetworkConfig) -> None:
    """Raise ConfigError for the first constraint the config violates"""
    layers = config.layers
    if not layers:
        raise ConfigError('at least one layer is required')
    if layers[-1].n_centroids != 1:
        raise ConfigError(f'last layer must group all points (N=1), got N={layers[-1].n_centroids}')
    for i, layer in enumerate(layers):
        if layer.n_centroids < 1:
            raise ConfigError(f'layer {i}: N must be positive')
        if i > 0 and layer.n_centroids >= layers[i - 1].n_centroids:
            raise ConfigError(
                f'layer {i}: N must strictly decrease ({layers[i - 1].n_centroids} -> {layer.n_centroids})'
            )
        if layer.k < 1:
            raise ConfigError(f'layer {i}: K must be at least 1')
        if not layer.is_group_all and (layer.radius is None or layer.radius <= 0):
            raise ConfigError(f'layer {i}: sampled layers need a positive radius')
        if not layer.widths or any(w < 1 for w in layer.widths):
            raise ConfigError(f'layer {i}: MLP widths must be positive, got {layer.widths}')
    if config.use_sfe:
        n_sampled = len(config.sampled_layers)
        if len(config.sfe_lift_widths) != n_sampled:
            raise ConfigError(
                f'sfe_lift_widths needs one width per sampled layer ({n_sampled}), '
                f'got {len(config.sfe_lift_widths)}'
            )
        if any(w < 1 for w in config.sfe_lift_widths):
            raise ConfigError('SFE lift widths must be positive')
    if any(w < 1 for w in config.head_widths):
        raise ConfigError('head widths must be positive')
    if config.num_classes < 2:
        raise ConfigError('at least two classes are required')
    if not 0.0 <= config.dropout_rate < 1.0:
        raise ConfigError(f'dropout_rate must lie in [0, 1), got {config.dropout_rate}')
    if config.region_mean not in ('all', 'valid'):
        raise ConfigError(f'region_mean must be "all" or "valid", got {config.region_mean!r}')
    if config.sfe_combine not in ('concat', 'sum'):
        raise ConfigError(f'sfe_combine must be "concat" or "sum", got {config.sfe_combine!r}')
    training = config.training
    if training.base_lr <= 0 or not 0 < training.decay_ratio <= 1 or training.decay_interval_epochs < 1:
        raise ConfigError('learning-rate schedule needs base_lr > 0, 0 < decay_ratio <= 1, interval >= 1')
    if training.batch_size < 1 or training.epochs < 1:
        raise ConfigError('batch_size and epochs must be positive')
    if training.n_points < layers[0].n_centroids:
        raise ConfigError(
            f'n_points {training.n_points} is smaller than the first layer sample count {layers[0].n_centroids}'
        )
