class LSANetError(Exception):
    """Base class of every error raised by lsanet"""


class ShapeError(LSANetError, ValueError):
    """Tensor extents do not fit the operation"""


class TapeError(LSANetError, RuntimeError):
    """Misuse of a computation tape"""


class NonFiniteGradientError(LSANetError, FloatingPointError):
    """Optimizer step refused because a gradient holds NaN or Inf"""


class NonFiniteLossError(LSANetError, FloatingPointError):
    """Training loss became NaN or Inf"""


class ConfigError(LSANetError, ValueError):
    """Network or training configuration violates a constraint"""


class LayerConfigError(ConfigError):
    """Parameter extents of one LSA sub-layer do not chain"""

    def __init__(self, sub_layer: int, message: str) -> None:
        super().__init__(f'sub-layer {sub_layer}: {message}')
        self.sub_layer = sub_layer


class GeometryError(LSANetError, ValueError):
    """Invalid sampling or grouping request"""


class DegenerateRegionError(GeometryError):
    """A ball-query region has no point inside its radius"""


class OffFormatError(LSANetError, ValueError):
    """Malformed OFF mesh file"""


class DegenerateMeshError(LSANetError, ValueError):
    """Mesh has zero surface area"""


class EmptyClassError(LSANetError, ValueError):
    """A dataset class directory yielded no usable mesh"""


class CheckpointError(LSANetError, ValueError):
    """Checkpoint file is unreadable or does not match the model"""


class GradcheckFailure(LSANetError, AssertionError):
    """Analytic and numeric gradients disagree"""
