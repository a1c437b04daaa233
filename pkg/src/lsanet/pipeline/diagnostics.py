"""Finite-difference gradient suites, run at 64-bit precision."""
from __future__ import annotations

import logging
from typing import Callable, Literal

import numpy as np

from lsanet.autograd import (
    GradcheckResult,
    Tensor,
    add,
    batch_norm,
    check_gradients,
    concat,
    cross_entropy,
    ew_mul,
    expand,
    gather,
    matmul,
    precision,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
)
from lsanet.config import LayerSpec, NetworkConfig, TrainingConfig
from lsanet.errors import GradcheckFailure
from lsanet.geometry import group_batch
from lsanet.layers import BatchNormParams, LSALayerParams, SFEParams, SFEState, lsa_layer_forward, sfe_forward
from lsanet.network import build, forward_classify, group_stages


logger = logging.getLogger(__name__)

Scope = Literal['op', 'layer', 'network']
# (loss closure, tensors to check)
Case = tuple[Callable[[], Tensor], list[Tensor]]
CaseBuilder = Callable[[np.random.Generator], Case]

TOLERANCE = 1e-4
STEP = 1e-5


def _leaf(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def _away_from_zero(rng: np.random.Generator, *shape: int) -> Tensor:
    values = rng.standard_normal(shape)
    return Tensor(np.sign(values) * (0.1 + np.abs(values)), requires_grad=True)


def _projected(out_fn: Callable[[], Tensor], rng: np.random.Generator) -> Callable[[], Tensor]:
    """Scalar loss: the output dotted with a fixed random tensor"""
    weights: list[np.ndarray] = []

    def loss() -> Tensor:
        out = out_fn()
        if not weights:
            weights.append(rng.standard_normal(out.shape))
        return reduce_sum(ew_mul(out, Tensor(weights[0])))
    return loss


def _unary(op: Callable[[Tensor], Tensor], make: Callable[[np.random.Generator], Tensor]) -> CaseBuilder:
    def case(rng: np.random.Generator) -> Case:
        x = make(rng)
        return _projected(lambda: op(x), rng), [x]
    return case


def _binary(op: Callable[[Tensor, Tensor], Tensor], a_shape: tuple, b_shape: tuple) -> CaseBuilder:
    def case(rng: np.random.Generator) -> Case:
        a, b = _leaf(rng, *a_shape), _leaf(rng, *b_shape)
        return _projected(lambda: op(a, b), rng), [a, b]
    return case


def _gather_case(rng: np.random.Generator) -> Case:
    x = _leaf(rng, 2, 6, 3)
    index = rng.integers(0, 6, size=(2, 4, 3))
    return _projected(lambda: gather(x, index), rng), [x]


def _batch_norm_case(mode: Literal['train', 'infer']) -> CaseBuilder:
    def case(rng: np.random.Generator) -> Case:
        x = _leaf(rng, 2, 5, 4)
        params = BatchNormParams.create(4, np.float64)
        params.gamma.data[...] = rng.uniform(0.5, 1.5, size=4)
        params.beta.data[...] = rng.standard_normal(4)
        params.running_mean[...] = rng.standard_normal(4)
        params.running_var[...] = rng.uniform(0.5, 2.0, size=4)
        return _projected(lambda: batch_norm(x, params, mode), rng), [x, params.gamma, params.beta]
    return case


def _cross_entropy_case(rng: np.random.Generator) -> Case:
    logits = _leaf(rng, 5, 4, scale=2.0)
    labels = rng.integers(0, 4, size=5)
    return (lambda: cross_entropy(logits, labels)), [logits]


def _composition_case(rng: np.random.Generator) -> Case:
    """A random chain of up to six primitives over a (3, 4) input"""
    x = _leaf(rng, 3, 4)
    inputs = [x]
    steps: list[Callable[[Tensor], Tensor]] = []
    for _ in range(int(rng.integers(1, 7))):
        kind = int(rng.integers(0, 6))
        if kind == 0:
            w = _leaf(rng, 4, 4, scale=0.5)
            inputs.append(w)
            steps.append(lambda t, w=w: matmul(t, w))
        elif kind == 1:
            c = _leaf(rng, 4)
            inputs.append(c)
            steps.append(lambda t, c=c: ew_mul(t, c))
        elif kind == 2:
            b = _leaf(rng, 4)
            inputs.append(b)
            steps.append(lambda t, b=b: add(t, b))
        elif kind == 3:
            steps.append(sigmoid)
        elif kind == 4:
            steps.append(lambda t: reduce_mean(expand(t, axis=-2, size=2), axis=-2))
        else:
            steps.append(lambda t: ew_mul(sigmoid(t), t))

    def out() -> Tensor:
        t = x
        for step in steps:
            t = step(t)
        return t
    return _projected(out, rng), inputs


OP_CASES: dict[str, CaseBuilder] = {
    'matmul': _binary(matmul, (4, 3, 5), (5, 6)),
    'ew_mul': _binary(ew_mul, (3, 4, 5), (5,)),
    'add': _binary(add, (3, 4), (4,)),
    'sigmoid': _unary(sigmoid, lambda rng: _leaf(rng, 3, 4, scale=3.0)),
    'relu': _unary(relu, lambda rng: _away_from_zero(rng, 3, 4)),
    'reduce_max': _unary(lambda t: reduce_max(t, axis=-2)[0], lambda rng: _leaf(rng, 3, 5, 4)),
    'reduce_mean': _unary(lambda t: reduce_mean(t, axis=1), lambda rng: _leaf(rng, 3, 5, 4)),
    'reduce_sum': _unary(lambda t: reduce_sum(t, axis=1), lambda rng: _leaf(rng, 3, 5, 4)),
    'concat': _binary(lambda a, b: concat([a, b], axis=-1), (2, 3, 4), (2, 3, 2)),
    'expand': _unary(lambda t: expand(t, axis=-2, size=3), lambda rng: _leaf(rng, 2, 4)),
    'reshape': _unary(lambda t: reshape(t, (4, 3)), lambda rng: _leaf(rng, 2, 6)),
    'gather': _gather_case,
    'batch_norm[train]': _batch_norm_case('train'),
    'batch_norm[infer]': _batch_norm_case('infer'),
    'cross_entropy': _cross_entropy_case,
    'composition': _composition_case,
}


def _random_grouping(rng: np.random.Generator, n_points: int = 12, m: int = 4, k: int = 5):
    coords = 0.5 * rng.standard_normal((2, n_points, 3))
    return group_batch(coords, m, 1.5, k)


def _lsa_case(**flags) -> CaseBuilder:
    def case(rng: np.random.Generator) -> Case:
        grouping = _random_grouping(rng)
        x_in = _leaf(rng, *grouping.relative_coords.shape[:-1], 6)
        params = LSALayerParams.build(6, (4, 5, 6), rng, np.float64, **flags)
        out = _projected(lambda: lsa_layer_forward(grouping, x_in, params, 'train'), rng)
        return out, [x_in] + [t for _, t in params.named_parameters()]
    return case


def _sfe_case(with_state: bool) -> CaseBuilder:
    def case(rng: np.random.Generator) -> Case:
        grouping = _random_grouping(rng)
        state = SFEState(_leaf(rng, 2, 12, 5)) if with_state else None
        params = SFEParams.build(5 if with_state else 3, 4, rng, np.float64)

        def out() -> Tensor:
            inject, pooled = sfe_forward(grouping, state, params, 'train')
            return concat([reduce_sum(inject, axis=-2), pooled.features], axis=-1)
        inputs = [t for _, t in params.named_parameters()]
        return _projected(out, rng), ([state.features] if with_state else []) + inputs
    return case


def toy_config() -> NetworkConfig:
    """Two-stage network small enough for element-wise finite differences"""
    return NetworkConfig(
        layers=[LayerSpec(8, 4, (4, 4), 0.6), LayerSpec(1, 8, (4, 8))],
        head_widths=(8,),
        num_classes=3,
        dropout_rate=0.0,
        sfe_lift_widths=(4,),
        training=TrainingConfig(n_points=16),
    )


def _network_case(rng: np.random.Generator) -> Case:
    config = toy_config()
    params = build(config, int(rng.integers(2 ** 31)), np.float64)
    coords = rng.standard_normal((2, 16, 3))
    coords /= np.linalg.norm(coords, axis=-1).max()
    groupings = group_stages(config, coords)
    labels = rng.integers(0, config.num_classes, size=2)

    def loss() -> Tensor:
        return cross_entropy(forward_classify(params, coords, 'train', groupings=groupings), labels)
    return loss, [t for _, t in params.named_parameters()]


LAYER_CASES: dict[str, CaseBuilder] = {
    'lsa_layer': _lsa_case(),
    'lsa_layer[no region encoder]': _lsa_case(use_region_encoder=False),
    'lsa_layer[no pool modulation]': _lsa_case(use_modulated_pool=False),
    'lsa_layer[pre-relu sdw]': _lsa_case(sdw_pre_relu=True),
    'sfe[first stage]': _sfe_case(False),
    'sfe[chained]': _sfe_case(True),
}

NETWORK_CASES: dict[str, CaseBuilder] = {'toy_network': _network_case}

SCOPES: dict[str, dict[str, CaseBuilder]] = {'op': OP_CASES, 'layer': LAYER_CASES, 'network': NETWORK_CASES}


def run_gradcheck(
        scope: Scope,
        seed: int = 0,
        n_seeds: int = 20,
        max_entries: int | None = 16,
        tolerance: float = TOLERANCE,
) -> list[GradcheckResult]:
    """Worst relative error per target over `n_seeds` random instances.

    Scopes nest: 'layer' also runs the op suite, 'network' runs all three.
    """
    scopes = {'op': ['op'], 'layer': ['op', 'layer'], 'network': ['op', 'layer', 'network']}[scope]
    results = []
    with precision(np.float64):
        for name in scopes:
            for target, make_case in SCOPES[name].items():
                worst = 0.0
                for offset in range(n_seeds):
                    rng = np.random.default_rng([seed, offset])
                    loss_fn, inputs = make_case(rng)
                    errors = check_gradients(loss_fn, inputs, STEP, max_entries, rng)
                    worst = max([worst] + errors)
                results.append(GradcheckResult(target, worst, tolerance))
                logger.debug('gradcheck %s: worst relative error %.3g', target, worst)
    return results


def assert_gradients(results: list[GradcheckResult]) -> None:
    """Raise GradcheckFailure naming every target over its tolerance"""
    failed = [r for r in results if not r.passed]
    if failed:
        raise GradcheckFailure(
            'gradient check failed for ' + ', '.join(f'{r.target} ({r.worst_rel_error:.3g})' for r in failed)
        )
