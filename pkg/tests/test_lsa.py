import dataclasses

import numpy as np
import pytest

from lsanet.autograd import Tensor, concat, reduce_max, sigmoid
from lsanet.errors import LayerConfigError, ShapeError
from lsanet.geometry import ball_query, group_all, group_batch
from lsanet.layers import (
    LSALayerParams,
    LSARecord,
    canonical_slot_order,
    gather_neighbors,
    lsa_layer_forward,
    point_spatial_feature,
    region_spatial_feature,
    sdw_first,
    sdw_next,
    sdw_modulated_max_pool,
    sdw_modulated_mlp_step,
    shared_mlp_step,
)
from lsanet.network import count_parameters


def layer_input(grouping, rng, n_features=5):
    """Gathered per-point features next to the relative coordinates"""
    n_points = grouping.neighbor_indices.max() + 1
    per_point = Tensor(rng.standard_normal((1, n_points, n_features)))
    gathered = gather_neighbors(per_point, grouping.neighbor_indices)
    return concat([gathered, Tensor(grouping.relative_coords)], axis=-1)


def plain_forward(x, params, mode='infer'):
    for stage in params.mlp:
        x = shared_mlp_step(x, stage, mode)
    return reduce_max(x, axis=-2)[0]


def permuted(grouping, x_in, perm):
    regrouped = dataclasses.replace(
        grouping,
        neighbor_indices=np.take_along_axis(grouping.neighbor_indices, perm, axis=-1),
        relative_coords=np.take_along_axis(grouping.relative_coords, perm[..., None], axis=-2),
    )
    return regrouped, Tensor(np.take_along_axis(x_in.data, perm[..., None], axis=-2))


def test_toy_layer_parameter_count():
    params = LSALayerParams.build(3, (4,), np.random.default_rng(0))
    assert count_parameters(params)[0] == 916


def test_flags_remove_their_weights():
    rng = np.random.default_rng(0)
    no_lsa = LSALayerParams.build(6, (4, 5, 6), rng, use_lsa=False)
    assert no_lsa.w0 is None and no_lsa.ws == []
    no_region = LSALayerParams.build(6, (4, 5, 6), rng, use_region_encoder=False)
    assert no_region.w1 is None
    assert no_region.ws[0].shape == (64, 4)
    no_pool = LSALayerParams.build(6, (4, 5, 6), rng, use_modulated_pool=False)
    assert [w.shape for w in no_pool.ws] == [(128, 4), (4, 5)]


def test_broken_sdw_chain_names_the_sub_layer():
    params = LSALayerParams.build(6, (4, 5, 6), np.random.default_rng(0))
    params.ws[1] = Tensor(np.zeros((7, 5), dtype=np.float32))
    with pytest.raises(LayerConfigError) as info:
        params.validate()
    assert info.value.sub_layer == 1


def test_wrong_input_width_is_rejected(grouping, rng):
    params = LSALayerParams.build(4, (8,), rng, np.float64)
    with pytest.raises(LayerConfigError):
        lsa_layer_forward(grouping, layer_input(grouping, rng), params)


def test_modulated_step_equals_per_point_scaled_weight(rng):
    x = rng.standard_normal((2, 5, 4, 6))
    e = rng.uniform(0.01, 0.99, size=(2, 5, 4, 6))
    weight = rng.standard_normal((6, 7))
    out = sdw_modulated_mlp_step(Tensor(x), Tensor(e), Tensor(weight), activation=False).data
    scaled = e[..., :, None] * weight
    expected = np.einsum('bmkc,bmkcd->bmkd', x, scaled)
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)


def test_modulated_pool_rejects_mismatched_weights():
    with pytest.raises(ShapeError):
        sdw_modulated_max_pool(Tensor(np.ones((1, 2, 3, 4))), Tensor(np.ones((1, 2, 3, 5))))


def test_region_half_is_shared_by_every_slot(grouping, rng):
    params = LSALayerParams.build(8, (8, 8, 16), rng, np.float64)
    record = LSARecord()
    lsa_layer_forward(grouping, layer_input(grouping, rng), params, recorder=record)
    regional = record.spatial[..., 64:]
    assert record.spatial.shape == (1, 20, 8, 128)
    np.testing.assert_array_equal(regional, np.broadcast_to(regional[..., :1, :], regional.shape))


def test_sdws_lie_in_open_unit_interval(grouping, rng):
    params = LSALayerParams.build(8, (8, 8, 16), rng, np.float64)
    record = LSARecord()
    lsa_layer_forward(grouping, layer_input(grouping, rng), params, recorder=record)
    assert [level.shape[-1] for level in record.sdw] == [8, 8, 16]
    for level in record.sdw:
        assert np.all((level > 0) & (level < 1))


@pytest.mark.parametrize('mode', ['infer', 'train'])
def test_output_ignores_neighbor_order(grouping, rng, mode):
    params = LSALayerParams.build(8, (8, 8, 16), rng, np.float64)
    x_in = layer_input(grouping, rng)
    expected = lsa_layer_forward(grouping, x_in, params, mode).data
    for _ in range(100):
        perm = np.stack([rng.permutation(grouping.k) for _ in range(grouping.num_regions)])[None]
        regrouped, shuffled = permuted(grouping, x_in, perm)
        np.testing.assert_array_equal(lsa_layer_forward(regrouped, shuffled, params, mode).data, expected)


def test_canonical_order_sorts_by_coordinates():
    rel = np.array([[[[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0], [0.0, 1.0, 0.0]]]])
    assert canonical_slot_order(rel).tolist() == [[[1, 2, 0]]]


def test_unit_sdws_reproduce_the_plain_path(grouping, rng):
    params = LSALayerParams.build(8, (8, 8, 16), rng, np.float64)
    x_in = layer_input(grouping, rng)
    out = lsa_layer_forward(grouping, x_in, params, sdw_constant=1.0).data
    np.testing.assert_allclose(out, plain_forward(x_in, params).data, rtol=0, atol=1e-12)


def test_layer_without_lsa_is_the_plain_path(grouping, rng):
    params = LSALayerParams.build(8, (8, 8, 16), rng, np.float64, use_lsa=False)
    x_in = layer_input(grouping, rng)
    out = lsa_layer_forward(grouping, x_in, params).data
    np.testing.assert_allclose(out, plain_forward(x_in, params).data, rtol=0, atol=1e-12)


def test_coordinates_are_the_default_input(grouping, rng):
    params = LSALayerParams.build(3, (4, 8), rng, np.float64)
    out = lsa_layer_forward(grouping, None, params)
    explicit = lsa_layer_forward(grouping, Tensor(grouping.relative_coords), params)
    assert out.shape == (1, 20, 8)
    np.testing.assert_array_equal(out.data, explicit.data)


def test_unbatched_grouping_gives_unbatched_output(rng):
    coords = rng.standard_normal((12, 3))
    params = LSALayerParams.build(3, (4, 8), rng, np.float64)
    out = lsa_layer_forward(group_all(coords), None, params)
    assert out.shape == (1, 8)


def test_valid_region_mean_matches_full_mean_without_padding(rng):
    coords = rng.standard_normal((12, 3))
    grouping = group_all(coords)
    full = LSALayerParams.build(3, (4,), np.random.default_rng(5), np.float64)
    valid = LSALayerParams.build(3, (4,), np.random.default_rng(5), np.float64, region_mean='valid')
    np.testing.assert_allclose(
        lsa_layer_forward(grouping, None, valid).data,
        lsa_layer_forward(grouping, None, full).data,
        rtol=0, atol=1e-12,
    )


def test_valid_region_mean_skips_padding():
    coords = np.array([[0.0, 0, 0], [0.1, 0, 0], [0.0, 0.2, 0], [3.0, 0, 0], [0.0, 3.0, 0]])
    grouping = ball_query(coords, np.array([0]), radius=0.5, k=5)
    assert grouping.valid_counts.tolist() == [3]
    records = {}
    for mean in ('all', 'valid'):
        params = LSALayerParams.build(3, (4,), np.random.default_rng(5), np.float64, region_mean=mean)
        records[mean] = LSARecord()
        lsa_layer_forward(grouping, None, params, recorder=records[mean])
    expected = coords[[0, 1, 2]].mean(axis=0) - coords[0]
    w1 = LSALayerParams.build(3, (4,), np.random.default_rng(5), np.float64).w1.data
    np.testing.assert_allclose(records['valid'].spatial[0, 0, 64:], expected @ w1, atol=1e-12)
    assert not np.allclose(records['all'].spatial[0, 0, 64:], records['valid'].spatial[0, 0, 64:])


def test_spatial_features_on_hand_sized_inputs(float64):
    rel = Tensor(np.array([[[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]]))
    assert point_spatial_feature(rel, Tensor(np.ones((3, 1)))).data[0, :, 0].tolist() == [6.0, 0.0]
    pair = Tensor(np.array([[[1.0, 5.0, 5.0], [3.0, -5.0, 1.0]]]))
    assert region_spatial_feature(pair, Tensor(np.array([[1.0], [0.0], [0.0]]))).data.tolist() == [[2.0]]
    symmetric = Tensor(np.array([[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]]))
    np.testing.assert_array_equal(region_spatial_feature(symmetric, Tensor(np.ones((3, 4)))).data, 0.0)


def test_sdw_chain_on_scalar_weights(float64):
    spatial = Tensor(np.eye(128)[:1])
    ws1 = Tensor(np.zeros((128, 1)))
    ws1.data[0, 0] = 2.0
    e1 = sdw_first(spatial, ws1)
    assert e1.item() == pytest.approx(0.8807970779778823, abs=1e-14)
    e2 = sdw_next(e1, Tensor(np.array([[2.0]])))
    assert e2.item() == pytest.approx(0.8534092, abs=1e-7)
    np.testing.assert_array_equal(sdw_first(spatial, Tensor(np.zeros((128, 3)))).data, 0.5)


def test_modulated_step_scalar():
    out = sdw_modulated_mlp_step(Tensor([[2.0]]), Tensor([[0.5]]), Tensor([[3.0]]), activation=False)
    assert out.data.tolist() == [[3.0]]


def test_modulated_pool_on_hand_sized_inputs():
    x = Tensor(np.array([[[1.0, 4.0], [3.0, 2.0]]]))
    assert sdw_modulated_max_pool(x, Tensor(np.ones((1, 2, 2)))).data.tolist() == [[3.0, 4.0]]
    e = Tensor(np.array([[[1.0, 0.5], [0.5, 1.0]]]))
    assert sdw_modulated_max_pool(x, e).data.tolist() == [[1.5, 2.0]]


def reduced_layer(rel, params, spatial_of, modulate_pool):
    """NumPy composition of an LSA layer in infer mode with coordinates as input"""
    order = canonical_slot_order(rel, rel)
    rel = np.take_along_axis(rel, order[..., None], axis=-2)

    def stage(x, mlp):
        out = x @ mlp.weight.data
        bn = mlp.bn
        out = bn.gamma.data * ((out - bn.running_mean) * (1.0 / np.sqrt(bn.running_var + bn.eps))) + bn.beta.data
        return np.where(out > 0, out, 0.0)

    levels = [sigmoid(Tensor(spatial_of(rel) @ params.ws[0].data)).data]
    for weight in params.ws[1:]:
        levels.append(sigmoid(Tensor(levels[-1] @ weight.data)).data)
    x = stage(rel, params.mlp[0])
    for level, mlp in enumerate(params.mlp[1:]):
        x = stage(x * levels[level], mlp)
    if modulate_pool:
        x = x * levels[-1]
    return x.max(axis=-2)


@pytest.fixture
def batched_grouping():
    coords = np.random.default_rng(7).uniform(-1.0, 1.0, size=(2, 48, 3))
    return group_batch(coords, 12, 0.6, 8)


def test_layer_without_region_encoder_uses_the_point_encoder_alone(batched_grouping, rng):
    params = LSALayerParams.build(3, (8, 8, 16), rng, np.float64, use_region_encoder=False)
    assert params.w1 is None
    assert params.ws[0].shape == (64, 8)
    expected = reduced_layer(
        batched_grouping.relative_coords, params,
        lambda rel: rel @ params.w0.data, modulate_pool=True,
    )
    assert np.array_equal(lsa_layer_forward(batched_grouping, None, params).data, expected)


def test_layer_without_pool_modulation_takes_the_plain_max(batched_grouping, rng):
    params = LSALayerParams.build(3, (8, 8, 16), rng, np.float64, use_modulated_pool=False)
    assert [w.shape[1] for w in params.ws] == [8, 8]

    def spatial_of(rel):
        per_point = rel @ params.w0.data
        regional = (rel @ params.w1.data).mean(axis=-2)
        return np.concatenate([per_point, np.broadcast_to(regional[..., None, :], per_point.shape)], axis=-1)

    expected = reduced_layer(batched_grouping.relative_coords, params, spatial_of, modulate_pool=False)
    assert np.array_equal(lsa_layer_forward(batched_grouping, None, params).data, expected)
