import numpy as np
import pytest

from eam_classifier import tensor_core
from eam_classifier.tensor_core import (
    BroadcastError,
    Conv2dParams,
    DimensionError,
    MlpParams,
)


def conv2d_loops(x, weight, bias, stride=1, padding=0, dilation=1):
    """Reference convolution, one output value at a time."""
    n, c_in, h, w = x.shape
    c_out, _, k, _ = weight.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    eff = dilation * (k - 1) + 1
    out_h = (h + 2 * padding - eff) // stride + 1
    out_w = (w + 2 * padding - eff) // stride + 1
    out = np.zeros((n, c_out, out_h, out_w))
    for b in range(n):
        for o in range(c_out):
            for i in range(out_h):
                for j in range(out_w):
                    total = bias[o]
                    for c in range(c_in):
                        for ki in range(k):
                            for kj in range(k):
                                total += (weight[o, c, ki, kj] *
                                          xp[b, c, i * stride + ki * dilation,
                                             j * stride + kj * dilation])
                    out[b, o, i, j] = total
    return out


@pytest.mark.parametrize("k,stride,padding,dilation", [
    (1, 1, 0, 1),
    (3, 1, 1, 1),
    (3, 2, 1, 1),
    (3, 1, 2, 2),
    (7, 1, 3, 1),
    (3, 1, 6, 6),
])
def test_conv2d_matches_loops(rng, k, stride, padding, dilation):
    x = rng.normal(size=(2, 3, 9, 9))
    weight = rng.normal(size=(4, 3, k, k))
    bias = rng.normal(size=4)
    p = Conv2dParams(weight, bias, stride, padding, dilation)

    np.testing.assert_allclose(
        tensor_core.conv2d(x, p),
        conv2d_loops(x, weight, bias, stride, padding, dilation),
        atol=1e-12)


def test_conv2d_matches_loops_on_random_geometries(rng):
    for _ in range(100):
        k = int(rng.choice([1, 3, 7]))
        dilation = int(rng.choice([1, 6, 12, 18]))
        padding = dilation * (k - 1) // 2
        extent = int(rng.integers(3, 9))
        c_in, c_out = (int(c) for c in rng.integers(1, 4, size=2))
        x = rng.normal(size=(1, c_in, extent, extent))
        weight = rng.normal(size=(c_out, c_in, k, k))
        bias = rng.normal(size=c_out)
        p = Conv2dParams(weight, bias, 1, padding, dilation)

        np.testing.assert_allclose(
            tensor_core.conv2d(x, p),
            conv2d_loops(x, weight, bias, 1, padding, dilation),
            rtol=1e-6,
            atol=1e-9,
            err_msg=f"k={k} dilation={dilation} extent={extent}")


def test_conv2d_shape_rule():
    p = Conv2dParams(np.zeros((5, 2, 3, 3)), np.zeros(5), stride=2, padding=1)
    out = tensor_core.conv2d(np.zeros((1, 2, 16, 16)), p)

    assert out.shape == (1, 5, 8, 8)


def test_conv2d_dilation_wider_than_map_reads_only_the_center():
    x = np.arange(4.0).reshape(1, 1, 2, 2)
    weight = np.zeros((1, 1, 3, 3))
    weight[0, 0, 1, 1] = 1.0
    p = Conv2dParams(weight, np.zeros(1), padding=18, dilation=18)

    np.testing.assert_array_equal(tensor_core.conv2d(x, p), x)


def test_conv2d_rejects_channel_mismatch():
    p = Conv2dParams(np.zeros((1, 4, 1, 1)), np.zeros(1))
    with pytest.raises(DimensionError) as err:
        tensor_core.conv2d(np.zeros((1, 3, 4, 4)), p)

    assert err.value.axis == "c"
    assert err.value.expected == 4
    assert err.value.actual == 3


def test_conv2d_rejects_too_small_map():
    p = Conv2dParams(np.zeros((1, 1, 3, 3)), np.zeros(1))
    with pytest.raises(DimensionError):
        tensor_core.conv2d(np.zeros((1, 1, 2, 2)), p)


def test_conv2d_params_validation():
    with pytest.raises(ValueError):
        Conv2dParams(np.zeros((1, 1, 3, 2)), np.zeros(1))
    with pytest.raises(DimensionError):
        Conv2dParams(np.zeros((2, 1, 3, 3)), np.zeros(1))
    with pytest.raises(ValueError):
        Conv2dParams(np.zeros((1, 1, 3, 3)), np.zeros(1), stride=0)


def test_with_dilation_keeps_padding_equal_to_dilation():
    p = Conv2dParams(np.zeros((1, 1, 3, 3)), np.zeros(1), padding=18,
                     dilation=18)
    clamped = p.with_dilation(3)

    assert (clamped.dilation, clamped.padding) == (3, 3)
    assert clamped.weight is p.weight


def test_conv2d_backward_matches_transposed_loops(rng):
    x = rng.normal(size=(1, 2, 5, 5))
    weight = rng.normal(size=(3, 2, 3, 3))
    p = Conv2dParams(weight, np.zeros(3), stride=2, padding=1)
    grad_out = rng.normal(size=(1, 3, 3, 3))

    dx, dweight, dbias = tensor_core.conv2d_backward(x, p, grad_out)

    # conv is linear in x: <grad_out, conv(x)> has gradient dx.
    def objective(xv):
        return float((tensor_core.conv2d(xv, p) * grad_out).sum())

    eps = 1e-6
    for index in [(0, 0, 0, 0), (0, 1, 2, 3), (0, 0, 4, 4)]:
        bumped = x.copy()
        bumped[index] += eps
        numeric = (objective(bumped) - objective(x)) / eps
        assert dx[index] == pytest.approx(numeric, abs=1e-5)
    assert dweight.shape == weight.shape
    np.testing.assert_allclose(dbias, grad_out.sum(axis=(0, 2, 3)))


def test_sigmoid_is_stable_for_large_inputs():
    out = tensor_core.sigmoid(np.array([-1000.0, 0.0, 1000.0]))

    np.testing.assert_allclose(out, [0.0, 0.5, 1.0])
    assert np.all(np.isfinite(out))


def test_relu():
    np.testing.assert_array_equal(tensor_core.relu(np.array([-1.0, 0.0, 2.0])),
                                  [0.0, 0.0, 2.0])


def test_broadcast_shape():
    assert tensor_core.broadcast_shape((2, 4, 1, 1),
                                       (2, 1, 5, 5)) == (2, 4, 5, 5)


def test_broadcast_rejects_batch_mismatch():
    with pytest.raises(BroadcastError) as err:
        tensor_core.eltwise_mul(np.zeros((2, 3, 4, 4)), np.zeros((1, 3, 4, 4)))

    assert err.value.axis == "n"


def test_broadcast_rejects_channel_mismatch():
    with pytest.raises(BroadcastError) as err:
        tensor_core.eltwise_add(np.zeros((1, 3, 4, 4)), np.zeros((1, 2, 4, 4)))

    assert err.value.axis == "c"
    assert "not broadcastable" in str(err.value)


def test_unbroadcast_sums_expanded_axes():
    grad = np.ones((2, 3, 4, 4))

    np.testing.assert_array_equal(tensor_core.unbroadcast(grad, (2, 3, 1, 1)),
                                  np.full((2, 3, 1, 1), 16.0))


def test_channel_pools(rng):
    x = rng.normal(size=(2, 3, 4, 5))

    np.testing.assert_allclose(
        tensor_core.channel_pool_avg(x)[:, :, 0, 0], x.mean(axis=(2, 3)))
    np.testing.assert_allclose(
        tensor_core.channel_pool_max(x)[:, :, 0, 0], x.max(axis=(2, 3)))


def test_spatial_pool_stacks_mean_and_max(rng):
    x = rng.normal(size=(1, 4, 3, 3))
    out = tensor_core.spatial_pool(x)

    assert out.shape == (1, 2, 3, 3)
    for i in range(3):
        for j in range(3):
            assert out[0, 0, i, j] == pytest.approx(x[0, :, i, j].mean())
            assert out[0, 1, i, j] == x[0, :, i, j].max()


def test_global_avg_pool_shape(rng):
    x = rng.normal(size=(2, 5, 4, 4))

    assert tensor_core.global_avg_pool(x).shape == (2, 5)


def test_max_pool2_matches_loops(rng):
    x = rng.normal(size=(2, 3, 6, 4))
    out = tensor_core.max_pool2(x)

    for i in range(3):
        for j in range(2):
            np.testing.assert_array_equal(
                out[:, :, i, j], x[:, :, 2 * i:2 * i + 2,
                                   2 * j:2 * j + 2].max(axis=(2, 3)))


def test_max_pool2_rejects_odd_extent():
    with pytest.raises(DimensionError):
        tensor_core.max_pool2(np.zeros((1, 1, 5, 4)))


def test_max_pool2_backward_routes_to_first_maximum():
    x = np.ones((1, 1, 2, 2))
    grad = tensor_core.max_pool2_backward(x, np.full((1, 1, 1, 1), 3.0))

    np.testing.assert_array_equal(grad[0, 0], [[3.0, 0.0], [0.0, 0.0]])


def test_mlp_shared(rng):
    p = MlpParams(rng.normal(size=(4, 2)), rng.normal(size=2),
                  rng.normal(size=(2, 4)), rng.normal(size=4))
    v = rng.normal(size=(3, 4, 1, 1))
    out = tensor_core.mlp_shared(v, p)

    for b in range(3):
        hidden = np.maximum(v[b, :, 0, 0] @ p.w1 + p.b1, 0)
        np.testing.assert_allclose(out[b, :, 0, 0], hidden @ p.w2 + p.b2)


def test_mlp_params_validation():
    with pytest.raises(DimensionError):
        MlpParams(np.zeros((4, 2)), np.zeros(2), np.zeros((4, 2)), np.zeros(4))


def test_concat_channels_checks_other_axes():
    with pytest.raises(DimensionError):
        tensor_core.concat_channels(
            [np.zeros((1, 2, 4, 4)), np.zeros((1, 2, 3, 4))])

    out = tensor_core.concat_channels(
        [np.zeros((1, 2, 4, 4)), np.ones((1, 3, 4, 4))])
    assert out.shape == (1, 5, 4, 4)


def test_concat_then_slice_recovers_parts(rng):
    parts = [rng.normal(size=(2, c, 3, 5)) for c in (1, 4, 2)]
    out = tensor_core.concat_channels(parts)

    bounds = np.cumsum([0, 1, 4, 2])
    for part, start, stop in zip(parts, bounds[:-1], bounds[1:]):
        np.testing.assert_array_equal(out[:, start:stop], part)


def test_softmax_rows_is_shift_invariant():
    logits = np.array([[1000.0, 1001.0, 1002.0], [0.0, 1.0, 2.0]])
    out = tensor_core.softmax_rows(logits)

    np.testing.assert_allclose(out[0], out[1])
    np.testing.assert_allclose(out.sum(axis=1), 1.0)


def test_precision_switch():
    with tensor_core.precision("float32"):
        assert tensor_core.asarray([1.0]).dtype == np.float32
    assert tensor_core.asarray([1.0]).dtype == np.float64

    with pytest.raises(ValueError):
        tensor_core.set_precision("float16")


def test_check_tensor4_rejects_wrong_rank():
    with pytest.raises(DimensionError) as err:
        tensor_core.check_tensor4(np.zeros((3, 4, 4)))

    assert err.value.axis == "rank"


def test_conv2d_all_ones_kernel_sums_neighbourhoods():
    x = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    p = Conv2dParams(np.ones((1, 1, 3, 3)), np.zeros(1), padding=1)
    out = tensor_core.conv2d(x, p)

    assert out[0, 0, 1, 1] == 45.0
    assert out[0, 0, 0, 0] == 12.0
    np.testing.assert_allclose(out, conv2d_loops(x, p.weight, p.bias,
                                                 padding=1))


def test_conv2d_identity_kernel(rng):
    x = rng.normal(size=(2, 4, 5, 5))
    weight = np.eye(4).reshape(4, 4, 1, 1)
    p = Conv2dParams(weight, np.zeros(4))

    np.testing.assert_allclose(tensor_core.conv2d(x, p), x)


def test_softmax_rows_closed_form():
    out = tensor_core.softmax_rows(np.array([[0.0, np.log(3.0)]]))

    np.testing.assert_allclose(out, [[0.25, 0.75]])


def test_pools_of_small_plane():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])

    assert tensor_core.channel_pool_avg(x).item() == 2.5
    assert tensor_core.channel_pool_max(x).item() == 4.0
    assert tensor_core.max_pool2(x).item() == 4.0
    assert tensor_core.global_avg_pool(np.array([[[[0.0, 4.0], [0.0, 0.0]]]
                                                ])).item() == 1.0
