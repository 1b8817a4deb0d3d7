import numpy as np
import pytest

from eam_classifier import attention, tensor_core
from eam_classifier.attention import MIDDLE
from eam_classifier.autodiff import constant
from eam_classifier.configs import AttentionVariant, EamConfig
from eam_classifier.params import ParamStore
from eam_classifier.tensor_core import DimensionError

C_PRIME = 8


def _params(rng, cfg, in_channels=C_PRIME, zero_attention=False,
            identity_reduce=False):
    store = ParamStore(rng)
    p = attention.build_eam_params(store,
                                   "eam",
                                   in_channels,
                                   cfg,
                                   zero_attention=zero_attention)
    if identity_reduce:
        p.reduce.weight.value[...] = np.eye(C_PRIME).reshape(
            C_PRIME, C_PRIME, 1, 1)
    return store, p


@pytest.fixture(name="cfg")
def fixture_cfg():
    return EamConfig(c_prime=C_PRIME, mlp_reduction_r=2)


def test_channel_attention_of_zero_mlp_is_half(rng, cfg):
    _, p = _params(rng, cfg, zero_attention=True)
    x = constant(rng.normal(size=(2, C_PRIME, 5, 5)))
    out = attention.channel_attention(x, p)

    assert out.shape == (2, C_PRIME, 1, 1)
    np.testing.assert_allclose(out.value, 0.5)


def test_channel_attention_of_constant_input_doubles_mlp(rng, cfg):
    _, p = _params(rng, cfg)
    x = np.full((1, C_PRIME, 4, 4), 0.7)
    out = attention.channel_attention(constant(x), p)

    mlp = tensor_core.MlpParams(*(n.value for n in (p.channel_mlp.w1,
                                                     p.channel_mlp.b1,
                                                     p.channel_mlp.w2,
                                                     p.channel_mlp.b2)))
    branch = tensor_core.mlp_shared(x[:, :, :1, :1], mlp)
    np.testing.assert_allclose(out.value, tensor_core.sigmoid(2 * branch))


def test_channel_attention_rejects_wrong_width(rng, cfg):
    _, p = _params(rng, cfg)
    with pytest.raises(DimensionError):
        attention.channel_attention(constant(np.zeros((1, 4, 3, 3))), p)


def test_spatial_attention_of_zero_conv_is_half(rng, cfg):
    _, p = _params(rng, cfg, zero_attention=True)
    out = attention.spatial_attention(
        constant(rng.normal(size=(1, C_PRIME, 6, 6))), p)

    assert out.shape == (1, 1, 6, 6)
    np.testing.assert_allclose(out.value, 0.5)


def test_cbam_of_zero_attention_is_quarter_input(rng, cfg):
    _, p = _params(rng, cfg, zero_attention=True)
    x = rng.normal(size=(2, C_PRIME, 6, 6))
    out = attention.cbam_forward(constant(x), p)

    np.testing.assert_allclose(out.value, 0.25 * x)


def test_icbam_of_zero_attention(rng, cfg):
    _, p = _params(rng, cfg, zero_attention=True)
    x = rng.normal(size=(1, C_PRIME, 8, 8))
    out = attention.icbam_forward(constant(x), p)

    assert out.shape == x.shape
    np.testing.assert_allclose(out.value, 0.25 * x + 0.25 * x * x)


def test_icbam_is_cbam_plus_delta(rng, cfg):
    _, p = _params(rng, cfg)
    x = constant(rng.normal(size=(1, C_PRIME, 6, 6)))
    terms = attention.icbam_terms(x, p)
    cbam = attention.cbam_forward(x, p)

    np.testing.assert_allclose(terms.f_double_prime.value, cbam.value)
    np.testing.assert_allclose(terms.x.value, cbam.value + terms.delta.value)


def test_shared_middle_block_reuses_channel_map(rng, cfg):
    _, p = _params(rng, cfg)
    x = constant(rng.normal(size=(1, C_PRIME, 6, 6)))
    terms = attention.icbam_terms(x, p)

    np.testing.assert_allclose(terms.delta.value,
                               terms.f_prime.value * terms.beta.value)


def test_unshared_middle_block_has_own_parameters(rng):
    cfg = EamConfig(c_prime=C_PRIME, mlp_reduction_r=2, share_attention=False)
    store, p = _params(rng, cfg)

    assert not p.shares_attention
    assert "eam.middle_channel_mlp.w1" in store
    assert "eam.middle_spatial_conv.weight" in store
    assert p.mlp(MIDDLE) is p.middle_channel_mlp
    assert p.spatial(MIDDLE) is p.middle_spatial_conv


def test_cbam_never_builds_middle_parameters(rng):
    cfg = EamConfig(c_prime=C_PRIME,
                    mlp_reduction_r=2,
                    variant=AttentionVariant.CBAM,
                    share_attention=False)
    store, p = _params(rng, cfg)

    assert p.shares_attention
    assert not any(name.startswith("eam.middle_") for name in store)


def test_attention_never_increases_magnitude(rng, cfg):
    _, p = _params(rng, cfg)
    x = constant(rng.normal(size=(2, C_PRIME, 6, 6)))
    terms = attention.icbam_terms(x, p)

    assert np.all(np.abs(terms.f_prime.value) <= np.abs(x.value))
    assert np.all(
        np.abs(terms.f_double_prime.value) <= np.abs(terms.f_prime.value))


@pytest.mark.parametrize("include_conv,channels", [(True, 2 * C_PRIME),
                                                   (False, C_PRIME)])
def test_eam_output_width(rng, include_conv, channels):
    cfg = EamConfig(c_prime=C_PRIME,
                    mlp_reduction_r=2,
                    include_conv_features=include_conv)
    _, p = _params(rng, cfg, in_channels=16)
    out = attention.eam_forward(constant(rng.normal(size=(2, 16, 4, 4))), p,
                                cfg)

    assert out.shape == (2, channels, 4, 4)


def test_eam_of_zero_attention_and_identity_reduce(rng, cfg):
    _, p = _params(rng, cfg, zero_attention=True, identity_reduce=True)
    x = rng.normal(size=(1, C_PRIME, 4, 4))
    out = attention.eam_forward(constant(x), p, cfg)

    np.testing.assert_allclose(out.value[:, :C_PRIME], x)
    np.testing.assert_allclose(out.value[:, C_PRIME:], 0.25 * (x + x * x))


def test_eam_params_reject_mismatched_mlp(rng, cfg):
    store = ParamStore(rng)
    p = attention.build_eam_params(store, "eam", 16, cfg)
    wrong = store.mlp("wrong", 4, 2)

    with pytest.raises(DimensionError):
        attention.EamParams(reduce=p.reduce,
                            channel_mlp=wrong,
                            spatial_conv=p.spatial_conv)


def test_reduce_dim_rejects_wrong_input_width(rng, cfg):
    _, p = _params(rng, cfg, in_channels=16)
    with pytest.raises(DimensionError):
        attention.reduce_dim(constant(np.zeros((1, 12, 4, 4))), p)
