"""Named finite-difference checks for every differentiable op and the model.

Each check builds float64 inputs and parameters from a seeded generator and
reduces the op output to a scalar with random constant weights, so every
output coordinate contributes to the gradient being certified.
"""
from collections.abc import Callable, Iterable, Mapping
from typing import Optional

import numpy as np
from absl import logging

from eam_classifier import attention, multiscale, tensor_core
from eam_classifier.autodiff import (
    GradCheckReport,
    Node,
    Parameter,
    finite_diff_check,
    ops,
)
from eam_classifier.autodiff import gradcheck
from eam_classifier.configs import (
    AttentionVariant,
    EamConfig,
    ModelConfig,
    Strategy,
)
from eam_classifier.model import EamClassifier
from eam_classifier.params import ParamStore

CHECK_PRECISION = "float64"
# Keeps ReLU inputs this far from zero.
RELU_MARGIN = 0.1

Objective = Callable[[], Node]
CheckBuilder = Callable[[np.random.Generator],
                        tuple[Objective, Mapping[str, Node]]]

_CHECKS: dict[str, CheckBuilder] = {}


def _register(name: str):

    def decorator(builder: CheckBuilder) -> CheckBuilder:
        _CHECKS[name] = builder
        return builder

    return decorator


def available_checks() -> list[str]:
    return list(_CHECKS)


def _leaf(rng, shape, name, margin: float = 0.0) -> Parameter:
    value = rng.normal(size=shape)
    if margin:
        value = np.sign(value) * (margin + np.abs(value))
    return Parameter(tensor_core.asarray(value), name=name)


def _weighted(op: Callable[[], Node], rng) -> Objective:
    weights = tensor_core.asarray(rng.normal(size=op().shape))
    return lambda: ops.weighted_sum(op(), weights)


def _with_store(store: ParamStore, **leaves: Node) -> dict[str, Node]:
    params = dict(leaves)
    params.update(store.items())
    return params


def _conv_check(rng, x_shape, out_channels, kernel, stride=1, padding=0,
                dilation=1):
    x = _leaf(rng, x_shape, "x")
    store = ParamStore(rng)
    p = store.conv("conv", x_shape[1], out_channels, kernel, stride, padding,
                   dilation)
    store["conv.bias"].value[...] = rng.normal(size=out_channels)
    return _weighted(lambda: ops.conv2d(x, p), rng), _with_store(store, x=x)


@_register("conv2d")
def _check_conv2d(rng):
    return _conv_check(rng, (2, 3, 8, 8), 4, 3, padding=1)


@_register("conv2d_strided")
def _check_conv2d_strided(rng):
    return _conv_check(rng, (2, 3, 8, 8), 4, 3, stride=2, padding=1)


@_register("conv2d_dilated")
def _check_conv2d_dilated(rng):
    return _conv_check(rng, (1, 2, 16, 16), 3, 3, padding=6, dilation=6)


@_register("conv2d_7x7")
def _check_conv2d_7x7(rng):
    return _conv_check(rng, (2, 2, 8, 8), 1, 7, padding=3)


def _unary_check(rng, op, shape=(2, 3, 6, 6), margin=0.0):
    x = _leaf(rng, shape, "x", margin)
    return _weighted(lambda: op(x), rng), {"x": x}


@_register("sigmoid")
def _check_sigmoid(rng):
    return _unary_check(rng, ops.sigmoid)


@_register("relu")
def _check_relu(rng):
    return _unary_check(rng, ops.relu, margin=RELU_MARGIN)


@_register("channel_pool_avg")
def _check_channel_pool_avg(rng):
    return _unary_check(rng, ops.channel_pool_avg)


@_register("channel_pool_max")
def _check_channel_pool_max(rng):
    return _unary_check(rng, ops.channel_pool_max)


@_register("spatial_pool")
def _check_spatial_pool(rng):
    return _unary_check(rng, ops.spatial_pool)


@_register("global_avg_pool")
def _check_global_avg_pool(rng):
    return _unary_check(rng, ops.global_avg_pool)


@_register("max_pool2")
def _check_max_pool2(rng):
    return _unary_check(rng, ops.max_pool2, shape=(2, 3, 8, 8))


@_register("eltwise_mul")
def _check_eltwise_mul(rng):
    a = _leaf(rng, (2, 4, 1, 1), "a")
    b = _leaf(rng, (2, 4, 5, 5), "b")
    return _weighted(lambda: ops.eltwise_mul(a, b), rng), {"a": a, "b": b}


@_register("eltwise_add")
def _check_eltwise_add(rng):
    a = _leaf(rng, (2, 1, 5, 5), "a")
    b = _leaf(rng, (2, 4, 5, 5), "b")
    return _weighted(lambda: ops.eltwise_add(a, b), rng), {"a": a, "b": b}


@_register("concat_channels")
def _check_concat_channels(rng):
    a = _leaf(rng, (2, 2, 4, 4), "a")
    b = _leaf(rng, (2, 3, 4, 4), "b")
    return (_weighted(lambda: ops.concat_channels([a, b]), rng), {
        "a": a,
        "b": b
    })


@_register("linear")
def _check_linear(rng):
    x = _leaf(rng, (3, 5), "x")
    weight = _leaf(rng, (5, 4), "weight")
    bias = _leaf(rng, (4,), "bias")
    return (_weighted(lambda: ops.linear(x, weight, bias), rng), {
        "x": x,
        "weight": weight,
        "bias": bias
    })


@_register("mlp_shared")
def _check_mlp_shared(rng):
    v = _leaf(rng, (2, 8, 1, 1), "v")
    store = ParamStore(rng)
    p = store.mlp("mlp", 8, 4)
    return _weighted(lambda: ops.mlp_shared(v, p), rng), _with_store(store, v=v)


@_register("softmax_cross_entropy")
def _check_softmax_cross_entropy(rng):
    logits = _leaf(rng, (4, 5), "logits")
    labels = rng.integers(0, 5, size=4)
    return (lambda: multiscale.cross_entropy(logits, labels), {
        "logits": logits
    })


def _attention_setup(rng,
                     share_attention=True,
                     variant=AttentionVariant.ICBAM):
    cfg = EamConfig(c_prime=8,
                    mlp_reduction_r=2,
                    variant=variant,
                    share_attention=share_attention)
    store = ParamStore(rng)
    p = attention.build_eam_params(store, "eam", 12, cfg)
    return cfg, store, p


@_register("channel_attention")
def _check_channel_attention(rng):
    _, store, p = _attention_setup(rng)
    x = _leaf(rng, (2, 8, 6, 6), "x")
    return (_weighted(lambda: attention.channel_attention(x, p), rng),
            _with_store(store, x=x))


@_register("spatial_attention")
def _check_spatial_attention(rng):
    _, store, p = _attention_setup(rng)
    x = _leaf(rng, (2, 8, 6, 6), "x")
    return (_weighted(lambda: attention.spatial_attention(x, p), rng),
            _with_store(store, x=x))


@_register("cbam")
def _check_cbam(rng):
    _, store, p = _attention_setup(rng)
    x = _leaf(rng, (2, 8, 6, 6), "x")
    return (_weighted(lambda: attention.cbam_forward(x, p), rng),
            _with_store(store, x=x))


@_register("icbam")
def _check_icbam(rng):
    _, store, p = _attention_setup(rng)
    x = _leaf(rng, (2, 8, 6, 6), "x")
    return (_weighted(lambda: attention.icbam_forward(x, p), rng),
            _with_store(store, x=x))


@_register("icbam_unshared")
def _check_icbam_unshared(rng):
    _, store, p = _attention_setup(rng, share_attention=False)
    x = _leaf(rng, (2, 8, 6, 6), "x")
    return (_weighted(lambda: attention.icbam_forward(x, p), rng),
            _with_store(store, x=x))


@_register("eam")
def _check_eam(rng):
    cfg, store, p = _attention_setup(rng)
    s = _leaf(rng, (2, 12, 6, 6), "s")
    return (_weighted(lambda: attention.eam_forward(s, p, cfg), rng),
            _with_store(store, s=s))


@_register("aspp")
def _check_aspp(rng):
    x = _leaf(rng, (1, 8, 16, 16), "x")
    store = ParamStore(rng)
    p = multiscale.build_aspp_params(store, "aspp", 8, 4, 4)
    return (_weighted(lambda: multiscale.aspp_forward(x, p), rng),
            _with_store(store, x=x))


def gradcheck_model_config() -> ModelConfig:
    return ModelConfig(num_classes=3,
                       image_extent=32,
                       backbone_channels=(8, 16, 32, 64),
                       eam=EamConfig(c_prime=8, mlp_reduction_r=2),
                       strategy=Strategy.EAM_ASPP_GAP)


@_register("model")
def _check_model(rng):
    config = gradcheck_model_config()
    model = EamClassifier(config,
                          seed=int(rng.integers(1 << 31)),
                          zero_head=False)
    images = tensor_core.asarray(rng.uniform(size=(1, 3, 32, 32)))
    labels = rng.integers(0, config.num_classes, size=1)
    return (lambda: model.loss(images, labels)[0], dict(model.store.items()))


def run_check(name: str,
              tol_rel: float = gradcheck.DEFAULT_TOL_REL,
              tol_abs: float = gradcheck.DEFAULT_TOL_ABS,
              h: float = gradcheck.DEFAULT_STEP,
              num_samples: int = gradcheck.MIN_SAMPLES_PER_PARAM,
              seed: int = 0) -> GradCheckReport:
    if name not in _CHECKS:
        raise KeyError(f"Unknown gradient check '{name}'. Available: "
                       f"{', '.join(_CHECKS)}")
    rng = np.random.default_rng(seed)
    with tensor_core.precision(CHECK_PRECISION):
        objective, params = _CHECKS[name](rng)
        report = finite_diff_check(objective,
                                   params,
                                   h=h,
                                   tol_rel=tol_rel,
                                   tol_abs=tol_abs,
                                   num_samples=num_samples,
                                   seed=seed,
                                   op_name=name)
    logging.info("%s", report.row())
    return report


def run_suite(names: Optional[Iterable[str]] = None,
              tol_rel: float = gradcheck.DEFAULT_TOL_REL,
              tol_abs: float = gradcheck.DEFAULT_TOL_ABS,
              h: float = gradcheck.DEFAULT_STEP,
              seed: int = 0) -> list[GradCheckReport]:
    names = list(names) if names is not None else available_checks()
    unknown = [name for name in names if name not in _CHECKS]
    if unknown:
        raise KeyError(f"Unknown gradient checks {unknown}. Available: "
                       f"{', '.join(_CHECKS)}")
    return [
        run_check(name, tol_rel=tol_rel, tol_abs=tol_abs, h=h, seed=seed)
        for name in names
    ]
