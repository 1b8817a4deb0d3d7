import math
from unittest import mock

import numpy as np
import pytest

from eam_classifier.autodiff import backward
from eam_classifier.configs import LEVELS, ModelConfig, Strategy
from eam_classifier.model import EamClassifier
from eam_classifier.tensor_core import DimensionError


@pytest.fixture(name="images")
def fixture_images(rng):
    return rng.uniform(size=(2, 3, 32, 32))


def test_initial_loss_is_log_k(small_config, images):
    model = EamClassifier(small_config, seed=0)
    loss, logits = model.loss(images, [0, 2])

    np.testing.assert_array_equal(logits.value, 0.0)
    assert loss.value.item() == pytest.approx(math.log(3))


def test_forward_trace_shapes(small_config, images):
    model = EamClassifier(small_config, seed=0, zero_head=False)
    trace = model.forward(images)

    assert len(trace.taps) == len(LEVELS)
    assert [e.shape[1] for e in trace.enriched] == [16] * 4
    assert [a.shape[1] for a in trace.aspp] == [16] * 4
    assert trace.fused.shape == (2, small_config.fused_width)
    assert trace.logits.shape == (2, 3)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_parameters_follow_strategy(small_config, strategy):
    config = small_config.copy(update={"strategy": strategy})
    model = EamClassifier(config)
    names = list(model.store)

    assert any(n.startswith("eam2.") for n in names) == strategy.uses_eam
    assert any(n.startswith("aspp5.") for n in names) == strategy.uses_aspp
    assert "head.weight" in names
    assert model.store["head.weight"].shape == (config.fused_width, 3)


def test_same_seed_gives_identical_parameters(small_config):
    first = EamClassifier(small_config, seed=5).state_dict()
    second = EamClassifier(small_config, seed=5).state_dict()

    assert list(first) == list(second)
    for name in first:
        np.testing.assert_array_equal(first[name], second[name])


def test_rejects_wrong_extent(small_config):
    model = EamClassifier(small_config)
    with pytest.raises(DimensionError):
        model.forward(np.zeros((1, 3, 64, 64)))


def test_predict_matches_logits(small_config, images):
    model = EamClassifier(small_config, seed=1, zero_head=False)

    np.testing.assert_allclose(model.predict_logits(images, batch_size=1),
                               model.logits(images).value)
    assert model.predict(images).shape == (2,)


def test_freeze_backbone_marks_only_backbone(small_config):
    config = small_config.copy(update={"freeze_backbone": True})
    model = EamClassifier(config)

    trainable = {p.name for p in model.store.trainable()}
    assert trainable
    assert not any(name.startswith("backbone.") for name in trainable)
    assert "backbone.stem.weight" not in trainable


def test_backward_reaches_every_parameter(small_config, images):
    model = EamClassifier(small_config, seed=0, zero_head=False)
    loss, _ = model.loss(images, [0, 1])
    backward(loss)

    missing = [name for name, p in model.store.items() if p.grad is None]
    assert not missing


def test_clamp_is_logged_once_per_level_branch_and_extent(small_config, images):
    event_logger = mock.MagicMock()
    model = EamClassifier(small_config, event_logger=event_logger)
    model.forward(images)
    model.forward(images)

    clamps = [c.args[0] for c in event_logger.log.call_args_list]
    keys = [(e.level, e.branch, e.extent) for e in clamps]
    assert len(keys) == len(set(keys))
    # Level 5 is 1x1 on a 32x32 input: every dilated branch is clamped.
    assert {(5, 1, 1), (5, 2, 1), (5, 3, 1)} <= set(keys)


def test_state_dict_round_trip(small_config):
    source = EamClassifier(small_config, seed=3, zero_head=False)
    target = EamClassifier(small_config, seed=4)
    target.load_state_dict(source.state_dict())

    images = np.random.default_rng(0).uniform(size=(1, 3, 32, 32))
    np.testing.assert_array_equal(target.logits(images).value,
                                  source.logits(images).value)


def test_config_rejects_wide_c_prime():
    with pytest.raises(ValueError):
        ModelConfig(backbone_channels=(8, 16, 32, 64))


@pytest.mark.parametrize("strategy", list(Strategy))
@pytest.mark.parametrize("conv_features", [True, False])
@pytest.mark.parametrize("aspp_out", [None, 12])
def test_shape_contracts(small_config, images, strategy, conv_features,
                         aspp_out):
    config = small_config.copy(
        update={
            "strategy": strategy,
            "aspp_out": aspp_out,
            "eam": small_config.eam.copy(
                update={"include_conv_features": conv_features}),
        })
    trace = EamClassifier(config, seed=0, zero_head=False).forward(images)

    assert [t.shape[2:] for t in trace.taps] == [(8, 8), (4, 4), (2, 2),
                                                 (1, 1)]
    for level, enriched in zip(LEVELS, trace.enriched):
        assert enriched.shape[1] == config.enriched_channels(level)
    if strategy.uses_eam:
        width = 2 * 8 if conv_features else 8
        assert all(e.shape[1] == width for e in trace.enriched)
    if strategy.uses_aspp:
        assert config.fused_width == 4 * (aspp_out or 16)
    assert trace.fused.shape == (2, config.fused_width)
