import struct

import numpy as np
import pytest

from eam_classifier import checkpoint, tensor_core
from eam_classifier.checkpoint import (
    BadMagicError,
    CheckpointConfigError,
    CheckpointError,
    CheckpointVersionError,
    TruncatedCheckpointError,
)
from eam_classifier.configs import AttentionVariant
from eam_classifier.model import EamClassifier


@pytest.fixture(name="model")
def fixture_model(small_config):
    return EamClassifier(small_config, seed=3, zero_head=False)


@pytest.fixture(name="saved_path")
def fixture_saved_path(model, tmp_path):
    path = tmp_path / "model.eamc"
    checkpoint.save_checkpoint(model, path)
    return path


def test_round_trip_is_bit_exact(model, saved_path, rng):
    loaded = checkpoint.load_checkpoint(saved_path)

    assert loaded.config == model.config
    original = model.state_dict()
    restored = loaded.state_dict()
    assert list(restored) == list(original)
    for name, value in original.items():
        assert restored[name].dtype == value.dtype
        assert restored[name].tobytes() == value.tobytes(), name

    images = rng.uniform(size=(2, 3, 32, 32))
    np.testing.assert_array_equal(loaded.predict_logits(images),
                                  model.predict_logits(images))


def test_save_returns_tensor_count(model, tmp_path):
    count = checkpoint.save_checkpoint(model, tmp_path / "m.eamc")

    assert count == len(model.store)


def test_float32_tensors_keep_their_dtype(small_config, tmp_path):
    with tensor_core.precision("float32"):
        model = EamClassifier(small_config, seed=1)
        checkpoint.save_checkpoint(model, tmp_path / "m.eamc")

    _, state = checkpoint.read_checkpoint(tmp_path / "m.eamc")
    for name, value in model.state_dict().items():
        assert state[name].dtype == np.float32
        assert state[name].tobytes() == value.tobytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.eamc"
    path.write_bytes(b"NOPE" + b"\0" * 16)

    with pytest.raises(BadMagicError, match="not an EAMC file"):
        checkpoint.read_checkpoint(path)


def test_truncated_file(saved_path):
    data = saved_path.read_bytes()
    saved_path.write_bytes(data[:-3])

    with pytest.raises(TruncatedCheckpointError):
        checkpoint.load_checkpoint(saved_path)


def test_truncated_header(saved_path):
    saved_path.write_bytes(saved_path.read_bytes()[:6])

    with pytest.raises(TruncatedCheckpointError) as err:
        checkpoint.read_checkpoint(saved_path)

    assert err.value.what == "version"


def test_unsupported_version(saved_path):
    data = bytearray(saved_path.read_bytes())
    data[4:8] = struct.pack("<I", 2)
    saved_path.write_bytes(bytes(data))

    with pytest.raises(CheckpointVersionError) as err:
        checkpoint.read_checkpoint(saved_path)

    assert err.value.version == 2
    assert "version 2" in str(err.value)


def test_tensor_name_that_is_not_utf8(saved_path):
    data = bytearray(saved_path.read_bytes())
    (config_length,) = struct.unpack_from("<I", data, 8)
    first_name = 12 + config_length + 4 + 4
    data[first_name] = 0xff
    saved_path.write_bytes(bytes(data))

    with pytest.raises(CheckpointError, match="tensor 0 has a name"):
        checkpoint.read_checkpoint(saved_path)


def test_variant_mismatch_names_both_variants(saved_path):
    with pytest.raises(CheckpointConfigError) as err:
        checkpoint.load_checkpoint(saved_path,
                                   expected_variant=AttentionVariant.CBAM)

    assert err.value.saved == "icbam"
    assert err.value.requested == "cbam"
    assert "'icbam'" in str(err.value)
    assert "'cbam'" in str(err.value)


def test_matching_variant_loads(saved_path):
    model = checkpoint.load_checkpoint(saved_path, expected_variant="icbam")

    assert model.config.eam.variant == AttentionVariant.ICBAM
