"""EAMC checkpoint files.

Layout, all integers little-endian u32:

    b"EAMC" | version | config length | ModelConfig JSON |
    tensor count | per tensor:
        name length | name (UTF-8) | rank | extents... | dtype code (u8) |
        raw little-endian values
"""
import os
import struct
from typing import Optional

import numpy as np
import pydantic
from absl import logging

from eam_classifier.configs import AttentionVariant, ModelConfig
from eam_classifier.model import EamClassifier

MAGIC = b"EAMC"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES_BY_DTYPE = {dtype: code for code, dtype in _DTYPE_CODES.items()}


class CheckpointError(Exception):
    """Base class of checkpoint read errors."""

    def __init__(self, path, message: str):
        self.path = os.fspath(path)
        super().__init__(f"{self.path}: {message}")


class BadMagicError(CheckpointError):

    def __init__(self, path):
        super().__init__(path, "not an EAMC file")


class TruncatedCheckpointError(CheckpointError):

    def __init__(self, path, what: str):
        self.what = what
        super().__init__(path, f"truncated checkpoint while reading {what}")


class CheckpointVersionError(CheckpointError):

    def __init__(self, path, version: int):
        self.version = version
        super().__init__(
            path, f"checkpoint format version {version} is not supported; "
            f"this build reads version {FORMAT_VERSION}. Migrate the file "
            f"by loading it with a release that reads version {version} and "
            "saving it again.")


class CheckpointConfigError(CheckpointError):

    def __init__(self, path, saved: str, requested: str):
        self.saved = saved
        self.requested = requested
        super().__init__(
            path, f"config mismatch: checkpoint holds a '{saved}' model but "
            f"'{requested}' was requested")


def _pack_u32(value: int) -> bytes:
    return _U32.pack(value)


def save_checkpoint(model: EamClassifier, path) -> int:
    """Writes every parameter of `model`; returns the number of tensors."""
    config_block = model.config.json().encode("utf-8")
    state = model.state_dict()

    parts = [
        MAGIC,
        _pack_u32(FORMAT_VERSION),
        _pack_u32(len(config_block)), config_block,
        _pack_u32(len(state))
    ]
    for name, value in state.items():
        dtype = value.dtype.newbyteorder("<")
        if dtype not in _CODES_BY_DTYPE:
            raise TypeError(f"Cannot store tensor '{name}' of dtype "
                            f"{value.dtype}")
        encoded = name.encode("utf-8")
        parts.extend([_pack_u32(len(encoded)), encoded, _pack_u32(value.ndim)])
        parts.extend(_pack_u32(extent) for extent in value.shape)
        parts.append(bytes([_CODES_BY_DTYPE[dtype]]))
        parts.append(np.ascontiguousarray(value, dtype=dtype).tobytes())

    with open(path, "wb") as f:
        f.write(b"".join(parts))
    logging.info("Saved %d tensors to %s", len(state), path)
    return len(state)


class _Reader:

    def __init__(self, data: bytes, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.data):
            raise TruncatedCheckpointError(self.path, what)
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(_U32.size, what))[0]


def read_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    """Parses a checkpoint into its config and named tensors."""
    with open(path, "rb") as f:
        data = f.read()

    reader = _Reader(data, path)
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(path)
    reader.take(len(MAGIC), "magic")

    version = reader.u32("version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(path, version)

    config_block = reader.take(reader.u32("config length"), "config block")
    try:
        config = ModelConfig.parse_raw(config_block)
    except pydantic.ValidationError as err:
        raise CheckpointError(path, f"invalid config block: {err}") from err

    state = {}
    for index in range(reader.u32("tensor count")):
        what = f"tensor {index}"
        raw_name = reader.take(reader.u32(what), what)
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as err:
            raise CheckpointError(
                path, f"{what} has a name that is not UTF-8") from err
        what = f"tensor '{name}'"
        shape = tuple(reader.u32(what) for _ in range(reader.u32(what)))
        code = reader.take(1, what)[0]
        if code not in _DTYPE_CODES:
            raise CheckpointError(path, f"unknown dtype code {code} for "
                                  f"{what}")
        dtype = _DTYPE_CODES[code]
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        raw = reader.take(size, what)
        state[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(
            dtype.newbyteorder("="))

    return config, state


def load_checkpoint(
        path,
        expected_variant: Optional[AttentionVariant] = None) -> EamClassifier:
    """Rebuilds the model stored at `path`.

    Raises:
        CheckpointConfigError: when `expected_variant` differs from the
            stored attention variant.
    """
    config, state = read_checkpoint(path)
    if (expected_variant is not None and
            AttentionVariant(expected_variant) != config.eam.variant):
        raise CheckpointConfigError(path, config.eam.variant.value,
                                    AttentionVariant(expected_variant).value)

    model = EamClassifier(config)
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as err:
        raise CheckpointError(path, f"tensor table mismatch: {err}") from err
    logging.info("Loaded %d tensors from %s", len(state), path)
    return model
