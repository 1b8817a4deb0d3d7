"""Binary PPM (P6) and PGM (P5) images.

Images are float arrays in [0, 1]: colour images are (3, H, W), grey
planes are (H, W). Only 8-bit files (maxval <= 255) are supported.
"""
import os

import numpy as np

PPM_MAGIC = b"P6"
PGM_MAGIC = b"P5"
MAX_VALUE = 255


class ImageFormatError(ValueError):
    """Raised when a file is not a readable 8-bit PPM/PGM image."""

    def __init__(self, path, reason: str):
        self.path = os.fspath(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


def _read_header(data: bytes, path) -> tuple[bytes, int, int, int, int]:
    """Returns (magic, width, height, maxval, offset of the pixel data)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(path, "truncated header")
        tokens.append(data[start:pos])

    # Exactly one whitespace byte separates the header from the raster.
    if pos >= len(data):
        raise ImageFormatError(path, "truncated header")
    pos += 1
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as err:
        raise ImageFormatError(path, "malformed header") from err
    if width < 1 or height < 1:
        raise ImageFormatError(path, f"invalid extent {width}x{height}")
    if not 0 < maxval <= MAX_VALUE:
        raise ImageFormatError(path, f"unsupported maxval {maxval}")
    return magic, width, height, maxval, pos


def _read(path, magic: bytes, channels: int) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as err:
        raise ImageFormatError(path, f"unreadable file ({err})") from err

    found, width, height, maxval, offset = _read_header(data, path)
    if found != magic:
        raise ImageFormatError(
            path, f"expected magic {magic.decode()}, got {found!r}")

    size = width * height * channels
    raster = np.frombuffer(data, dtype=np.uint8, count=-1, offset=offset)
    if raster.size < size:
        raise ImageFormatError(
            path, f"expected {size} pixel bytes, got {raster.size}")
    pixels = raster[:size].astype(np.float64) / maxval
    return pixels.reshape(height, width, channels)


def read_ppm(path) -> np.ndarray:
    """Reads a P6 file as a (3, H, W) array in [0, 1]."""
    return _read(path, PPM_MAGIC, 3).transpose(2, 0, 1)


def read_pgm(path) -> np.ndarray:
    """Reads a P5 file as an (H, W) array in [0, 1]."""
    return _read(path, PGM_MAGIC, 1)[:, :, 0]


def to_bytes(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * MAX_VALUE).astype(np.uint8)


def _write(path, magic: bytes, pixels: np.ndarray) -> None:
    height, width = pixels.shape[:2]
    header = b"%s\n%d %d\n%d\n" % (magic, width, height, MAX_VALUE)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(pixels).tobytes())


def write_ppm(path, image: np.ndarray) -> None:
    """Writes a (3, H, W) array in [0, 1] as P6."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"Expected a (3, H, W) image, got {image.shape}")
    _write(path, PPM_MAGIC, to_bytes(image).transpose(1, 2, 0))


def write_pgm(path, plane: np.ndarray) -> None:
    """Writes an (H, W) array in [0, 1] as P5."""
    if plane.ndim != 2:
        raise ValueError(f"Expected an (H, W) plane, got {plane.shape}")
    _write(path, PGM_MAGIC, to_bytes(plane))


def overlay(image: np.ndarray, heatmap: np.ndarray) -> np.ndarray:
    """0.5 * image + 0.5 * heatmap painted into the red channel."""
    if image.shape[1:] != heatmap.shape:
        raise ValueError(f"Heatmap extent {heatmap.shape} does not match "
                         f"image extent {image.shape[1:]}")
    red = np.zeros_like(image)
    red[0] = heatmap
    return 0.5 * image + 0.5 * red
