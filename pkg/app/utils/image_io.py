"""
Pixel and kernel file formats.

Images are exchanged as binary Netpbm files: P6 (8-bit RGB) and P5 (8-bit
grayscale). In memory an image is a float64 array shaped (C, H, W) with
values in [0, 1]; values are quantized with round(255 * x) on write.
Kernels are exported as plain-text grids and as max-normalized PGM previews.
"""
import logging
import os
import re
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from app.core.errors import ImageFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

_HEADER_TOKEN = re.compile(rb"(?:#[^\n]*\n|\s)*([^\s#]+)")


def quantize_8bit(image: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] image to uint8 with round(255 * x)."""
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def dequantize_8bit(data: np.ndarray) -> np.ndarray:
    """Map uint8 samples back to float64 values in [0, 1]."""
    return np.asarray(data, dtype=np.float64) / 255.0


def _parse_header(raw: bytes) -> Tuple[bytes, int, int, int, int]:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        match = _HEADER_TOKEN.match(raw, pos)
        if match is None:
            raise ImageFormatError("Truncated Netpbm header")
        tokens.append(match.group(1))
        pos = match.end()
    # Exactly one whitespace byte separates the header from the raster
    pos += 1
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    return magic, width, height, maxval, pos


def read_netpbm(path: PathLike) -> np.ndarray:
    """
    Read a binary PPM (P6) or PGM (P5) file.

    Args:
        path: File to read

    Returns:
        float64 array shaped (3, H, W) for P6 or (1, H, W) for P5
    """
    raw = Path(path).read_bytes()
    magic, width, height, maxval, offset = _parse_header(raw)
    if maxval != 255:
        raise ImageFormatError(f"Only 8-bit Netpbm files are supported (maxval={maxval}): {path}")
    if magic == b"P6":
        channels = 3
    elif magic == b"P5":
        channels = 1
    else:
        raise ImageFormatError(f"Unsupported Netpbm magic {magic!r} in {path}")

    expected = width * height * channels
    data = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=offset)
    if data.size != expected:
        raise ImageFormatError(f"Truncated raster in {path}")
    image = data.reshape(height, width, channels).transpose(2, 0, 1)
    return dequantize_8bit(image)


def write_netpbm(path: PathLike, image: np.ndarray) -> None:
    """
    Write a (C, H, W) image in [0, 1] as P6 (C=3) or P5 (C=1).

    Args:
        path: Destination file
        image: Image array
    """
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[None]
    channels, height, width = image.shape
    if channels == 3:
        magic = b"P6"
    elif channels == 1:
        magic = b"P5"
    else:
        raise ImageFormatError(f"Cannot write {channels}-channel image as Netpbm")

    payload = quantize_8bit(image).transpose(1, 2, 0).tobytes()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(magic + b"\n%d %d\n255\n" % (width, height))
        handle.write(payload)
    logger.debug(f"Wrote {magic.decode()} image {width}x{height} to {path}")


def write_kernel_text(path: PathLike, kernel: np.ndarray) -> None:
    """Write a kernel as one row per line of space-separated decimals."""
    kernel = np.asarray(kernel, dtype=np.float64)
    lines = [" ".join(f"{value:.17g}" for value in row) for row in kernel]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def read_kernel_text(path: PathLike) -> np.ndarray:
    """Read a kernel grid written by `write_kernel_text`."""
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    kernel = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ImageFormatError(f"Kernel grid in {path} is not square")
    return kernel


def kernel_preview(kernel: np.ndarray) -> np.ndarray:
    """Max-normalize a kernel's magnitude into a (1, k, k) [0, 1] image."""
    magnitude = np.abs(np.asarray(kernel, dtype=np.float64))
    peak = magnitude.max()
    preview = magnitude / peak if peak > 0 else magnitude
    return preview[None]


def write_kernel_pgm(path: PathLike, kernel: np.ndarray) -> None:
    """Export a kernel as an 8-bit max-normalized grayscale PGM."""
    write_netpbm(path, kernel_preview(kernel))
