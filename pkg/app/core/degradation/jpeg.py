"""
JPEG compression artifacts without a bitstream.

Huffman coding is lossless, so the pixel-domain effect of JPEG is fully
captured by color conversion, 8x8 DCT quantization and the inverse path.
"""
import numpy as np
from scipy.fft import dctn, idctn

from app.core.degradation.filtering import as_image
from app.core.errors import ParameterDomainError

BLOCK = 8

LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

CHROMA_TABLE = np.full((8, 8), 99.0)
CHROMA_TABLE[:4, :4] = [
    [17, 18, 24, 47],
    [18, 21, 26, 66],
    [24, 26, 56, 99],
    [47, 66, 99, 99],
]

# Full-range BT.601 (JFIF)
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCBCR_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)


def quality_scaled_table(base: np.ndarray, quality: int) -> np.ndarray:
    """Scale a base quantization table with the conventional quality mapping."""
    if not 1 <= quality <= 100:
        raise ParameterDomainError(f"JPEG quality must lie in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((base * scale + 50.0) / 100.0), 1.0, 255.0)


def _quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    height, width = plane.shape
    pad_h, pad_w = -height % BLOCK, -width % BLOCK
    padded = np.pad(plane, ((0, pad_h), (0, pad_w)), mode="edge") - 128.0
    rows, cols = padded.shape[0] // BLOCK, padded.shape[1] // BLOCK
    blocks = padded.reshape(rows, BLOCK, cols, BLOCK).transpose(0, 2, 1, 3)

    coeffs = dctn(blocks, type=2, axes=(-2, -1), norm="ortho")
    coeffs = np.round(coeffs / table) * table
    restored = idctn(coeffs, type=2, axes=(-2, -1), norm="ortho")

    restored = restored.transpose(0, 2, 1, 3).reshape(rows * BLOCK, cols * BLOCK) + 128.0
    return restored[:height, :width]


def _subsampled_chroma(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    height, width = plane.shape
    padded = np.pad(plane, ((0, height % 2), (0, width % 2)), mode="edge")
    half = padded.reshape(padded.shape[0] // 2, 2, padded.shape[1] // 2, 2).mean(axis=(1, 3))
    restored = _quantize_plane(half, table)
    return np.repeat(np.repeat(restored, 2, axis=0), 2, axis=1)[:height, :width]


def jpeg_roundtrip(image: np.ndarray, quality: int, chroma_subsampling: bool = False) -> np.ndarray:
    """
    Compress and decompress an image in the pixel domain.

    Args:
        image: (3, H, W) RGB or (1, H, W) grayscale image in [0, 1]
        quality: JPEG quality factor in [1, 100]
        chroma_subsampling: Average chroma over 2x2 blocks (4:2:0) before quantization

    Returns:
        Decoded image clamped to [0, 1]
    """
    image = as_image(image)
    luma_table = quality_scaled_table(LUMA_TABLE, quality)
    chroma_table = quality_scaled_table(CHROMA_TABLE, quality)

    pixels = image * 255.0
    if image.shape[0] == 1:
        restored = _quantize_plane(pixels[0], luma_table)[None]
        return np.clip(restored / 255.0, 0.0, 1.0)
    if image.shape[0] != 3:
        raise ParameterDomainError(f"JPEG roundtrip expects 1 or 3 channels, got {image.shape[0]}")

    ycbcr = np.tensordot(_RGB_TO_YCBCR, pixels, axes=(1, 0))
    ycbcr[1:] += 128.0

    planes = [_quantize_plane(ycbcr[0], luma_table)]
    for channel in (1, 2):
        if chroma_subsampling:
            planes.append(_subsampled_chroma(ycbcr[channel], chroma_table))
        else:
            planes.append(_quantize_plane(ycbcr[channel], chroma_table))

    restored = np.stack(planes)
    restored[1:] -= 128.0
    rgb = np.tensordot(_YCBCR_TO_RGB, restored, axes=(1, 0))
    return np.clip(rgb / 255.0, 0.0, 1.0)
