"""
Differentiable operators.

Each op computes its forward value with numpy and registers a
vector-Jacobian product on the tape. Image tensors are (N, C, H, W) and
feature vectors are (N, F). Broadcasting is limited to what each op
documents.
"""
from typing import Literal, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.core.autodiff.tensor import Tensor
from app.core.errors import ParameterDomainError, ShapeMismatchError

PadMode = Literal["zero", "reflect"]


def _require_shape(tensor: Tensor, ndim: int, op: str) -> None:
    if tensor.ndim != ndim:
        raise ShapeMismatchError(f"{op} expects a {ndim}-D tensor, got shape {tensor.shape}")


def _reflect_fold(size: int, pad: int) -> np.ndarray:
    """(size + 2 pad, size) 0/1 matrix mapping padded positions to their reflected source."""
    index = np.arange(-pad, size + pad)
    period = 2 * (size - 1)
    folded = np.mod(index, period) if period > 0 else np.zeros_like(index)
    folded = np.where(folded >= size, period - folded, folded)
    matrix = np.zeros((size + 2 * pad, size))
    matrix[np.arange(size + 2 * pad), folded] = 1.0
    return matrix


def pad2d(x: np.ndarray, pad: int, mode: PadMode) -> np.ndarray:
    if pad == 0:
        return x
    width = ((0, 0), (0, 0), (pad, pad), (pad, pad))
    if mode == "zero":
        return np.pad(x, width, mode="constant")
    if pad >= min(x.shape[2], x.shape[3]):
        raise ShapeMismatchError(f"Reflect padding of {pad} needs spatial dims > {pad}, got {x.shape[2:]}")
    return np.pad(x, width, mode="reflect")


def pad2d_adjoint(grad: np.ndarray, pad: int, mode: PadMode, height: int, width: int) -> np.ndarray:
    """Adjoint of `pad2d`: crop for zero padding, fold reflected taps back for reflect padding."""
    if pad == 0:
        return grad
    if mode == "zero":
        return grad[:, :, pad : pad + height, pad : pad + width]
    rows = _reflect_fold(height, pad).astype(grad.dtype)
    cols = _reflect_fold(width, pad).astype(grad.dtype)
    folded = np.tensordot(grad, rows, axes=([2], [0]))  # (N, C, W + 2p, H)
    folded = np.tensordot(folded, cols, axes=([2], [0]))  # (N, C, H, W)
    return folded


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: PadMode = "zero",
) -> Tensor:
    """
    2-D cross-correlation with 'same' padding of k // 2.

    Args:
        x: (N, C, H, W) input
        weight: (O, C, k, k) filters, k odd
        bias: (O,) offsets
        stride: Output stride
        padding: "zero" or "reflect"

    Returns:
        (N, O, ceil(H / stride), ceil(W / stride)) output
    """
    _require_shape(x, 4, "conv2d")
    _require_shape(weight, 4, "conv2d")
    out_ch, in_ch, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ParameterDomainError(f"conv2d needs square odd kernels, got {kh}x{kw}")
    if in_ch != x.shape[1]:
        raise ShapeMismatchError(f"conv2d input has {x.shape[1]} channels, weight expects {in_ch}")
    if bias is not None and bias.shape != (out_ch,):
        raise ShapeMismatchError(f"conv2d bias must have shape ({out_ch},), got {bias.shape}")
    if stride < 1:
        raise ParameterDomainError(f"conv2d stride must be >= 1, got {stride}")

    k = kh
    pad = k // 2
    batch, _, height, width = x.shape
    padded = pad2d(x.data, pad, padding)
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(grad: np.ndarray):
        grad_w = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_b = grad.sum(axis=(0, 2, 3)) if bias is not None else None
        grad_x = None
        if x.requires_grad:
            cols = np.tensordot(grad, weight.data, axes=([1], [0]))  # (N, Ho, Wo, C, k, k)
            grad_padded = np.zeros_like(padded)
            for i in range(k):
                for j in range(k):
                    grad_padded[
                        :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
                    ] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            grad_x = pad2d_adjoint(grad_padded, pad, padding, height, width)
        return (grad_x, grad_w, grad_b) if bias is not None else (grad_x, grad_w)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor.from_op("conv2d", out, parents, backward)


def fully_connected(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map x @ W^T + b with x (N, F), W (G, F), b (G,)."""
    _require_shape(x, 2, "fully_connected")
    _require_shape(weight, 2, "fully_connected")
    if weight.shape[1] != x.shape[1]:
        raise ShapeMismatchError(f"fully_connected input has {x.shape[1]} features, weight expects {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatchError(f"fully_connected bias must have shape ({weight.shape[0]},), got {bias.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(grad: np.ndarray):
        grad_x = grad @ weight.data
        grad_w = grad.T @ x.data
        if bias is None:
            return grad_x, grad_w
        return grad_x, grad_w, grad.sum(axis=0)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor.from_op("fully_connected", out, parents, backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """max(x, 0) + slope * min(x, 0); slope = 0 is ReLU."""
    positive = x.data > 0
    out = np.where(positive, x.data, slope * x.data)

    def backward(grad: np.ndarray):
        return (np.where(positive, grad, slope * grad),)

    return Tensor.from_op("leaky_relu", out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of equally shaped tensors."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"add needs equal shapes, got {a.shape} and {b.shape}")

    def backward(grad: np.ndarray):
        return grad, grad

    return Tensor.from_op("add", a.data + b.data, (a, b), backward)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a constant."""

    def backward(grad: np.ndarray):
        return (grad * factor,)

    return Tensor.from_op("scale", x.data * factor, (x,), backward)


def concat_channels(*tensors: Tensor) -> Tensor:
    """Stack tensors along axis 1; all other dims must agree."""
    if len(tensors) < 1:
        raise ShapeMismatchError("concat_channels needs at least one tensor")
    reference = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(reference) or t.shape[0] != reference[0] or t.shape[2:] != reference[2:]:
            raise ShapeMismatchError(f"concat_channels shape mismatch: {reference} vs {t.shape}")
    sizes = [t.shape[1] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=1)

    def backward(grad: np.ndarray):
        return tuple(grad[:, bounds[i] : bounds[i + 1]] for i in range(len(tensors)))

    return Tensor.from_op("concat_channels", out, tensors, backward)


def broadcast_spatial(x: Tensor, height: int, width: int) -> Tensor:
    """Expand (N, F) to (N, F, H, W) by copying every vector to each site."""
    _require_shape(x, 2, "broadcast_spatial")
    out = np.broadcast_to(x.data[:, :, None, None], x.shape + (height, width)).copy()

    def backward(grad: np.ndarray):
        return (grad.sum(axis=(2, 3)),)

    return Tensor.from_op("broadcast_spatial", out, (x,), backward)


def broadcast_batch(x: Tensor, batch: int) -> Tensor:
    """Repeat a (F,) vector into a (batch, F) matrix."""
    _require_shape(x, 1, "broadcast_batch")
    out = np.broadcast_to(x.data[None], (batch,) + x.shape).copy()

    def backward(grad: np.ndarray):
        return (grad.sum(axis=0),)

    return Tensor.from_op("broadcast_batch", out, (x,), backward)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (N, C r^2, H, W) into (N, C, r H, r W)."""
    _require_shape(x, 4, "pixel_shuffle")
    batch, channels, height, width = x.shape
    if channels % (r * r):
        raise ShapeMismatchError(f"pixel_shuffle needs channels divisible by {r * r}, got {channels}")
    out_ch = channels // (r * r)
    out = (
        x.data.reshape(batch, out_ch, r, r, height, width)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(batch, out_ch, height * r, width * r)
    )

    def backward(grad: np.ndarray):
        restored = (
            grad.reshape(batch, out_ch, height, r, width, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(batch, channels, height, width)
        )
        return (restored,)

    return Tensor.from_op("pixel_shuffle", out, (x,), backward)


def avg_pool(x: Tensor, k: int = 2, stride: Optional[int] = None) -> Tensor:
    """
    Non-overlapping k x k mean pooling.

    Trailing rows/columns that do not fill a window are dropped and receive
    zero gradient.
    """
    _require_shape(x, 4, "avg_pool")
    stride = k if stride is None else stride
    if stride != k:
        raise ParameterDomainError(f"avg_pool supports stride == k only, got k={k}, stride={stride}")
    batch, channels, height, width = x.shape
    out_h, out_w = height // k, width // k
    if out_h < 1 or out_w < 1:
        raise ShapeMismatchError(f"avg_pool with k={k} cannot reduce a {height}x{width} input")
    cropped = x.data[:, :, : out_h * k, : out_w * k]
    out = cropped.reshape(batch, channels, out_h, k, out_w, k).mean(axis=(3, 5))

    def backward(grad: np.ndarray):
        spread = np.repeat(np.repeat(grad, k, axis=2), k, axis=3) / (k * k)
        full = np.zeros_like(x.data)
        full[:, :, : out_h * k, : out_w * k] = spread
        return (full,)

    return Tensor.from_op("avg_pool", out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over spatial dims: (N, C, H, W) -> (N, C)."""
    _require_shape(x, 4, "global_avg_pool")
    _, _, height, width = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(grad: np.ndarray):
        return (np.broadcast_to(grad[:, :, None, None] / (height * width), x.shape).copy(),)

    return Tensor.from_op("global_avg_pool", out, (x,), backward)


def select_features(x: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather columns of an (N, F) tensor."""
    _require_shape(x, 2, "select_features")
    index = np.asarray(indices, dtype=np.int64)

    def backward(grad: np.ndarray):
        full = np.zeros_like(x.data)
        np.add.at(full, (slice(None), index), grad)
        return (full,)

    return Tensor.from_op("select_features", x.data[:, index], (x,), backward)


def _check_pair(pred: Tensor, target: np.ndarray, op: str) -> np.ndarray:
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ShapeMismatchError(f"{op} needs equal shapes, got {pred.shape} and {target.shape}")
    return target


def l1_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean absolute error; the subgradient at zero is zero."""
    target = _check_pair(pred, target, "l1_loss")
    diff = pred.data - target
    count = diff.size

    def backward(grad: np.ndarray):
        return (np.sign(diff) * (grad / count),)

    return Tensor.from_op("l1_loss", np.asarray(np.abs(diff).mean(), dtype=pred.dtype), (pred,), backward)


def l2_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error."""
    target = _check_pair(pred, target, "l2_loss")
    diff = pred.data - target
    count = diff.size

    def backward(grad: np.ndarray):
        return (diff * (2.0 * grad / count),)

    return Tensor.from_op("l2_loss", np.asarray((diff * diff).mean(), dtype=pred.dtype), (pred,), backward)


def sigmoid_bce_loss(logits: Tensor, target: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 targets, computed stably."""
    target = _check_pair(logits, target, "sigmoid_bce_loss")
    z = logits.data
    count = z.size
    loss = np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z)))
    probs = 0.5 * (1.0 + np.tanh(0.5 * z))

    def backward(grad: np.ndarray):
        return ((probs - target) * (grad / count),)

    return Tensor.from_op("sigmoid_bce_loss", np.asarray(loss.mean(), dtype=logits.dtype), (logits,), backward)
