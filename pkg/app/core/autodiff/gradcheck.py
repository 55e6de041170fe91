"""
Finite-difference verification of vector-Jacobian products.
"""
import logging
from typing import Callable, Optional, Sequence

import numpy as np

from app.core.autodiff.tensor import Tensor

logger = logging.getLogger(__name__)

MAX_COORDS_PER_INPUT = 64
# Inputs whose checked gradient is all zero on both sides score 0
TINY_NORM = 1e-300


def _scalar_objective(output: Tensor, probe: np.ndarray) -> float:
    return float(np.sum(output.data * probe))


def grad_check(
    op: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-4,
    rng: Optional[np.random.Generator] = None,
    max_coords: int = MAX_COORDS_PER_INPUT,
) -> float:
    """
    Compare backprop gradients with central differences at float64.

    The op output is reduced to a scalar through a fixed random projection,
    so every output element contributes. Inputs larger than `max_coords`
    entries are checked on a random subset of coordinates.

    Args:
        op: Function mapping input Tensors to an output Tensor
        inputs: Input arrays; all are differentiated
        eps: Central-difference step
        rng: Stream for the projection and coordinate sampling
        max_coords: Coordinates checked per input

    Returns:
        Worst over inputs of ||analytic - numeric|| / max(||analytic||, ||numeric||)
        taken over the checked coordinates, so the error is scale free
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    arrays = [np.array(x, dtype=np.float64) for x in inputs]

    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    output = op(*tensors)
    probe = rng.standard_normal(output.shape)
    output.backward(probe.astype(output.dtype))
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    worst = 0.0
    for index, array in enumerate(arrays):
        exact_values, numeric_values = [], []
        flat_count = array.size
        if flat_count > max_coords:
            coords = rng.choice(flat_count, size=max_coords, replace=False)
        else:
            coords = np.arange(flat_count)
        for coord in coords:
            position = np.unravel_index(int(coord), array.shape)
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[index][position] += eps
            minus[index][position] -= eps
            f_plus = _scalar_objective(op(*[Tensor(a) for a in plus]), probe)
            f_minus = _scalar_objective(op(*[Tensor(a) for a in minus]), probe)
            numeric_values.append((f_plus - f_minus) / (2.0 * eps))
            exact_values.append(float(analytic[index][position]))
        exact_vec, numeric_vec = np.asarray(exact_values), np.asarray(numeric_values)
        scale = max(np.linalg.norm(exact_vec), np.linalg.norm(numeric_vec), TINY_NORM)
        worst = max(worst, float(np.linalg.norm(exact_vec - numeric_vec) / scale))
    logger.debug(f"grad_check max relative error {worst:.3e}")
    return worst
