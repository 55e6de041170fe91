"""
Adam optimizer and the step-halving learning-rate schedule.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from app.core.autodiff.parameters import ParameterStore
from app.core.errors import ParameterDomainError, ShapeMismatchError


@dataclass
class AdamState:
    """Per-parameter moments plus the step counter and hyperparameters."""

    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def hyperparameters(self) -> Dict[str, float]:
        return {"beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def adam_step(store: ParameterStore, grads: Mapping[str, np.ndarray], state: AdamState, lr: Optional[float] = None) -> None:
    """
    One bias-corrected Adam update, in place.

    Args:
        store: Parameters; only names present in `grads` are updated
        grads: Gradient per parameter name
        state: Moments and step counter, updated in place
        lr: Learning rate for this step; defaults to state.lr
    """
    lr = state.lr if lr is None else lr
    if lr < 0:
        raise ParameterDomainError(f"Learning rate must be non-negative, got {lr}")
    state.step += 1

    # bias corrections are shared by every parameter in the step
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    step_size = lr / bc1

    for name, grad in grads.items():
        param = store[name].data
        if grad.shape != param.shape:
            raise ShapeMismatchError(f"Gradient for '{name}' has shape {grad.shape}, expected {param.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)

        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)

        denom = np.sqrt(v * (1.0 / bc2)) + state.eps
        param -= (step_size * m / denom).astype(param.dtype, copy=False)


class Adam:
    """Adam bound to a parameter store."""

    def __init__(self, store: ParameterStore, lr: float = 2e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: Optional[Mapping[str, np.ndarray]] = None, lr: Optional[float] = None) -> None:
        adam_step(self.store, grads if grads is not None else self.store.grads(), self.state, lr)

    def zero_grad(self) -> None:
        self.store.zero_grad()


def lr_schedule(step: int, lr0: float, halve_every: int) -> float:
    """lr0 halved once every `halve_every` completed steps."""
    if halve_every < 1:
        raise ParameterDomainError(f"halve_every must be >= 1, got {halve_every}")
    return lr0 * 0.5 ** (step // halve_every)
