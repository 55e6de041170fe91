"""
Exception hierarchy for the blind super-resolution lab.

Core modules raise these; the CLI maps them onto exit codes.
"""
from typing import Dict, Optional


class DanError(Exception):
    """Base class for every error raised by the lab."""


class ParameterDomainError(DanError, ValueError):
    """A numeric parameter lies outside its documented domain."""


class DegenerateKernelError(DanError, ValueError):
    """A kernel cannot be normalized because its weights sum to zero."""


class ShapeMismatchError(DanError, ValueError):
    """Tensor or image shapes violate an operation's contract."""


class NonFiniteError(DanError, FloatingPointError):
    """An operation produced NaN or Inf values."""


class CheckpointFormatError(DanError, ValueError):
    """A checkpoint file is malformed, truncated or inconsistent."""


class ManifestError(DanError, ValueError):
    """A dataset manifest is invalid or inconsistent with the codec."""


class TrainingDivergedError(DanError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, lr: float, grad_norms: Optional[Dict[str, float]] = None):
        self.step = step
        self.lr = lr
        self.grad_norms = grad_norms or {}
        worst = sorted(self.grad_norms.items(), key=lambda kv: -kv[1])[:5]
        super().__init__(
            f"Non-finite loss at step {step} (lr={lr:.3e}); largest grad norms: "
            + ", ".join(f"{name}={norm:.3e}" for name, norm in worst)
        )


class ImageFormatError(DanError, ValueError):
    """A Netpbm image or kernel grid file is malformed or unsupported."""
