"""
Named parameter storage and initialization.
"""
import math
from collections import OrderedDict
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from app.core.autodiff.tensor import Tensor
from app.core.errors import ShapeMismatchError


class ParameterStore:
    """Ordered name -> Tensor map; iteration follows insertion order."""

    def __init__(self, dtype: np.dtype = np.float32):
        self.dtype = np.dtype(dtype)
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._frozen: set = set()

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise KeyError(f"Parameter '{name}' already exists")
        tensor = Tensor(np.array(value, dtype=self.dtype), requires_grad=trainable, name=name)
        self._params[name] = tensor
        if not trainable:
            self._frozen.add(name)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def items(self) -> Iterable[Tuple[str, Tensor]]:
        return self._params.items()

    def trainable_names(self) -> List[str]:
        return [name for name in self._params if name not in self._frozen]

    def is_trainable(self, name: str) -> bool:
        return name in self._params and name not in self._frozen

    def set_trainable(self, names: Iterable[str], trainable: bool) -> None:
        """Freeze or unfreeze parameters by name."""
        for name in names:
            tensor = self._params[name]
            tensor.requires_grad = trainable
            if trainable:
                self._frozen.discard(name)
            else:
                self._frozen.add(name)

    def num_parameters(self, trainable_only: bool = False) -> int:
        names = self.trainable_names() if trainable_only else self.names()
        return int(sum(self._params[name].data.size for name in names))

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.grad = None

    def grads(self) -> Dict[str, np.ndarray]:
        """Gradient per trainable parameter, zeros where none was accumulated."""
        return {
            name: (self._params[name].grad if self._params[name].grad is not None else np.zeros_like(self._params[name].data))
            for name in self.trainable_names()
        }

    def grad_norms(self) -> Dict[str, float]:
        return {name: float(np.linalg.norm(grad)) for name, grad in self.grads().items()}

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, tensor.data) for name, tensor in self._params.items())

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        """
        Copy arrays into existing parameters.

        Raises:
            KeyError: a parameter is missing from `state` (strict mode) or `state` has unknown names
            ShapeMismatchError: an array has the wrong shape
        """
        for name, tensor in self._params.items():
            if name not in state:
                if strict:
                    raise KeyError(name)
                continue
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise ShapeMismatchError(f"Parameter '{name}' has shape {tensor.shape}, got {value.shape}")
            tensor.data = value.astype(self.dtype, copy=True)
        if strict:
            unknown = [name for name in state if name not in self._params]
            if unknown:
                raise KeyError(unknown[0])

    def clone(self, dtype: Optional[np.dtype] = None) -> "ParameterStore":
        """Deep copy with fresh gradient slots, optionally cast to another dtype."""
        copy = ParameterStore(dtype or self.dtype)
        for name, tensor in self._params.items():
            copy.add(name, tensor.data, trainable=name not in self._frozen)
        return copy


def kaiming_uniform(shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator, gain: float = math.sqrt(2.0)) -> np.ndarray:
    """U(-b, b) with b = gain * sqrt(3 / fan_in)."""
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)
