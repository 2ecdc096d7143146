"""
Parameter Containers

`Module` keeps an ordered registry of parameters and child modules so that
parameter names, checkpoint record order and optimizer state order are all
fixed by construction order.
"""

from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from src.core.exceptions import ShapeError
from src.tensor.autodiff import Tensor


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform in +-1/sqrt(fan_in)"""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """
    Base class for anything holding trainable tensors

    Example:
        >>> m = Module()
        >>> _ = m.add_param("w", np.zeros(3))
        >>> list(m.parameters())
        ['w']
    """

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._children: Dict[str, "Module"] = {}

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        param = Tensor(value, requires_grad=True, name=name)
        self._params[name] = param
        return param

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, param in self._params.items():
            yield f"{prefix}{name}", param
        for child_name, child in self._children.items():
            yield from child.named_parameters(prefix=f"{prefix}{child_name}.")

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for param in self.parameters().values():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise ShapeError(f"State mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, param in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ShapeError(f"{name}: checkpoint shape {value.shape} vs model {param.shape}")
            param.data = value.copy()
