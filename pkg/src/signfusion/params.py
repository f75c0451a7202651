"""Registry for named trainable parameters with seeded initialization."""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter


class ParameterStore:
    """Creates uniquely named parameters and walks them for the optimizer."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._params: dict[str, Parameter] = {}

    def uniform(self, name: str, shape, fan_in: int | None = None) -> Parameter:
        """Glorot-style uniform init; fan_in defaults to the leading extent."""
        if fan_in is None:
            fan_in = shape[0] if shape else 1
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        data = self._rng.uniform(-bound, bound, size=shape)
        return self._register(Parameter(data, name))

    def zeros(self, name: str, shape) -> Parameter:
        return self._register(Parameter(np.zeros(shape), name))

    def ones(self, name: str, shape) -> Parameter:
        return self._register(Parameter(np.ones(shape), name))

    def _register(self, p: Parameter) -> Parameter:
        if p.name in self._params:
            raise ValueError(f"duplicate parameter name: {p.name}")
        self._params[p.name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def total_size(self) -> int:
        return sum(p.data.size for p in self._params.values())
