"""Parameter containers, initializers and the Adam optimizer."""

from __future__ import annotations

import dataclasses
from typing import Iterator

import numpy as np

from .errors import UsageError
from .tensor import Tensor


@dataclasses.dataclass(frozen=True)
class Param:
    """A named learnable tensor."""

    path: str
    tensor: Tensor


class ParamSet:
    """Mixin for dataclasses whose fields are Tensors, ParamSets, lists or None.

    Paths are dotted field names, list items are indexed ``name.0``.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Param]:
        yield from _walk(self, prefix)

    def parameters(self) -> list[Tensor]:
        return [p.tensor for p in self.named_parameters()]

    def state_dict(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for p in self.named_parameters():
            if p.path in out:
                raise UsageError(f"duplicate parameter path {p.path}")
            out[p.path] = p.tensor
        return out

    def num_parameters(self) -> int:
        return int(np.sum([t.data.size for t in self.parameters()], dtype=np.int64))


def _walk(obj, prefix: str) -> Iterator[Param]:
    if obj is None:
        return
    if isinstance(obj, Tensor):
        if obj.requires_grad:
            yield Param(prefix, obj)
        return
    if isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from _walk(item, f"{prefix}.{i}" if prefix else str(i))
        return
    if dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            if f.metadata.get("buffer"):
                continue
            yield from _walk(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)


def buffer(default=None):
    """Dataclass field holding non-learnable state (e.g. running stats)."""
    return dataclasses.field(default=default, metadata={"buffer": True})


class Init:
    """Seeded parameter factory; one instance per model build."""

    def __init__(self, rng: np.random.Generator, dtype=np.float64):
        self.rng = rng
        self.dtype = dtype

    def weight(self, fan_in: int, fan_out: int, gain: float = 1.0) -> Tensor:
        std = gain / np.sqrt(fan_in)
        return self._param(self.rng.normal(0.0, std, size=(fan_in, fan_out)))

    def kernel(self, k: int, c_in: int, c_out: int) -> Tensor:
        std = 1.0 / np.sqrt(k * c_in)
        return self._param(self.rng.normal(0.0, std, size=(k, c_in, c_out)))

    def zeros(self, *shape: int) -> Tensor:
        return self._param(np.zeros(shape))

    def ones(self, *shape: int) -> Tensor:
        return self._param(np.ones(shape))

    def full(self, value: float, *shape: int) -> Tensor:
        return self._param(np.full(shape, value))

    def normal(self, std: float, *shape: int) -> Tensor:
        return self._param(self.rng.normal(0.0, std, size=shape))

    def _param(self, arr: np.ndarray) -> Tensor:
        return Tensor(np.ascontiguousarray(arr, dtype=self.dtype), requires_grad=True)


class Adam:
    """Bias-corrected first/second moment optimizer."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype, copy=False)
