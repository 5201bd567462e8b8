"""Learned width alignment of auxiliary features (linear + residual conv block)."""

from __future__ import annotations

from dataclasses import dataclass

from .. import tensor as tn
from ..errors import ConfigError
from ..nn import Init, ParamSet
from ..tensor import Tensor

ALIGN_TARGETS = (256, 512)


@dataclass
class AlignParams(ParamSet):
    w: Tensor
    b: Tensor
    conv_k: Tensor
    conv_b: Tensor

    @classmethod
    def init(cls, init: Init, d_in: int, target: int, strict: bool = True) -> "AlignParams":
        check_target(target, strict)
        return cls(
            w=init.weight(d_in, target),
            b=init.zeros(target),
            conv_k=init.kernel(3, target, target),
            conv_b=init.zeros(target),
        )


def check_target(target: int, strict: bool = True) -> None:
    if strict and target not in ALIGN_TARGETS:
        raise ConfigError(f"alignment target must be one of {ALIGN_TARGETS}, got {target}")
    if target < 1:
        raise ConfigError(f"alignment target must be positive, got {target}")


def align_dims(x: Tensor, target: int, p: AlignParams, strict: bool = True) -> Tensor:
    """Project ``[B, L, d_in]`` to ``[B, L, target]``.

    ``y = x W + b`` followed by ``y + GELU(conv3(y))``.  ``strict`` restricts
    ``target`` to the 256/512 widths used at full scale; reduced-width test
    configurations pass ``strict=False``.
    """
    check_target(target, strict)
    if p.w.shape[1] != target:
        raise ConfigError(f"params project to {p.w.shape[1]}, asked for {target}")
    y = tn.linear(x, p.w, p.b)
    return y + tn.gelu(tn.conv1d(y, p.conv_k, p.conv_b))
