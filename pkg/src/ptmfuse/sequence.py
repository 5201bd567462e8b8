"""Master-branch temporal encoders: bidirectional LSTM and a selective scan."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ConfigError
from .nn import Init, ParamSet
from .tensor import Tensor


@dataclass
class LstmDirection(ParamSet):
    w_x: Tensor  # [d_in, 4h], gate order i, f, g, o
    w_h: Tensor  # [h, 4h]
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]

    @classmethod
    def init(cls, init: Init, d_in: int, hidden: int) -> "LstmDirection":
        b = init.zeros(4 * hidden)
        b.data[hidden : 2 * hidden] = 1.0  # forget-gate bias
        return cls(w_x=init.weight(d_in, 4 * hidden), w_h=init.weight(hidden, 4 * hidden), b=b)


@dataclass
class BiLstmParams(ParamSet):
    fwd: LstmDirection
    bwd: LstmDirection
    w_o: Tensor
    b_o: Tensor

    @classmethod
    def init(cls, init: Init, d_m: int) -> "BiLstmParams":
        if d_m % 2:
            raise ConfigError(f"d_m must be even for two LSTM directions, got {d_m}")
        h = d_m // 2
        return cls(LstmDirection.init(init, d_m, h), LstmDirection.init(init, d_m, h),
                   init.weight(d_m, d_m), init.zeros(d_m))


def lstm_run(x: Tensor, p: LstmDirection) -> Tensor:
    """Left-to-right LSTM over ``[B, L, C]``; returns hidden states ``[B, L, h]``."""
    bsz, length, _ = x.shape
    h_dim = p.hidden
    xz = tn.linear(x, p.w_x, p.b)
    h = c = None
    outs = []
    for t in range(length):
        z = tn.take(xz, t, t + 1, axis=1)
        if h is not None:
            z = z + h @ p.w_h
        i = tn.sigmoid(tn.take(z, 0, h_dim))
        f = tn.sigmoid(tn.take(z, h_dim, 2 * h_dim))
        g = tn.tanh(tn.take(z, 2 * h_dim, 3 * h_dim))
        o = tn.sigmoid(tn.take(z, 3 * h_dim, 4 * h_dim))
        c = i * g if c is None else f * c + i * g
        h = o * tn.tanh(c)
        outs.append(h)
    return tn.concat(outs, axis=1)


def bilstm_hidden(x: Tensor, p: BiLstmParams) -> tuple[Tensor, Tensor]:
    """Forward and backward hidden streams, both aligned to input positions."""
    hf = lstm_run(x, p.fwd)
    hb = tn.reverse(lstm_run(tn.reverse(x), p.bwd))
    return hf, hb


def bilstm_forward(x: Tensor, p: BiLstmParams) -> Tensor:
    hf, hb = bilstm_hidden(x, p)
    return tn.linear(tn.concat([hf, hb]), p.w_o, p.b_o)


@dataclass
class SsmParams(ParamSet):
    """Diagonal selective state-space layer.

    Each of the ``D`` inner channels carries ``N`` states.  The decay
    ``a_t = sigmoid(decay_base + delta_t)`` lies in (0, 1) and depends on the
    input through ``delta_t = u_t w_delta``; ``B_t`` and ``C_t`` are input
    projections as well.
    """

    w_in: Tensor  # [d, 2d] -> (u, z)
    b_in: Tensor
    conv_k: Tensor  # depthwise [3, d]
    conv_b: Tensor
    decay_base: Tensor  # [d * N]
    w_delta: Tensor  # [d, d]
    w_b: Tensor  # [d, N]
    w_c: Tensor  # [d, N]
    d_skip: Tensor  # [d]
    w_out: Tensor
    b_out: Tensor

    @property
    def n_state(self) -> int:
        return self.w_b.shape[1]

    @classmethod
    def init(cls, init: Init, d_m: int, n_state: int = 16) -> "SsmParams":
        rng = init.rng
        # decays spread over (0.5, 0.97) so states mix short and long memory
        base = rng.uniform(0.0, 3.5, size=d_m * n_state)
        return cls(
            w_in=init.weight(d_m, 2 * d_m), b_in=init.zeros(2 * d_m),
            conv_k=init.normal(1.0 / 3.0 ** 0.5, 3, d_m), conv_b=init.zeros(d_m),
            decay_base=init._param(base),
            w_delta=init.weight(d_m, d_m),
            w_b=init.weight(d_m, n_state), w_c=init.weight(d_m, n_state),
            d_skip=init.ones(d_m),
            w_out=init.weight(d_m, d_m), b_out=init.zeros(d_m),
        )


def selective_scan(u: Tensor, p: SsmParams, trace: dict | None = None) -> Tensor:
    """``h_t = a_t * h_{t-1} + B_t u_t``, read out as ``y_t = C_t h_t + D u_t``."""
    n = p.n_state
    ones = Tensor(np.ones(u.shape[:-1] + (n,), dtype=u.dtype))
    delta = u @ p.w_delta
    a = tn.sigmoid(tn.outer_lastdim(delta, ones) + p.decay_base)
    x = tn.outer_lastdim(u, u @ p.w_b)
    h = tn.linear_scan(a, x)
    y = tn.group_contract(h, u @ p.w_c) + u * p.d_skip
    if trace is not None:
        trace.update(decay=a, state=h)
    return y


def ssm_forward(x: Tensor, p: SsmParams, trace: dict | None = None) -> Tensor:
    d = p.w_in.shape[0]
    if x.ndim != 3 or x.shape[-1] != d:
        raise ConfigError(f"ssm input must be [B, L, {d}], got {x.shape}")
    uz = tn.linear(x, p.w_in, p.b_in)
    u, z = tn.take(uz, 0, d), tn.take(uz, d, 2 * d)
    u = tn.silu(tn.depthwise_conv1d(u, p.conv_k) + p.conv_b)
    y = selective_scan(u, p, trace)
    return x + tn.linear(y * tn.silu(z), p.w_out, p.b_out)
