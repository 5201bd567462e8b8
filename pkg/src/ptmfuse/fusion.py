"""Master/slave fusion blocks.

All blocks take ``[B, L, C]`` tensors and a parameter dataclass.  Each
forward accepts an optional ``trace`` dict that receives named
intermediates (gates, attention maps) for inspection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .errors import ConfigError, DimensionError
from .nn import Init, ParamSet, buffer
from .tensor import Tensor

KERNELS = (3, 5, 7)


def _record(trace: dict | None, **items) -> None:
    if trace is not None:
        trace.update(items)


def attend(q: Tensor, k: Tensor, v: Tensor, logit_scale: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention; returns ``(A V, A)``."""
    logits = tn.matmul(q, tn.transpose(k))
    if logit_scale is not None:
        logits = logits * logit_scale
    a = tn.softmax_lastdim(logits, scale=1.0 / math.sqrt(q.shape[-1]))
    return tn.matmul(a, v), a


def gate_mix(g: Tensor, a: Tensor, b: Tensor) -> Tensor:
    """Convex combination ``g * a + (1 - g) * b``."""
    return g * a + (1.0 - g) * b


def _weighted(weights: Tensor, parts: list[Tensor]) -> Tensor:
    # weights [..., n] (last axis indexes parts); each part broadcasts over channels
    out = None
    for i, part in enumerate(parts):
        term = tn.take(weights, i, i + 1) * part
        out = term if out is None else out + term
    return out


def _check_width(x: Tensor, d: int, what: str) -> None:
    if x.ndim != 3 or x.shape[-1] != d:
        raise ConfigError(f"{what}: expected [B, L, {d}], got {x.shape}")


# ---------------------------------------------------------------------------
# BGCA: grouped bidirectional cross-attention over the two master embeddings
# ---------------------------------------------------------------------------


@dataclass
class BgcaParams(ParamSet):
    wq1: list[Tensor]
    wk1: list[Tensor]
    wv1: list[Tensor]
    wq2: list[Tensor]
    wk2: list[Tensor]
    wv2: list[Tensor]
    conv_k: list[Tensor]
    conv_b: list[Tensor]
    w_g: Tensor
    b_g: Tensor
    w_f: Tensor
    b_f: Tensor
    ln_g: Tensor
    ln_b: Tensor

    @property
    def groups(self) -> int:
        return len(self.wq1)

    @classmethod
    def init(cls, init: Init, d: int, groups: int = 4) -> "BgcaParams":
        if d % groups:
            raise ConfigError(f"d_m={d} not divisible by groups={groups}")
        dg = d // groups

        def grouped():
            return [init.weight(dg, dg) for _ in range(groups)]

        return cls(
            wq1=grouped(), wk1=grouped(), wv1=grouped(),
            wq2=grouped(), wk2=grouped(), wv2=grouped(),
            conv_k=[init.kernel(k, d, d) for k in KERNELS],
            conv_b=[init.zeros(d) for _ in KERNELS],
            w_g=init.weight(3 * d, 3), b_g=init.zeros(3),
            w_f=init.weight(2 * d, 2), b_f=init.zeros(2),
            ln_g=init.ones(d), ln_b=init.zeros(d),
        )


def _grouped_attention(xq: Tensor, xkv: Tensor, wq, wk, wv) -> tuple[Tensor, list[Tensor]]:
    g = len(wq)
    qs, ks = tn.split(xq, g), tn.split(xkv, g)
    outs, maps = [], []
    for i in range(g):
        o, a = attend(qs[i] @ wq[i], ks[i] @ wk[i], ks[i] @ wv[i])
        outs.append(o)
        maps.append(a)
    return tn.concat(outs), maps


def bgca_forward(x1: Tensor, x2: Tensor, p: BgcaParams, trace: dict | None = None) -> Tensor:
    d = p.ln_g.shape[0]
    _check_width(x1, d, "bgca x1")
    _check_width(x2, d, "bgca x2")
    if d % p.groups:
        raise ConfigError(f"d_m={d} not divisible by groups={p.groups}")
    attn1, maps1 = _grouped_attention(x1, x2, p.wq1, p.wk2, p.wv2)
    attn2, maps2 = _grouped_attention(x2, x1, p.wq2, p.wk1, p.wv1)

    convs = [tn.conv1d(attn1, k, b) for k, b in zip(p.conv_k, p.conv_b)]
    alpha = tn.softmax_lastdim(tn.linear(tn.concat(convs), p.w_g, p.b_g))
    fused = _weighted(alpha, convs)

    beta = tn.softmax_lastdim(tn.linear(tn.concat([fused, attn2]), p.w_f, p.b_f))
    f = _weighted(beta, [fused, attn2])
    _record(trace, attn1=attn1, attn2=attn2, attn_maps=maps1 + maps2, convs=convs,
            alpha=alpha, conv_fusion=fused, beta=beta, fused=f)
    return tn.layer_norm(f + x1, p.ln_g, p.ln_b)


# ---------------------------------------------------------------------------
# LDFN: pairwise cross-dense fusion of the four auxiliary features
# ---------------------------------------------------------------------------


@dataclass
class LdfnPair(ParamSet):
    w_in1: Tensor
    b_in1: Tensor
    w_in2: Tensor
    b_in2: Tensor
    w_q1: Tensor
    w_q2: Tensor
    w_k: Tensor
    w_v: Tensor
    # the remaining fields are absent in the reduced (mini) variant
    w_g: Tensor | None = None
    b_g: Tensor | None = None
    conv_k: list[Tensor] | None = None
    conv_b: list[Tensor] | None = None
    w_c: Tensor | None = None
    b_c: Tensor | None = None
    mix: Tensor | None = None

    @property
    def full(self) -> bool:
        return self.w_g is not None

    @classmethod
    def init(cls, init: Init, d_in: int, d: int, full: bool = True) -> "LdfnPair":
        core = dict(
            w_in1=init.weight(d_in, d), b_in1=init.zeros(d),
            w_in2=init.weight(d_in, d), b_in2=init.zeros(d),
            w_q1=init.weight(d, d), w_q2=init.weight(d, d),
            w_k=init.weight(d, d), w_v=init.weight(d, d),
        )
        if not full:
            return cls(**core)
        return cls(
            **core,
            w_g=init.weight(2 * d, d), b_g=init.zeros(d),
            conv_k=[init.kernel(k, d, d) for k in KERNELS],
            conv_b=[init.zeros(d) for _ in KERNELS],
            w_c=init.weight(3 * d, d), b_c=init.zeros(d),
            mix=init.zeros(d, 3),
        )


@dataclass
class LdfnParams(ParamSet):
    pair_a: LdfnPair
    pair_b: LdfnPair
    w_o: Tensor
    b_o: Tensor

    @classmethod
    def init(cls, init: Init, dims: tuple[int, int, int, int], d_s: int, full: bool = True) -> "LdfnParams":
        return cls(
            pair_a=LdfnPair.init(init, dims[0], d_s, full),
            pair_b=LdfnPair.init(init, dims[2], d_s, full),
            w_o=init.weight(2 * d_s, d_s),
            b_o=init.zeros(d_s),
        )


def cross_dense(x1: Tensor, x2: Tensor, p: LdfnPair, trace: dict | None = None):
    """Both attention directions with one shared K/V projection."""
    xp1 = tn.linear(x1, p.w_in1, p.b_in1)
    xp2 = tn.linear(x2, p.w_in2, p.b_in2)
    attn1, a1 = attend(xp1 @ p.w_q1, xp2 @ p.w_k, xp2 @ p.w_v)
    attn2, a2 = attend(xp2 @ p.w_q2, xp1 @ p.w_k, xp1 @ p.w_v)
    _record(trace, xp1=xp1, xp2=xp2, attn1=attn1, attn2=attn2, attn_maps=[a1, a2])
    return xp1, xp2, attn1, attn2


def ldfn_pair(x1: Tensor, x2: Tensor, p: LdfnPair, trace: dict | None = None) -> Tensor:
    xp1, xp2, attn1, attn2 = cross_dense(x1, x2, p, trace)
    if not p.full:
        return attn1 + attn2
    g = tn.sigmoid(tn.linear(tn.concat([attn1, attn2]), p.w_g, p.b_g))
    dist = gate_mix(g, attn1, attn2)
    convs = [tn.conv1d(dist, k, b) for k, b in zip(p.conv_k, p.conv_b)]
    fc = tn.linear(tn.concat(convs), p.w_c, p.b_c)
    # per-channel convex weights over {distilled, multi-scale, projected sum}
    w = tn.softmax_lastdim(p.mix)
    parts = [dist, fc, xp1 + xp2]
    out = None
    for i, part in enumerate(parts):
        term = tn.reshape(tn.take(w, i, i + 1), (w.shape[0],)) * part
        out = term if out is None else out + term
    _record(trace, gate=g, distilled=dist, f_c=fc, mix=w)
    return out


def ldfn_forward(e1: Tensor, e2: Tensor, e3: Tensor, e4: Tensor, p: LdfnParams,
                 trace: dict | None = None) -> Tensor:
    da, db = p.pair_a.w_in1.shape[0], p.pair_b.w_in1.shape[0]
    for x, d, name in ((e1, da, "e1"), (e2, da, "e2"), (e3, db, "e3"), (e4, db, "e4")):
        _check_width(x, d, f"ldfn {name}")
    ta = {} if trace is not None else None
    tb = {} if trace is not None else None
    out_a = ldfn_pair(e1, e2, p.pair_a, ta)
    out_b = ldfn_pair(e3, e4, p.pair_b, tb)
    _record(trace, pair_a=ta, pair_b=tb)
    return tn.linear(tn.concat([out_a, out_b]), p.w_o, p.b_o)


# ---------------------------------------------------------------------------
# MACP: three-stage convolution pyramid on the slave branch
# ---------------------------------------------------------------------------


@dataclass
class MacpParams(ParamSet):
    # shallow
    w_s: Tensor
    b_s: Tensor
    conv3: Tensor
    conv3_b: Tensor
    conv5: Tensor
    conv5_b: Tensor
    ca_w1: Tensor
    ca_b1: Tensor
    ca_w2: Tensor
    ca_b2: Tensor
    # middle
    dil_k: Tensor
    dil_b: Tensor
    bn_g: Tensor
    bn_b: Tensor
    se_w1: Tensor
    se_b1: Tensor
    se_w2: Tensor
    se_b2: Tensor
    skip_k: Tensor
    skip_b: Tensor
    # deep
    ms_k: list[Tensor]
    ms_b: list[Tensor]
    w_fc: Tensor
    b_fc: Tensor
    co_w1: Tensor
    co_b1: Tensor
    co_w2: Tensor
    co_b2: Tensor
    sp_k: Tensor
    sp_b: Tensor
    dilation: int = 2
    running_mean: np.ndarray = buffer()
    running_var: np.ndarray = buffer()
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def init(cls, init: Init, d: int, dilation: int = 2, reduction: int = 4) -> "MacpParams":
        r = max(d // reduction, 1)
        return cls(
            w_s=init.weight(d, d), b_s=init.zeros(d),
            conv3=init.kernel(3, d, d), conv3_b=init.zeros(d),
            conv5=init.kernel(5, d, d), conv5_b=init.zeros(d),
            ca_w1=init.weight(d, r), ca_b1=init.zeros(r),
            ca_w2=init.weight(r, d), ca_b2=init.zeros(d),
            dil_k=init.kernel(3, d, d), dil_b=init.zeros(d),
            bn_g=init.ones(d), bn_b=init.zeros(d),
            se_w1=init.weight(d, r), se_b1=init.zeros(r),
            se_w2=init.weight(r, d), se_b2=init.zeros(d),
            skip_k=init.kernel(1, d, d), skip_b=init.zeros(d),
            ms_k=[init.kernel(k, d, d) for k in KERNELS],
            ms_b=[init.zeros(d) for _ in KERNELS],
            w_fc=init.weight(3 * d, d), b_fc=init.zeros(d),
            co_w1=init.weight(d, r), co_b1=init.zeros(r),
            co_w2=init.weight(r, d), co_b2=init.zeros(d),
            sp_k=init.kernel(3, d, 1), sp_b=init.zeros(1),
            dilation=dilation,
            running_mean=np.zeros(d, dtype=init.dtype),
            running_var=np.ones(d, dtype=init.dtype),
        )


def _squeeze_gate(x: Tensor, w1, b1, w2, b2) -> Tensor:
    """``sigmoid(W2 GELU(W1 GAP(x)))`` as a ``[B, 1, C]`` channel gate."""
    return tn.sigmoid(tn.linear(tn.gelu(tn.linear(tn.mean_pool(x), w1, b1)), w2, b2))


def batch_norm(x: Tensor, p: MacpParams, training: bool) -> Tensor:
    """Per-channel batch normalization over batch and length axes."""
    if training:
        mu = tn.mean(x, axis=(0, 1), keepdims=True)
        xc = x - mu
        var = tn.mean(xc * xc, axis=(0, 1), keepdims=True)
        n = x.shape[0] * x.shape[1]
        unbiased = var.data.reshape(-1) * (n / max(n - 1, 1))
        p.running_mean = (1 - p.momentum) * p.running_mean + p.momentum * mu.data.reshape(-1)
        p.running_var = (1 - p.momentum) * p.running_var + p.momentum * unbiased
        y = xc / tn.sqrt(var + p.eps)
    else:
        y = (x - Tensor(p.running_mean, dtype=x.dtype)) / Tensor(np.sqrt(p.running_var + p.eps), dtype=x.dtype)
    return y * p.bn_g + p.bn_b


def macp_forward(x: Tensor, p: MacpParams, training: bool = False,
                 trace: dict | None = None) -> tuple[Tensor, Tensor, Tensor]:
    d = p.w_s.shape[0]
    _check_width(x, d, "macp input")

    alpha = tn.sigmoid(tn.linear(tn.mean_pool(x), p.w_s, p.b_s))
    c3 = tn.conv1d(x, p.conv3, p.conv3_b)
    c5 = tn.conv1d(x, p.conv5, p.conv5_b)
    blend = gate_mix(alpha, c3, c5)
    ca = _squeeze_gate(blend, p.ca_w1, p.ca_b1, p.ca_w2, p.ca_b2)
    f1 = blend * ca

    main = batch_norm(tn.gelu(tn.conv1d(f1, p.dil_k, p.dil_b, dilation=p.dilation)), p, training)
    se = _squeeze_gate(main, p.se_w1, p.se_b1, p.se_w2, p.se_b2)
    skip = tn.conv1d(f1, p.skip_k, p.skip_b)
    f2 = main * se + skip

    fc = tn.linear(tn.concat([tn.conv1d(f2, k, b) for k, b in zip(p.ms_k, p.ms_b)]), p.w_fc, p.b_fc)
    a_c = _squeeze_gate(fc, p.co_w1, p.co_b1, p.co_w2, p.co_b2)
    a_s = tn.sigmoid(tn.conv1d(fc, p.sp_k, p.sp_b))
    f3 = f2 * a_c * a_s
    _record(trace, alpha=alpha, conv3=c3, conv5=c5, blend=blend, channel_gate=ca, f_main=main,
            se_gate=se, skip=skip, f_c=fc, a_c=a_c, a_s=a_s)
    return f1, f2, f3


# ---------------------------------------------------------------------------
# BHGFN: mid-stage master/slave fusion with triple gating
# ---------------------------------------------------------------------------


@dataclass
class BhgfnParams(ParamSet):
    w_q1: Tensor
    w_k: Tensor
    w_v: Tensor
    w_q2: Tensor
    w_g: Tensor
    b_g: Tensor
    phi_w: Tensor
    phi_b: Tensor
    f_c: Tensor
    b_c: Tensor
    sp_k: Tensor
    sp_b: Tensor
    ln_g: Tensor
    ln_b: Tensor
    w_in: Tensor | None = None
    b_in: Tensor | None = None

    @classmethod
    def init(cls, init: Init, d_m: int, d_s: int, kernel: int = 3) -> "BhgfnParams":
        return cls(
            w_q1=init.weight(d_m, d_m), w_k=init.weight(d_m, d_m), w_v=init.weight(d_m, d_m),
            w_q2=init.weight(d_m, d_m),
            w_g=init.weight(2 * d_m, d_m), b_g=init.zeros(d_m),
            phi_w=init.weight(d_m, kernel * d_m), phi_b=init.zeros(kernel * d_m),
            f_c=init.weight(d_m, d_m), b_c=init.zeros(d_m),
            sp_k=init.kernel(3, d_m, 1), sp_b=init.zeros(1),
            ln_g=init.ones(d_m), ln_b=init.zeros(d_m),
            w_in=init.weight(d_s, d_m) if d_s != d_m else None,
            b_in=init.zeros(d_m) if d_s != d_m else None,
        )


def dynamic_kernel(h1: Tensor, p: BhgfnParams) -> Tensor:
    """Per-sample depthwise kernel ``[B, k, C]`` generated from pooled ``h1``."""
    bsz, _, d = h1.shape
    k = p.phi_w.shape[1] // d
    raw = tn.linear(tn.mean_pool(h1), p.phi_w, p.phi_b)
    taps = tn.softmax_lastdim(tn.reshape(raw, (bsz, d, k)))
    return tn.transpose(taps)


def bhgfn_forward(h1: Tensor, h2: Tensor, p: BhgfnParams, trace: dict | None = None) -> Tensor:
    d = p.ln_g.shape[0]
    _check_width(h1, d, "bhgfn h1")
    if p.w_in is not None:
        _check_width(h2, p.w_in.shape[0], "bhgfn h2")
        h2 = tn.linear(h2, p.w_in, p.b_in)
    else:
        _check_width(h2, d, "bhgfn h2")
    if h1.shape[:2] != h2.shape[:2]:
        raise DimensionError(f"bhgfn batch/length mismatch: {h1.shape} vs {h2.shape}")

    a1, m1 = attend(h1 @ p.w_q1, h2 @ p.w_k, h2 @ p.w_v)
    a2, m2 = attend(h2 @ p.w_q2, h1, h1)
    g_a = tn.sigmoid(tn.linear(tn.concat([a1, a2]), p.w_g, p.b_g))
    f_a = gate_mix(g_a, a1, a2)

    kern = dynamic_kernel(h1, p)
    f_conv = tn.depthwise_conv1d(f_a, kern)
    g_c = tn.sigmoid(tn.linear(h1, p.f_c, p.b_c))
    f_gc = g_c * f_conv
    g_s = tn.sigmoid(tn.conv1d(f_gc, p.sp_k, p.sp_b))
    f_gs = g_s * f_gc
    _record(trace, a1=a1, a2=a2, attn_maps=[m1, m2], g_alpha=g_a, f_alpha=f_a, kernel=kern,
            f_conv=f_conv, g_c=g_c, f_gc=f_gc, g_s=g_s, f_gs=f_gs)
    return tn.layer_norm(f_gs + h1, p.ln_g, p.ln_b)


# ---------------------------------------------------------------------------
# HDWF: late fusion with dynamic-temperature multi-head attention
# ---------------------------------------------------------------------------


@dataclass
class HdwfParams(ParamSet):
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w_p: Tensor
    sp_k: Tensor
    sp_b: Tensor
    w_c: Tensor
    b_c: Tensor
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    tau_offset: Tensor
    w_m: Tensor
    b_m: Tensor
    w_h: Tensor
    layer_scale: Tensor
    gamma_blend: Tensor
    beta_blend: Tensor
    ln_g: Tensor
    ln_b: Tensor
    heads: int = field(default=4)
    w_in: Tensor | None = None
    b_in: Tensor | None = None

    @classmethod
    def init(cls, init: Init, d_m: int, d_s: int | None = None, heads: int = 4,
             reduction: int = 4) -> "HdwfParams":
        if d_m % heads:
            raise ConfigError(f"d_m={d_m} not divisible by heads={heads}")
        r = max(d_m // reduction, 1)
        project = d_s is not None and d_s != d_m
        return cls(
            w1=init.weight(d_m, r), b1=init.zeros(r),
            w2=init.weight(r, d_m), b2=init.zeros(d_m),
            w_p=init.weight(d_m, d_m),
            sp_k=init.kernel(7, d_m, r), sp_b=init.zeros(r),
            w_c=init.weight(r, 1), b_c=init.zeros(1),
            w_q=init.weight(d_m, d_m), w_k=init.weight(d_m, d_m), w_v=init.weight(d_m, d_m),
            tau_offset=init.ones(1),
            w_m=init.weight(d_m, d_m), b_m=init.zeros(d_m),
            w_h=init.weight(d_m, heads),
            layer_scale=init.full(1e-6, d_m),
            gamma_blend=init.zeros(1), beta_blend=init.zeros(1),
            ln_g=init.ones(d_m), ln_b=init.zeros(d_m),
            heads=heads,
            w_in=init.weight(d_s, d_m) if project else None,
            b_in=init.zeros(d_m) if project else None,
        )


def dynamic_temperature(m: Tensor, p: HdwfParams) -> Tensor:
    """``tau = alpha + mean_i(mean_c M_ic)`` per sample, shaped ``[B, 1, 1]``."""
    return tn.mean(m, axis=(1, 2), keepdims=True) + p.tau_offset


def hdwf_forward(m: Tensor, s: Tensor, p: HdwfParams, trace: dict | None = None) -> Tensor:
    d = p.ln_g.shape[0]
    _check_width(m, d, "hdwf m")
    if p.w_in is not None:
        _check_width(s, p.w_in.shape[0], "hdwf s")
        s = tn.linear(s, p.w_in, p.b_in)
    else:
        _check_width(s, d, "hdwf s")

    g_c = _squeeze_gate(m, p.w1, p.b1, p.w2, p.b2)
    m_t = (m * g_c) @ p.w_p
    spatial = tn.sigmoid(tn.linear(tn.conv1d(s, p.sp_k, p.sp_b), p.w_c, p.b_c))
    s_t = s * spatial

    tau = dynamic_temperature(m, p)
    q, k = m_t @ p.w_q, s_t @ p.w_k
    v = m_t @ p.w_v
    mixw = tn.softmax_lastdim(tn.gelu(tn.linear(m, p.w_m, p.b_m)) @ p.w_h)
    qs, ks = tn.split(q, p.heads), tn.split(k, p.heads)
    heads, maps = [], []
    for h in range(p.heads):
        g_h, a_h = attend(qs[h], ks[h], v, logit_scale=tau)
        heads.append(g_h)
        maps.append(a_h)
    g_mix = _weighted(mixw, heads)

    out = p.layer_scale * m + (1.0 + p.gamma_blend) * g_mix + p.beta_blend * m
    _record(trace, g_c=g_c, m_tilde=m_t, spatial=spatial, s_tilde=s_t, tau=tau, attn_maps=maps,
            head_weights=mixw, g_tilde=g_mix)
    return tn.layer_norm(out, p.ln_g, p.ln_b)
