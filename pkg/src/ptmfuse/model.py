"""End-to-end master/slave pipeline and its parameter container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .config import ModelConfig
from .features.align import AlignParams, align_dims
from .features.bundle import Batch, stream_dims
from .fusion import (
    BgcaParams,
    BhgfnParams,
    HdwfParams,
    LdfnParams,
    MacpParams,
    bgca_forward,
    bhgfn_forward,
    hdwf_forward,
    ldfn_forward,
    macp_forward,
)
from .losses import Temperature
from .nn import Init, ParamSet
from .sequence import BiLstmParams, SsmParams, bilstm_forward, ssm_forward
from .tensor import Tensor

AUX_STREAMS = ("ember", "pseaac", "blosum", "aaindex")
FUSION_SLOTS = ("early", "mid1", "mid2", "late")


@dataclass
class LinearParams(ParamSet):
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, init: Init, d_in: int, d_out: int) -> "LinearParams":
        return cls(init.weight(d_in, d_out), init.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return tn.linear(x, self.w, self.b)


@dataclass
class AuxAlign(ParamSet):
    ember: AlignParams
    pseaac: AlignParams
    blosum: AlignParams
    aaindex: AlignParams


@dataclass
class EarlyFusion(ParamSet):
    """Either the attention blocks or their concat-and-project stand-ins."""

    bgca: BgcaParams | None = None
    ldfn: LdfnParams | None = None
    master_concat: LinearParams | None = None
    slave_concat: LinearParams | None = None


@dataclass
class MidFusion(ParamSet):
    bhgfn: BhgfnParams | None = None
    concat: LinearParams | None = None


@dataclass
class LateFusion(ParamSet):
    hdwf: HdwfParams | None = None
    add: LinearParams | None = None


@dataclass
class Head(ParamSet):
    hidden: LinearParams
    out: LinearParams


@dataclass
class ModelParams(ParamSet):
    align: AuxAlign
    proj_a: LinearParams
    proj_b: LinearParams
    early: EarlyFusion
    macp: MacpParams
    enc1: ParamSet
    mid1: MidFusion
    enc2: ParamSet
    mid2: MidFusion
    late: LateFusion
    head: Head
    temperature: Temperature | None = None

    def buffers(self) -> dict[str, np.ndarray]:
        return {"macp.running_mean": self.macp.running_mean, "macp.running_var": self.macp.running_var}

    def set_buffers(self, values: dict[str, np.ndarray]) -> None:
        self.macp.running_mean = np.array(values["macp.running_mean"], dtype=self.macp.running_mean.dtype)
        self.macp.running_var = np.array(values["macp.running_var"], dtype=self.macp.running_var.dtype)


def _encoder_params(init: Init, kind: str, cfg: ModelConfig) -> ParamSet:
    if kind == "bilstm":
        return BiLstmParams.init(init, cfg.d_m)
    return SsmParams.init(init, cfg.d_m, cfg.n_state)


def init_params(cfg: ModelConfig) -> ModelParams:
    """Build every learnable tensor from ``cfg.seed`` in a fixed order."""
    cfg.validate()
    init = Init(np.random.default_rng(cfg.seed), dtype=cfg.np_dtype)
    dims = stream_dims(cfg)
    strict = cfg.aux_dims == (256, 256, 512, 512)
    d_m, d_s = cfg.d_m, cfg.d_s

    align = AuxAlign(*[
        AlignParams.init(init, dims[name], target, strict=strict) for name, target in zip(AUX_STREAMS, cfg.aux_dims)
    ])
    proj_a = LinearParams.init(init, cfg.dim_prott5, d_m)
    proj_b = LinearParams.init(init, cfg.dim_esm2, d_m)

    if cfg.early == "bgca+ldfn":
        early = EarlyFusion(
            bgca=BgcaParams.init(init, d_m, cfg.groups),
            ldfn=LdfnParams.init(init, cfg.aux_dims, d_s, full=cfg.variant == "full"),
        )
    else:
        early = EarlyFusion(
            master_concat=LinearParams.init(init, 2 * d_m, d_m),
            slave_concat=LinearParams.init(init, sum(cfg.aux_dims), d_s),
        )
    macp = MacpParams.init(init, d_s, cfg.dilation)

    def mid() -> MidFusion:
        if cfg.mid == "bhgfn":
            return MidFusion(bhgfn=BhgfnParams.init(init, d_m, d_s))
        return MidFusion(concat=LinearParams.init(init, d_m + d_s, d_m))

    enc1 = _encoder_params(init, cfg.encoders[0], cfg)
    mid1 = mid()
    enc2 = _encoder_params(init, cfg.encoders[1], cfg)
    mid2 = mid()
    if cfg.late == "hdwf":
        late = LateFusion(hdwf=HdwfParams.init(init, d_m, d_s, cfg.heads))
    else:
        late = LateFusion(add=LinearParams.init(init, d_s, d_m))
    head = Head(LinearParams.init(init, d_m, d_m // 2), LinearParams.init(init, d_m // 2, 1))
    temperature = (
        Temperature.init(cfg.temperature, cfg.temperature_floor, dtype=cfg.np_dtype) if cfg.contrastive else None
    )
    return ModelParams(align, proj_a, proj_b, early, macp, enc1, mid1, enc2, mid2, late, head, temperature)


@dataclass
class ForwardOutput:
    logits: Tensor  # [B]
    stages: tuple[Tensor, Tensor, Tensor]  # F1, F2, F3, each [B, L, d_s]
    pooled: Tensor  # [B, 1, d_m] representation fed to the head


def _encode(kind: str, x: Tensor, p: ParamSet) -> Tensor:
    return bilstm_forward(x, p) if kind == "bilstm" else ssm_forward(x, p)


def _mid(h: Tensor, f: Tensor, p: MidFusion) -> Tensor:
    if p.bhgfn is not None:
        return bhgfn_forward(h, f, p.bhgfn)
    return p.concat(tn.concat([h, f]))


def model_forward(batch: Batch, params: ModelParams, cfg: ModelConfig, training: bool = False) -> ForwardOutput:
    strict = cfg.aux_dims == (256, 256, 512, 512)
    aligned = [
        align_dims(getattr(batch, name), target, getattr(params.align, name), strict=strict)
        for name, target in zip(AUX_STREAMS, cfg.aux_dims)
    ]
    xa = params.proj_a(batch.master_a)
    xb = params.proj_b(batch.master_b)

    early = params.early
    if early.bgca is not None:
        f = bgca_forward(xa, xb, early.bgca)
        s = ldfn_forward(*aligned, early.ldfn)
    else:
        f = early.master_concat(tn.concat([xa, xb]))
        s = early.slave_concat(tn.concat(aligned))

    f1, f2, f3 = macp_forward(s, params.macp, training=training)

    h = _encode(cfg.encoders[0], f, params.enc1)
    h = _mid(h, f1, params.mid1)
    h = _encode(cfg.encoders[1], h, params.enc2)
    h = _mid(h, f2, params.mid2)
    if params.late.hdwf is not None:
        h = hdwf_forward(h, f3, params.late.hdwf)
    else:
        h = h + params.late.add(f3)

    pooled = tn.mean_pool(h)
    z = params.head.out(tn.gelu(params.head.hidden(pooled)))
    logits = tn.reshape(z, (z.shape[0],))
    return ForwardOutput(logits, (f1, f2, f3), pooled)


def param_count(params: ParamSet) -> int:
    return params.num_parameters()


def fusion_param_count(params: ModelParams) -> int:
    """Parameters held by the early, mid and late fusion slots (whatever fills them)."""
    return sum(getattr(params, slot).num_parameters() for slot in FUSION_SLOTS)


def fusion_block_count(params: ModelParams) -> int:
    """Parameters inside BGCA, LDFN, BHGFN and HDWF blocks only."""
    blocks = [params.early.bgca, params.early.ldfn, params.mid1.bhgfn, params.mid2.bhgfn, params.late.hdwf]
    return sum(b.num_parameters() for b in blocks if b is not None)
