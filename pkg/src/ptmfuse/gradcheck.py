"""Finite-difference verification of every differentiable component."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as tn
from .config import toy_config
from .features.align import AlignParams, align_dims
from .features.bundle import STREAMS, Batch, stream_dims
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
from .losses import (
    LossSchedule,
    Temperature,
    cross_layer_loss,
    focal_loss,
    hierarchical_loss,
    intra_layer_loss,
    l2_normalize,
    total_loss,
    weighted_ce,
)
from .model import init_params, model_forward
from .nn import Init
from .sequence import BiLstmParams, SsmParams, bilstm_forward, ssm_forward
from .tensor import Tensor

TOLERANCE = 1e-4


@dataclass
class GradResult:
    name: str
    error: float
    seconds: float

    @property
    def ok(self) -> bool:
        return self.error < TOLERANCE


def _projected(fwd: Callable[[], Tensor], rng: np.random.Generator) -> Callable[[], Tensor]:
    # random linear functional of the output, so no gradient is structurally zero
    weights = Tensor(rng.normal(size=fwd().shape))
    return lambda: tn.sum(fwd() * weights)


def _unit(rng, b, d) -> Tensor:
    z = rng.normal(size=(b, d))
    return Tensor(z / np.linalg.norm(z, axis=1, keepdims=True), requires_grad=True)


def gradient_suite(d_m: int = 16, length: int = 9, batch: int = 2, seed: int = 0, h: float = 1e-5,
                   n_samples: int = 64) -> list[GradResult]:
    """Run the check on each block, each loss and the whole pipeline (float64)."""
    rng = np.random.default_rng(seed)
    init = Init(rng)
    d_s = max(d_m // 2, 4)
    cases: list[tuple[str, Callable[[], Tensor], list[Tensor]]] = []

    def x(*shape) -> Tensor:
        return Tensor(rng.normal(size=shape), requires_grad=True)

    def add(name, fwd, params, inputs=()):
        cases.append((name, _projected(fwd, rng), list(params) + list(inputs)))

    raw = x(batch, length, 12)
    ap = AlignParams.init(init, 12, d_m, strict=False)
    add("align", lambda: align_dims(raw, d_m, ap, strict=False), ap.parameters(), [raw])

    x1, x2 = x(batch, length, d_m), x(batch, length, d_m)
    bg = BgcaParams.init(init, d_m)
    add("bgca", lambda: bgca_forward(x1, x2, bg), bg.parameters(), [x1, x2])

    aux = [x(batch, length, d_m), x(batch, length, d_m), x(batch, length, 2 * d_m), x(batch, length, 2 * d_m)]
    for variant, full in (("ldfn", True), ("cross_dense", False)):
        lp = LdfnParams.init(init, (d_m, d_m, 2 * d_m, 2 * d_m), d_s, full=full)
        if full:
            # move the mixing logits off their symmetric zero init
            for pair in (lp.pair_a, lp.pair_b):
                pair.mix.data[...] = rng.normal(size=pair.mix.shape)
        add(variant, lambda lp=lp: ldfn_forward(*aux, lp), lp.parameters(), aux[:1])

    s = x(batch, length, d_s)
    mp = MacpParams.init(init, d_s)
    for mode in (True, False):
        add(f"macp[{'train' if mode else 'eval'}]",
            lambda mode=mode: tn.concat(list(macp_forward(s, mp, training=mode))), mp.parameters(), [s])

    h1, h2 = x(batch, length, d_m), x(batch, length, d_s)
    bh = BhgfnParams.init(init, d_m, d_s)
    add("bhgfn", lambda: bhgfn_forward(h1, h2, bh), bh.parameters(), [h1, h2])

    hd = HdwfParams.init(init, d_m, d_s)
    # blend scalars and layer scale away from init so their gradients are exercised
    hd.layer_scale.data[...] = rng.normal(scale=0.5, size=hd.layer_scale.shape)
    hd.gamma_blend.data[...] = 0.3
    hd.beta_blend.data[...] = -0.2
    add("hdwf", lambda: hdwf_forward(h1, h2, hd), hd.parameters(), [h1, h2])

    lstm = BiLstmParams.init(init, d_m)
    add("bilstm", lambda: bilstm_forward(x1, lstm), lstm.parameters(), [x1])
    ssm = SsmParams.init(init, d_m, 4)
    add("ssm", lambda: ssm_forward(x1, ssm), ssm.parameters(), [x1])

    b = 6
    labels = np.array([0, 1, 0, 1, 1, 0])
    temp = Temperature.init(0.5)
    z1, z2 = _unit(rng, b, 8), _unit(rng, b, 8)
    cases.append(("intra_layer", lambda: intra_layer_loss(l2_normalize(z1), labels, temp), [z1, temp.rho]))
    cases.append(("cross_layer", lambda: cross_layer_loss(l2_normalize(z1), l2_normalize(z2), temp),
                  [z1, z2, temp.rho]))
    stages = [x(b, length, 8) for _ in range(3)]
    cases.append(("hierarchical", lambda: hierarchical_loss(stages, labels, temp), stages + [temp.rho]))
    logits = x(b)
    cases.append(("focal", lambda: focal_loss(logits, labels), [logits]))
    cases.append(("weighted_ce", lambda: weighted_ce(logits, labels, 2.0), [logits]))

    cfg = toy_config(d_m, window=length, pseaac_lambda=min(3, length - 1))
    params = init_params(cfg)
    dims = stream_dims(cfg)
    data = Batch(*[Tensor(rng.normal(size=(batch, length, dims[name]))) for name in STREAMS])
    y = np.arange(batch) % 2
    sched = LossSchedule(cfg.lambda0, cfg.epochs)

    def pipeline():
        out = model_forward(data, params, cfg, training=True)
        l_c = focal_loss(out.logits, y, cfg.focal_gamma, cfg.focal_alpha)
        return total_loss(l_c, hierarchical_loss(out.stages, y, params.temperature, cfg.beta), 0, sched)

    cases.append(("pipeline", pipeline, params.parameters()))

    results = []
    for name, f, ps in cases:
        t0 = time.perf_counter()
        err = tn.finite_diff_check(f, ps, h=h, n_samples=n_samples, seed=seed)
        results.append(GradResult(name, err, time.perf_counter() - t0))
    return results
