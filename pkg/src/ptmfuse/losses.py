"""Contrastive, classification and scheduled total losses."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import UsageError
from .nn import ParamSet
from .tensor import Tensor

_SELF_MASK = -1e9


@dataclass
class Temperature(ParamSet):
    """Learnable positive temperature ``floor + softplus(rho)``."""

    rho: Tensor
    floor: float = 1e-3

    @classmethod
    def init(cls, value: float = 0.07, floor: float = 1e-3, dtype=np.float64) -> "Temperature":
        if value <= floor:
            raise UsageError(f"initial temperature {value} must exceed its floor {floor}")
        rho = math.log(math.expm1(value - floor))
        return cls(Tensor(np.array([rho], dtype=dtype), requires_grad=True), floor)

    def value(self) -> Tensor:
        return tn.softplus(self.rho) + self.floor


def _as_gamma(gamma) -> Tensor:
    if isinstance(gamma, Temperature):
        return gamma.value()
    return tn.as_tensor(gamma)


def l2_normalize(x: Tensor, eps: float = 1e-24) -> Tensor:
    return x / tn.sqrt(tn.sum(x * x, axis=-1, keepdims=True) + eps)


def _unit_rows(z: Tensor, what: str) -> Tensor:
    if z.ndim != 2:
        raise UsageError(f"{what}: expected [B, D] vectors, got {z.shape}")
    norms = np.linalg.norm(z.data, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        warnings.warn(f"{what}: inputs are not unit-norm; normalizing", stacklevel=3)
        z = l2_normalize(z)
    return z


def intra_layer_loss(z: Tensor, labels, gamma) -> Tensor:
    """Supervised contrastive loss within one stage.

    The anchor is excluded from its own denominator; anchors without a
    same-label partner contribute nothing, and the result is the mean over
    the anchors that do.
    """
    labels = np.asarray(labels)
    b = z.shape[0]
    if b < 2:
        raise UsageError(f"intra-layer loss needs at least 2 samples, got {b}")
    if labels.shape != (b,):
        raise UsageError(f"labels shape {labels.shape} does not match batch {b}")
    z = _unit_rows(z, "intra_layer_loss")
    logits = (z @ tn.transpose(z)) / _as_gamma(gamma)
    eye = np.eye(b, dtype=bool)
    logits = logits + Tensor(np.where(eye, _SELF_MASK, 0.0), dtype=z.dtype)
    logp = tn.log_softmax(logits)

    pos = (labels[:, None] == labels[None, :]) & ~eye
    n_pos = pos.sum(axis=1)
    anchors = n_pos > 0
    if not anchors.any():
        return Tensor(np.zeros((), dtype=z.dtype))
    weight = np.where(anchors[:, None], pos / np.maximum(n_pos, 1)[:, None], 0.0) / anchors.sum()
    return -tn.sum(logp * Tensor(weight, dtype=z.dtype))


def cross_layer_loss(zk: Tensor, zk1: Tensor, gamma) -> Tensor:
    """InfoNCE between adjacent stages; the positive is the same sample."""
    if zk.shape != zk1.shape:
        raise UsageError(f"cross-layer stages differ in shape: {zk.shape} vs {zk1.shape}")
    zk = _unit_rows(zk, "cross_layer_loss")
    zk1 = _unit_rows(zk1, "cross_layer_loss")
    b = zk.shape[0]
    logp = tn.log_softmax((zk @ tn.transpose(zk1)) / _as_gamma(gamma))
    return -tn.sum(logp * Tensor(np.eye(b) / b, dtype=zk.dtype))


def stage_vector(f: Tensor) -> Tensor:
    """Mean over length then L2-normalize: ``[B, L, C] -> [B, C]``."""
    pooled = tn.mean(f, axis=1)
    return l2_normalize(pooled)


@dataclass
class HierarchicalParts:
    intra: list[Tensor]
    cross: list[Tensor]
    total: Tensor


def hierarchical_loss(stages, labels, gamma, beta: float = 0.7, parts: bool = False):
    """``(1/3) sum_k intra_k + (beta/2) sum_k cross_{k,k+1}`` over three stages."""
    if len(stages) != 3:
        raise UsageError(f"hierarchical loss needs exactly 3 stages, got {len(stages)}")
    g = _as_gamma(gamma)
    zs = [stage_vector(f) for f in stages]
    intra = [intra_layer_loss(z, labels, g) for z in zs]
    cross = [cross_layer_loss(zs[k], zs[k + 1], g) for k in range(2)]
    total = (intra[0] + intra[1] + intra[2]) * (1.0 / 3.0) + (cross[0] + cross[1]) * (beta / 2.0)
    return HierarchicalParts(intra, cross, total) if parts else total


def _flat_logits(logits: Tensor) -> Tensor:
    return tn.reshape(logits, (logits.data.size,))


def focal_loss(logits: Tensor, labels, gamma_f: float = 2.0, alpha_f: float = 0.25) -> Tensor:
    """Batch mean of ``-alpha (1 - p_t)^gamma log p_t`` on sigmoid probabilities."""
    y = Tensor(np.asarray(labels, dtype=float).reshape(-1), dtype=logits.dtype)
    p = tn.sigmoid(_flat_logits(logits))
    p_t = tn.clamp(y * p + (1.0 - y) * (1.0 - p), 1e-7, 1.0 - 1e-7)
    terms = tn.power(1.0 - p_t, gamma_f) * tn.log(p_t) * (-alpha_f)
    return tn.mean(terms)


def weighted_ce(logits: Tensor, labels, pos_weight: float = 1.0) -> Tensor:
    """Binary cross-entropy with positive-class weight, averaged over the batch."""
    if pos_weight <= 0:
        raise UsageError(f"pos_weight must be positive, got {pos_weight}")
    y = Tensor(np.asarray(labels, dtype=float).reshape(-1), dtype=logits.dtype)
    x = _flat_logits(logits)
    terms = y * tn.softplus(-x) * pos_weight + (1.0 - y) * tn.softplus(x)
    return tn.mean(terms)


def default_pos_weight(labels) -> float:
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UsageError("pos_weight default needs both classes present")
    return n_neg / n_pos


@dataclass(frozen=True)
class LossSchedule:
    lambda0: float = 0.5
    horizon: int = 50

    def weight(self, t: int) -> float:
        if t < 0:
            raise UsageError(f"epoch index must be >= 0, got {t}")
        return self.lambda0 * max(0.0, 1.0 - t / self.horizon)


def total_loss(l_c: Tensor, l_cont: Tensor, t: int, sched: LossSchedule) -> Tensor:
    lam = sched.weight(t)
    if lam == 0.0:
        return l_c
    return l_c + l_cont * lam
