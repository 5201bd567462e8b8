"""Training loop, batch prediction and checkpoint I/O."""

from __future__ import annotations

import copy
import hashlib
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .config import ModelConfig
from .errors import DivergenceError, FormatError, NumericError, UsageError
from .features.bundle import FeatureBundle, stack_bundles
from .features.embfile import EmbeddingFile, write_embedding_file
from .losses import LossSchedule, default_pos_weight, focal_loss, hierarchical_loss, total_loss, weighted_ce
from .metrics import MetricsReport, compute_metrics
from .model import ModelParams, init_params, model_forward
from .nn import Adam
from .synth import Dataset

log = logging.getLogger(__name__)

BUFFER_PREFIX = "buffer:"


@dataclass
class EpochRecord:
    epoch: int
    l_c: float
    l_cont: float
    lam: float
    val: MetricsReport | None
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.epochs)

    def losses(self) -> list[float]:
        return [e.l_c + e.lam * e.l_cont for e in self.epochs]

    def to_tsv(self) -> str:
        cols = ["epoch", "l_c", "l_cont", "lambda", "acc", "sen", "spec", "mcc", "auc", "ap", "seconds"]
        lines = ["\t".join(cols)]
        for e in self.epochs:
            m = e.val
            vals = [m.acc, m.sen, m.spec, m.mcc, m.auc, m.ap] if m else [float("nan")] * 6
            row = [str(e.epoch), f"{e.l_c:.10g}", f"{e.l_cont:.10g}", f"{e.lam:.10g}"]
            row += [f"{v:.6f}" for v in vals] + [f"{e.seconds:.3f}"]
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"

    def deterministic_view(self) -> list[tuple]:
        """Everything except wall time, for run-to-run comparison."""
        return [(e.epoch, e.l_c, e.l_cont, e.lam, e.val) for e in self.epochs]


def predict(params: ModelParams, cfg: ModelConfig, bundles: list[FeatureBundle],
            batch_size: int | None = None) -> np.ndarray:
    """Positive-class probabilities in input order (evaluation mode)."""
    batch_size = batch_size or cfg.batch_size
    out = []
    with tn.no_grad():
        for start in range(0, len(bundles), batch_size):
            batch = stack_bundles(bundles[start : start + batch_size], cfg.np_dtype)
            logits = model_forward(batch, params, cfg, training=False).logits.data
            out.append(1.0 / (1.0 + np.exp(-logits.astype(np.float64))))
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(params: ModelParams, cfg: ModelConfig, data: Dataset) -> MetricsReport:
    return compute_metrics(predict(params, cfg, data.bundles), data.labels, cfg.threshold)


def _classification_loss(cfg: ModelConfig, logits, labels, pos_weight: float):
    if cfg.loss == "focal":
        return focal_loss(logits, labels, cfg.focal_gamma, cfg.focal_alpha)
    return weighted_ce(logits, labels, pos_weight)


def train(train_data: Dataset, cfg: ModelConfig, val_data: Dataset | None = None,
          params: ModelParams | None = None) -> tuple[ModelParams, TrainHistory]:
    if len(train_data) == 0:
        raise UsageError("training split is empty")
    labels = train_data.labels
    if len(np.unique(labels)) < 2:
        raise UsageError("training split must contain both classes")
    params = params or init_params(cfg)
    pos_weight = cfg.pos_weight or default_pos_weight(labels)
    sched = LossSchedule(cfg.lambda0, cfg.loss_horizon)
    opt = Adam(params.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 1)
    history = TrainHistory()
    best_mcc, best_state, stale = -np.inf, None, 0

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lam = sched.weight(epoch)
        order = rng.permutation(len(train_data))
        sum_c = sum_cont = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = stack_bundles([train_data.bundles[i] for i in idx], cfg.np_dtype)
            y = labels[idx]
            try:
                out = model_forward(batch, params, cfg, training=True)
                l_c = _classification_loss(cfg, out.logits, y, pos_weight)
                l_cont = None
                if cfg.contrastive and len(idx) >= 2:
                    l_cont = hierarchical_loss(out.stages, y, params.temperature, cfg.beta)
                loss = l_c if l_cont is None else total_loss(l_c, l_cont, epoch, sched)
                if not np.isfinite(loss.item()):
                    raise NumericError("non-finite loss")
                opt.zero_grad()
                tn.backward(loss, opt.params)
                opt.step()
            except NumericError as exc:
                raise DivergenceError(epoch, f"training diverged at epoch {epoch}: {exc}") from None
            sum_c += l_c.item() * len(idx)
            sum_cont += (l_cont.item() if l_cont is not None else 0.0) * len(idx)
            if not all(np.all(np.isfinite(p.data)) for p in opt.params):
                raise DivergenceError(epoch)

        val = evaluate(params, cfg, val_data) if val_data is not None and len(val_data) else None
        rec = EpochRecord(epoch, sum_c / len(order), sum_cont / len(order), lam, val, time.perf_counter() - t0)
        history.epochs.append(rec)
        log.info("epoch %d  L_c %.4f  L_cont %.4f  lambda %.3f%s", epoch, rec.l_c, rec.l_cont, lam,
                 f"  val MCC {val.mcc:.4f} AP {val.ap:.4f}" if val else "")

        if cfg.use_early_stopping and val is not None:
            if val.mcc > best_mcc:
                best_mcc, best_state, stale = val.mcc, snapshot(params), 0
                history.best_epoch = epoch
            else:
                stale += 1
                if stale >= cfg.patience:
                    history.stopped_early = True
                    break

    if best_state is not None:
        restore(params, best_state)
    return params, history


def snapshot(params: ModelParams) -> dict[str, np.ndarray]:
    state = {p.path: p.tensor.data.copy() for p in params.named_parameters()}
    state.update({BUFFER_PREFIX + k: v.copy() for k, v in params.buffers().items()})
    return state


def restore(params: ModelParams, state: dict[str, np.ndarray]) -> None:
    for p in params.named_parameters():
        if p.path not in state:
            raise FormatError(f"checkpoint lacks parameter {p.path!r}")
        arr = np.asarray(state[p.path])
        if arr.size != p.tensor.data.size:
            raise FormatError(f"parameter {p.path!r}: checkpoint has {arr.size} values, model needs {p.tensor.data.size}")
        p.tensor.data = arr.reshape(p.tensor.shape).astype(p.tensor.dtype).copy()
    bufs = {k[len(BUFFER_PREFIX):]: v for k, v in state.items() if k.startswith(BUFFER_PREFIX)}
    if bufs:
        params.set_buffers({k: np.asarray(v).reshape(-1) for k, v in bufs.items()})


def param_checksum(params: ModelParams) -> str:
    h = hashlib.sha256()
    for path, arr in sorted(snapshot(params).items()):
        h.update(path.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def save_checkpoint(path: str | os.PathLike, params: ModelParams) -> str:
    """Write params as one-column records keyed by path; returns the file digest."""
    records = {k: v.reshape(-1, 1) for k, v in snapshot(params).items()}
    write_embedding_file(path, records, dtype="<f8")
    return file_digest(path)


def load_checkpoint(path: str | os.PathLike, cfg: ModelConfig) -> ModelParams:
    ef = EmbeddingFile(path)
    params = init_params(cfg)
    restore(params, {rid: mat.reshape(-1) for rid, mat in ef.items()})
    return params


def file_digest(path: str | os.PathLike) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def clone_params(params: ModelParams) -> ModelParams:
    return copy.deepcopy(params)
