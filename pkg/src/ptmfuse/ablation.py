"""Fusion-stage ablation grid and the full-vs-mini comparison."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .metrics import MetricsReport, compute_metrics
from .model import fusion_block_count, fusion_param_count, init_params, param_count
from .synth import Dataset
from .train import predict, train

ABLATIONS: tuple[tuple[str, dict], ...] = (
    ("Full Model", {}),
    ("None Early Interaction", {"early": "concat"}),
    ("None Middle Interaction", {"mid": "concat"}),
    ("None Late Interaction", {"late": "add"}),
    ("Only Early Interaction", {"mid": "concat", "late": "add"}),
    ("Only Middle Interaction", {"early": "concat", "late": "add"}),
    ("Only Late Interaction", {"early": "concat", "mid": "concat"}),
    ("Add or Conact", {"early": "concat", "mid": "concat", "late": "add"}),
)

TABLE_COLUMNS = ("config", "ACC", "SEN", "SPEC", "MCC", "AUC", "AP", "params", "ms/sample")


@dataclass
class AblationRow:
    config: str
    metrics: MetricsReport
    params: int
    fusion_params: int
    block_params: int
    ms_per_sample: float

    def cells(self) -> list[str]:
        m = self.metrics
        vals = [m.acc, m.sen, m.spec, m.mcc, m.auc, m.ap]
        return [self.config] + [f"{v:.4f}" for v in vals] + [str(self.params), f"{self.ms_per_sample:.3f}"]

    def to_dict(self) -> dict:
        return {
            "config": self.config, **{k.upper(): getattr(self.metrics, k) for k in ("acc", "sen", "spec", "mcc", "auc", "ap")},
            "params": self.params, "fusion_params": self.fusion_params, "block_params": self.block_params,
            "ms/sample": self.ms_per_sample,
        }


def ablation_configs(base: ModelConfig) -> list[tuple[str, ModelConfig]]:
    return [(name, base.replace(**{"early": "bgca+ldfn", "mid": "bhgfn", "late": "hdwf", **sw})) for name, sw in ABLATIONS]


def timed_predict(params, cfg: ModelConfig, data: Dataset, repeats: int = 1) -> tuple[np.ndarray, float]:
    """Scores plus best-of-``repeats`` wall time per sample in milliseconds."""
    best = np.inf
    scores = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        scores = predict(params, cfg, data.bundles)
        best = min(best, time.perf_counter() - t0)
    return scores, 1000.0 * best / max(len(data), 1)


def ablate(train_data: Dataset, test_data: Dataset, base: ModelConfig, log=None) -> list[AblationRow]:
    rows = []
    for name, cfg in ablation_configs(base):
        params, _ = train(train_data, cfg)
        scores, ms = timed_predict(params, cfg, test_data)
        rows.append(AblationRow(name, compute_metrics(scores, test_data.labels, cfg.threshold),
                                param_count(params), fusion_param_count(params), fusion_block_count(params), ms))
        if log:
            log(f"{name}: MCC {rows[-1].metrics.mcc:.4f}, {rows[-1].params} params")
    return rows


def ablation_structure(base: ModelConfig) -> list[tuple[str, int, int, int]]:
    """(name, total, fusion-slot, fusion-block) parameter counts without training."""
    out = []
    for name, cfg in ablation_configs(base):
        p = init_params(cfg)
        out.append((name, param_count(p), fusion_param_count(p), fusion_block_count(p)))
    return out


def ablation_tsv(rows: list[AblationRow]) -> str:
    lines = ["\t".join(TABLE_COLUMNS)] + ["\t".join(r.cells()) for r in rows]
    return "\n".join(lines) + "\n"


def ablation_json(rows: list[AblationRow]) -> str:
    return json.dumps([r.to_dict() for r in rows], indent=2)


@dataclass
class MiniComparison:
    full_params: int
    mini_params: int
    full_ms: float
    mini_ms: float
    full: MetricsReport
    mini: MetricsReport

    @property
    def param_ratio(self) -> float:
        return self.mini_params / self.full_params

    @property
    def latency_ratio(self) -> float:
        return self.mini_ms / self.full_ms

    @property
    def speedup(self) -> float:
        return self.full_ms / self.mini_ms - 1.0

    def deltas(self) -> dict[str, float]:
        """``mini - full`` for each metric."""
        return {k: getattr(self.mini, k) - getattr(self.full, k) for k in ("acc", "sen", "spec", "mcc", "auc", "ap")}


def mini_compare(full_cfg: ModelConfig, mini_cfg: ModelConfig, train_data: Dataset, test_data: Dataset,
                 repeats: int = 3) -> MiniComparison:
    results = []
    for cfg in (full_cfg, mini_cfg):
        params, _ = train(train_data, cfg)
        scores, ms = timed_predict(params, cfg, test_data, repeats)
        results.append((param_count(params), ms, compute_metrics(scores, test_data.labels, cfg.threshold)))
    (fp, fms, fm), (mp, mms, mm) = results
    return MiniComparison(fp, mp, fms, mms, fm, mm)
