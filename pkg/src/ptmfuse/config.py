"""Architecture and training hyperparameters."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .features.encoders import DEFAULT_AAINDEX

EARLY_MODES = ("bgca+ldfn", "concat")
MID_MODES = ("bhgfn", "concat")
LATE_MODES = ("hdwf", "add")
ENCODERS = ("bilstm", "ssm")
UNIMPLEMENTED_ENCODERS = ("transformer", "resnet")
PAPER_AUX_DIMS = (256, 256, 512, 512)


@dataclass
class ModelConfig:
    # architecture
    variant: str = "full"
    d_m: int = 512
    d_s: int = 256
    window: int = 33
    groups: int = 4
    heads: int = 4
    kernels: tuple[int, ...] = (3, 5, 7)
    dilation: int = 2
    n_state: int = 16
    aux_dims: tuple[int, int, int, int] = PAPER_AUX_DIMS
    early: str = "bgca+ldfn"
    mid: str = "bhgfn"
    late: str = "hdwf"
    encoders: tuple[str, str] = ("bilstm", "ssm")
    # raw input widths
    dim_prott5: int = 1024
    dim_esm2: int = 1280
    dim_ember: int = 128
    pseaac_lambda: int = 5
    pseaac_weight: float = 0.05
    aaindex_ids: tuple[str, ...] = DEFAULT_AAINDEX
    # losses
    loss: str = "focal"
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    pos_weight: float | None = None
    contrastive: bool = True
    temperature: float = 0.07
    temperature_floor: float = 1e-3
    beta: float = 0.7
    lambda0: float = 0.5
    horizon: int | None = None
    # optimization
    seed: int = 0
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.0
    early_stopping: bool | None = None
    patience: int = 10
    dtype: str = "float64"
    threshold: float = 0.5

    def __post_init__(self):
        for name in ("kernels", "aux_dims", "encoders", "aaindex_ids"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    @property
    def dim_pseaac(self) -> int:
        return 20 + self.pseaac_lambda

    @property
    def dim_blosum(self) -> int:
        return 20

    @property
    def dim_aaindex(self) -> int:
        return len(self.aaindex_ids)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def use_early_stopping(self) -> bool:
        return self.variant == "mini" if self.early_stopping is None else self.early_stopping

    @property
    def loss_horizon(self) -> int:
        return self.epochs if self.horizon is None else self.horizon

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.variant in ("full", "mini"), f"variant must be full or mini, got {self.variant!r}")
        need(self.d_m > 0 and self.d_s > 0, "d_m and d_s must be positive")
        need(self.d_m % self.groups == 0, f"d_m={self.d_m} not divisible by groups={self.groups}")
        need(self.d_m % self.heads == 0, f"d_m={self.d_m} not divisible by heads={self.heads}")
        need(self.d_m % 2 == 0, "d_m must be even (two LSTM directions of d_m/2)")
        need(self.kernels == (3, 5, 7), f"multi-scale kernels must be (3, 5, 7), got {self.kernels}")
        need(self.window % 2 == 1 and self.window >= 3, f"window must be odd and >= 3, got {self.window}")
        need(len(self.aux_dims) == 4 and self.aux_dims[0] == self.aux_dims[1] and self.aux_dims[2] == self.aux_dims[3],
             f"aux_dims must pair up as (a, a, b, b), got {self.aux_dims}")
        need(self.early in EARLY_MODES, f"early must be one of {EARLY_MODES}")
        need(self.mid in MID_MODES, f"mid must be one of {MID_MODES}")
        need(self.late in LATE_MODES, f"late must be one of {LATE_MODES}")
        need(len(self.encoders) == 2, "exactly two encoder slots")
        for enc in self.encoders:
            if enc in UNIMPLEMENTED_ENCODERS:
                raise ConfigError(f"encoder slot {enc!r} is a comparison baseline and is not implemented")
            need(enc in ENCODERS, f"unknown encoder {enc!r}")
        need(1 <= self.pseaac_lambda < self.window, f"pseaac_lambda must lie in [1, window-1]")
        need(0.0 < self.pseaac_weight <= 1.0, "pseaac_weight must lie in (0, 1]")
        need(self.loss in ("focal", "wce"), f"loss must be focal or wce, got {self.loss!r}")
        need(self.focal_gamma >= 0.0, "focal_gamma must be >= 0")
        need(0.0 < self.focal_alpha <= 1.0, "focal_alpha must lie in (0, 1]")
        need(self.temperature >= self.temperature_floor > 0, "temperature must be >= its positive floor")
        need(self.epochs >= 1 and self.batch_size >= 1, "epochs and batch_size must be >= 1")
        need(self.lr > 0, "lr must be positive")
        need(self.dtype in ("float32", "float64"), f"dtype must be float32 or float64, got {self.dtype!r}")
        need(self.pos_weight is None or self.pos_weight > 0, "pos_weight must be positive")

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def full_config(**overrides) -> ModelConfig:
    return ModelConfig(**overrides)


def mini_config(**overrides) -> ModelConfig:
    """Lightweight variant: halved internal widths, bare cross-dense slave fusion."""
    base = dict(variant="mini", d_m=256, d_s=128)
    base.update(overrides)
    return ModelConfig(**base)


def toy_config(d_m: int = 16, **overrides) -> ModelConfig:
    """Desk-scale widths for gradient checks and fast learning tests."""
    base = dict(
        d_m=d_m,
        d_s=max(d_m // 2, 4),
        aux_dims=(d_m, d_m, 2 * d_m, 2 * d_m),
        dim_prott5=2 * d_m,
        dim_esm2=2 * d_m + 8,
        dim_ember=12,
        n_state=4,
        window=9,
        pseaac_lambda=3,
        batch_size=16,
    )
    base.update(overrides)
    return ModelConfig(**base)
