"""Class-conditional Gaussian stand-in data at any configured width."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .features.bundle import STREAMS, FeatureBundle, stream_dims
from .features.encoders import AMINO_ACIDS
from .features.records import SampleRecord


@dataclass
class Dataset:
    records: list[SampleRecord]
    bundles: list[FeatureBundle]

    def __post_init__(self):
        if len(self.records) != len(self.bundles):
            raise UsageError(f"{len(self.records)} records vs {len(self.bundles)} feature bundles")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def subset(self, idx) -> "Dataset":
        return Dataset([self.records[i] for i in idx], [self.bundles[i] for i in idx])


def _directions(cfg, rng: np.random.Generator) -> dict[str, np.ndarray]:
    dims = stream_dims(cfg)
    out = {}
    for name in STREAMS:
        u = rng.normal(size=dims[name])
        out[name] = u / np.linalg.norm(u)
    return out


def _draw(cfg, rng, directions, n_per_class, separation, center, prefix) -> Dataset:
    dims = stream_dims(cfg)
    labels = np.array([0] * n_per_class + [1] * n_per_class)
    labels = labels[rng.permutation(labels.size)]
    half = cfg.window // 2
    records, bundles = [], []
    for i, y in enumerate(labels):
        letters = rng.choice(list(AMINO_ACIDS), size=cfg.window)
        letters[half] = center
        records.append(SampleRecord(f"{prefix}_{i:05d}", "".join(letters), int(y)))
        sign = 1.0 if y == 1 else -1.0
        mats = [
            rng.normal(size=(cfg.window, dims[name])) + sign * 0.5 * separation * directions[name]
            for name in STREAMS
        ]
        bundles.append(FeatureBundle(*mats))
    return Dataset(records, bundles)


def _check(n_per_class: int, separation: float) -> None:
    if separation < 0:
        raise UsageError(f"separation must be >= 0, got {separation}")
    if n_per_class < 1:
        raise UsageError(f"n_per_class must be >= 1, got {n_per_class}")


def synth_dataset(cfg, seed: int, n_per_class: int, separation: float, center: str = "K") -> Dataset:
    """Draw ``n_per_class`` windows per label.

    Every stream gets its own random unit direction ``u`` over channels; rows
    of a class-1 window are centred at ``+separation/2 * u`` and class-0 rows
    at ``-separation/2 * u`` with unit-variance isotropic noise, so the class
    means differ by ``separation`` at every position.  Window strings are
    random but carry no label information.
    """
    _check(n_per_class, separation)
    rng = np.random.default_rng(seed)
    return _draw(cfg, rng, _directions(cfg, rng), n_per_class, separation, center, f"syn{seed}")


def synth_splits(cfg, seed: int, n_train: int, n_test: int, separation: float,
                 center: str = "K") -> tuple[Dataset, Dataset]:
    """Train/test splits (per-class sizes) sharing one set of class directions."""
    _check(min(n_train, n_test), separation)
    rng = np.random.default_rng(seed)
    directions = _directions(cfg, rng)
    train = _draw(cfg, rng, directions, n_train, separation, center, f"syn{seed}_train")
    test = _draw(cfg, rng, directions, n_test, separation, center, f"syn{seed}_test")
    return train, test
