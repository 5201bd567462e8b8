"""Assembly of the six per-window feature matrices."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError, InputError
from ..tensor import Tensor
from .embfile import EmbeddingFile, load_embedding
from .encoders import AA_INDEX, PAD, encode_aaindex, encode_blosum62, encode_pseaac
from .records import SampleRecord

STREAMS = ("master_a", "master_b", "ember", "pseaac", "blosum", "aaindex")


@dataclass
class FeatureBundle:
    """Raw (pre-alignment) features of one window, each ``[L, d]``."""

    master_a: np.ndarray
    master_b: np.ndarray
    ember: np.ndarray
    pseaac: np.ndarray
    blosum: np.ndarray
    aaindex: np.ndarray

    def streams(self) -> list[np.ndarray]:
        return [getattr(self, s) for s in STREAMS]

    def check(self, cfg) -> None:
        dims = stream_dims(cfg)
        for name, arr in zip(STREAMS, self.streams()):
            if arr.shape != (cfg.window, dims[name]):
                raise ConfigError(f"{name} has shape {arr.shape}, expected {(cfg.window, dims[name])}")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} contains non-finite values")


def stream_dims(cfg) -> dict[str, int]:
    return {
        "master_a": cfg.dim_prott5,
        "master_b": cfg.dim_esm2,
        "ember": cfg.dim_ember,
        "pseaac": cfg.dim_pseaac,
        "blosum": cfg.dim_blosum,
        "aaindex": cfg.dim_aaindex,
    }


@dataclass
class Batch:
    """Stacked ``[B, L, d]`` tensors for one minibatch."""

    master_a: Tensor
    master_b: Tensor
    ember: Tensor
    pseaac: Tensor
    blosum: Tensor
    aaindex: Tensor

    @property
    def size(self) -> int:
        return self.master_a.shape[0]


def stack_bundles(bundles: Sequence[FeatureBundle], dtype=np.float64) -> Batch:
    if not bundles:
        raise InputError("cannot stack an empty batch")
    return Batch(*[
        Tensor(np.stack([getattr(b, s) for b in bundles]).astype(dtype, copy=False)) for s in STREAMS
    ])


def local_features(window: str, cfg) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """PseAAC, BLOSUM62 and AAindex matrices computed from the sequence alone."""
    return (
        encode_pseaac(window, cfg.pseaac_lambda, cfg.pseaac_weight),
        encode_blosum62(window),
        encode_aaindex(window, cfg.aaindex_ids),
    )


class ResidueEmbedder:
    """Deterministic stand-in for pretrained embeddings.

    Each residue maps to a fixed Gaussian vector per stream (pad rows are
    zero), so a window's features depend only on its sequence.
    """

    def __init__(self, cfg, seed: int = 0):
        self.cfg = cfg
        self.tables = {}
        for name in ("master_a", "master_b", "ember"):
            digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            self.tables[name] = rng.normal(size=(20, stream_dims(cfg)[name]))

    def embed(self, window: str, name: str) -> np.ndarray:
        table = self.tables[name]
        out = np.zeros((len(window), table.shape[1]))
        for i, ch in enumerate(window):
            if ch != PAD:
                out[i] = table[AA_INDEX[ch]]
        return out

    def bundle(self, record: SampleRecord) -> FeatureBundle:
        w = record.window
        return FeatureBundle(self.embed(w, "master_a"), self.embed(w, "master_b"), self.embed(w, "ember"),
                             *local_features(w, self.cfg))


class FileFeatureSource:
    """Master/EMBER2 features from container files keyed by record id.

    In ``protein`` mode a record's features are sliced from per-protein
    matrices using ``record.origin`` (protein id, 1-based position), with
    zero rows past the termini.
    """

    def __init__(self, cfg, prott5: str, esm2: str, ember2: str | None = None,
                 ember_missing: str = "error", protein_mode: bool = False):
        if ember_missing not in ("error", "zeros"):
            raise ConfigError(f"ember fallback must be 'error' or 'zeros', got {ember_missing!r}")
        self.cfg = cfg
        self.files = {"master_a": EmbeddingFile(prott5), "master_b": EmbeddingFile(esm2)}
        if ember2 is not None:
            self.files["ember"] = EmbeddingFile(ember2)
        elif ember_missing == "error":
            raise InputError("no EMBER2 file given and fallback policy is 'error'")
        self.ember_missing = ember_missing
        self.protein_mode = protein_mode

    def _fetch(self, name: str, record: SampleRecord) -> np.ndarray:
        cols = stream_dims(self.cfg)[name]
        L = self.cfg.window
        policy = "error" if name != "ember" else self.ember_missing
        if name not in self.files:
            return np.zeros((L, cols))
        if not self.protein_mode:
            mat = load_embedding(self.files[name], record.id, cols, missing=policy, rows=L)
            if mat.shape[0] != L:
                raise InputError(f"record {record.id!r} has {mat.shape[0]} rows in {name}, expected {L}")
            return mat
        if record.origin is None:
            raise InputError(f"record {record.id!r} has no protein origin for per-protein lookup")
        pid, pos = record.origin
        full = load_embedding(self.files[name], pid, cols, missing=policy, rows=pos + L)
        out = np.zeros((L, cols))
        half = L // 2
        for i in range(L):
            j = pos - 1 - half + i
            if 0 <= j < full.shape[0]:
                out[i] = full[j]
        return out

    def bundle(self, record: SampleRecord) -> FeatureBundle:
        return FeatureBundle(self._fetch("master_a", record), self._fetch("master_b", record),
                             self._fetch("ember", record), *local_features(record.window, self.cfg))
