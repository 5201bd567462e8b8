"""Per-residue scanning of whole proteins with centered windows."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import InputError
from .features.encoders import AA_INDEX
from .features.records import SampleRecord, window_at
from .model import ModelParams
from .train import predict


@dataclass
class ScanResult:
    protein_id: str
    sequence: str
    probabilities: np.ndarray  # one value per residue; exactly 0 off-target
    threshold: float = 0.5

    @property
    def calls(self) -> np.ndarray:
        return self.probabilities >= self.threshold

    def to_tsv(self) -> str:
        lines = ["position\tresidue\tprobability\tcall"]
        for i, (res, prob, call) in enumerate(zip(self.sequence, self.probabilities, self.calls), start=1):
            lines.append(f"{i}\t{res}\t{prob:.6f}\t{int(call)}")
        return "\n".join(lines) + "\n"


def scan_windows(protein_id: str, sequence: str, window: int, targets: str) -> list[SampleRecord]:
    """Centered windows for every target residue, in sequence order."""
    if not sequence:
        raise InputError(f"{protein_id}: empty sequence")
    for pos, ch in enumerate(sequence, start=1):
        if ch not in AA_INDEX:
            raise InputError(f"{protein_id}: invalid residue {ch!r} at position {pos}")
    return [
        SampleRecord(f"{protein_id}:{i + 1}", window_at(sequence, i, window), 0, origin=(protein_id, i + 1))
        for i, ch in enumerate(sequence)
        if ch in targets
    ]


def sliding_window_scan(protein_id: str, sequence: str, params: ModelParams, cfg: ModelConfig,
                        targets: str, featurizer) -> ScanResult:
    """Score each target residue; ``featurizer.bundle(record)`` builds its features."""
    sequence = sequence.upper()
    if not targets or any(t not in AA_INDEX for t in targets):
        raise InputError(f"target residues must be canonical amino acids, got {targets!r}")
    records = scan_windows(protein_id, sequence, cfg.window, targets)
    probs = np.zeros(len(sequence))
    if records:
        scores = predict(params, cfg, [featurizer.bundle(r) for r in records])
        probs[[r.origin[1] - 1 for r in records]] = scores
    return ScanResult(protein_id, sequence, probs, cfg.threshold)


def write_scan(path: str | os.PathLike, result: ScanResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(result.to_tsv())
