"""Sample records and the TSV / FASTA readers."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator

from ..errors import InputError
from .encoders import AA_INDEX, PAD


@dataclass(frozen=True)
class SampleRecord:
    id: str
    window: str
    label: int
    center_residue: str = ""
    origin: tuple[str, int] | None = None

    def __post_init__(self):
        if len(self.window) % 2 == 0:
            raise InputError(f"{self.id}: window length {len(self.window)} must be odd")
        center = self.window[len(self.window) // 2]
        if center == PAD:
            raise InputError(f"{self.id}: window center is a pad symbol")
        if not self.center_residue:
            object.__setattr__(self, "center_residue", center)
        elif center != self.center_residue:
            raise InputError(f"{self.id}: center residue {center!r} != expected {self.center_residue!r}")
        if self.label not in (0, 1):
            raise InputError(f"{self.id}: label must be 0 or 1, got {self.label!r}")
        for pos, ch in enumerate(self.window, start=1):
            if ch != PAD and ch not in AA_INDEX:
                raise InputError(f"{self.id}: invalid residue {ch!r} at window position {pos}")


def read_dataset_tsv(path: str | os.PathLike, window: int | None = None) -> list[SampleRecord]:
    """Read a ``id<TAB>window<TAB>label`` file; errors name the offending line."""
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n").split("\t")
        if header[:3] != ["id", "window", "label"]:
            raise InputError(f"{path}: line 1: expected header 'id\\twindow\\tlabel', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise InputError(f"{path}: line {lineno}: expected 3 tab-separated fields")
            rid, win, lab = parts[0], parts[1].strip().upper(), parts[2].strip()
            if lab not in ("0", "1"):
                raise InputError(f"{path}: line {lineno}: label must be 0 or 1, got {lab!r}")
            if window is not None and len(win) != window:
                raise InputError(f"{path}: line {lineno}: window length {len(win)} != {window}")
            if rid in seen:
                raise InputError(f"{path}: line {lineno}: duplicate id {rid!r}")
            seen.add(rid)
            try:
                records.append(SampleRecord(rid, win, int(lab)))
            except InputError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from None
    return records


def write_dataset_tsv(path: str | os.PathLike, records: list[SampleRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\twindow\tlabel\n")
        for r in records:
            fh.write(f"{r.id}\t{r.window}\t{r.label}\n")


def iter_fasta(path: str | os.PathLike) -> Iterator[tuple[str, str, int]]:
    """Yield ``(id, sequence, header_line)``; wrapped sequence lines are joined."""
    rid, chunks, start = None, [], 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if rid is not None:
                    yield rid, "".join(chunks), start
                rid = line[1:].split()[0] if line[1:].split() else f"record{lineno}"
                chunks, start = [], lineno
            elif rid is None:
                raise InputError(f"{path}: line {lineno}: sequence data before first '>' header")
            else:
                chunks.append(line.upper())
    if rid is not None:
        yield rid, "".join(chunks), start


def read_fasta(path: str | os.PathLike) -> list[tuple[str, str]]:
    return [(rid, seq) for rid, seq, _ in iter_fasta(path)]


def window_at(sequence: str, center: int, length: int) -> str:
    """Centered window around 0-based ``center``, padded with ``X`` past the termini."""
    half = length // 2
    return "".join(
        sequence[i] if 0 <= i < len(sequence) else PAD for i in range(center - half, center + half + 1)
    )
