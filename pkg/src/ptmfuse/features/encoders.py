"""Per-residue sequence encoders: BLOSUM62 rows, AAindex properties, PseAAC.

All encoders take a peptide window over the 20 canonical residues plus the
pad symbol ``X`` and return an ``[L, d]`` float64 matrix in which pad rows
are zero.
"""

from __future__ import annotations

import functools
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, InputError

AMINO_ACIDS = "ARNDCQEGHILKMFPSTWYV"
PAD = "X"
AA_INDEX = {aa: i for i, aa in enumerate(AMINO_ACIDS)}

# 31 indices spanning hydrophobicity, size, charge/polarity, flexibility and
# secondary-structure propensity; the bundled table holds a few more.
DEFAULT_AAINDEX = (
    "KYTJ820101", "EISD840101", "HOPT810101", "ENGD860101", "FAUJ830101", "WIMW960101",
    "JANJ780101", "ARGP820101", "PONP930101", "FASG760101", "BIGC670101", "GRAR740103",
    "CHOC760101", "ROSG850102", "CHAM810101", "CHAM820101", "GRAR740102", "ZIMJ680103",
    "KLEP840101", "ZIMJ680104", "FAUJ880111", "FAUJ880112", "RADA880108", "FASG760104",
    "FASG760105", "BHAR880101", "CHOP780201", "CHOP780202", "CHOP780203", "DAYM780201",
    "WERD780101",
)

# hydrophobicity, hydrophilicity, residue mass (mass is an affine shift of
# side-chain mass, which z-normalization removes)
PSEAAC_PROPERTIES = ("EISD840101", "HOPT810101", "FASG760101")


def _data_text(name: str) -> str:
    return resources.files("ptmfuse.features").joinpath("data", name).read_text()


@functools.lru_cache(maxsize=None)
def blosum62_table() -> np.ndarray:
    """The 20x20 BLOSUM62 matrix in ``AMINO_ACIDS`` order."""
    rows = [ln.split() for ln in _data_text("blosum62.txt").splitlines() if ln and not ln.startswith("#")]
    header = "".join(rows[0])
    if header != AMINO_ACIDS:
        raise RuntimeError("bundled BLOSUM62 table has unexpected residue order")
    table = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    table.setflags(write=False)
    return table


@functools.lru_cache(maxsize=None)
def aaindex_raw() -> dict[str, np.ndarray]:
    """Raw published values of every bundled AAindex entry, keyed by accession."""
    out = {}
    lines = [ln for ln in _data_text("aaindex.tsv").splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split("\t")
    if "".join(header[2:]) != AMINO_ACIDS:
        raise RuntimeError("bundled AAindex table has unexpected residue order")
    for ln in lines[1:]:
        parts = ln.split("\t")
        arr = np.array([float(v) for v in parts[2:]])
        arr.setflags(write=False)
        out[parts[0]] = arr
    return out


def aaindex_descriptions() -> dict[str, str]:
    lines = [ln for ln in _data_text("aaindex.tsv").splitlines() if ln and not ln.startswith("#")]
    return {ln.split("\t")[0]: ln.split("\t")[1] for ln in lines[1:]}


def znorm(values: np.ndarray) -> np.ndarray:
    """Z-score over the 20 residues (population std); constant scales map to zeros."""
    values = np.asarray(values, dtype=np.float64)
    sd = values.std()
    if sd == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / sd


def validate_window(window: str) -> str:
    for pos, ch in enumerate(window, start=1):
        if ch != PAD and ch not in AA_INDEX:
            raise InputError(f"invalid residue {ch!r} at position {pos}")
    return window


def encode_blosum62(window: str) -> np.ndarray:
    validate_window(window)
    table = blosum62_table()
    out = np.zeros((len(window), 20))
    for i, ch in enumerate(window):
        if ch != PAD:
            out[i] = table[AA_INDEX[ch]]
    return out


def encode_aaindex(
    window: str,
    index_ids: Sequence[str] = DEFAULT_AAINDEX,
    table: Mapping[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Z-normalized AAindex values per residue, one column per index id."""
    validate_window(window)
    table = aaindex_raw() if table is None else table
    cols = []
    for idx in index_ids:
        if idx not in table:
            raise ConfigError(f"unknown AAindex id {idx!r}")
        cols.append(znorm(table[idx]))
    lookup = np.stack(cols, axis=1) if cols else np.zeros((20, 0))
    out = np.zeros((len(window), len(cols)))
    for i, ch in enumerate(window):
        if ch != PAD:
            out[i] = lookup[AA_INDEX[ch]]
    return out


def pseaac_vector(window: str, lambda_rank: int = 5, weight: float = 0.05) -> np.ndarray:
    """Classic (20 + lambda) pseudo amino-acid composition of the non-pad residues."""
    validate_window(window)
    if lambda_rank < 1:
        raise ConfigError(f"lambda_rank must be >= 1, got {lambda_rank}")
    if not 0.0 < weight <= 1.0:
        raise ConfigError(f"PseAAC weight must lie in (0, 1], got {weight}")
    seq = [AA_INDEX[c] for c in window if c != PAD]
    n = len(seq)
    if n == 0:
        return np.zeros(20 + lambda_rank)
    if lambda_rank >= n:
        raise ConfigError(f"lambda_rank {lambda_rank} must be below the effective window length {n}")

    props = np.stack([znorm(aaindex_raw()[p]) for p in PSEAAC_PROPERTIES])  # [3, 20]
    idx = np.array(seq)
    theta = np.empty(lambda_rank)
    for j in range(1, lambda_rank + 1):
        diff = props[:, idx[j:]] - props[:, idx[:-j]]
        theta[j - 1] = np.mean(np.mean(diff * diff, axis=0))

    freq = np.bincount(idx, minlength=20) / n
    denom = 1.0 + weight * theta.sum()
    return np.concatenate([freq / denom, weight * theta / denom])


def encode_pseaac(window: str, lambda_rank: int = 5, weight: float = 0.05) -> np.ndarray:
    """PseAAC descriptor tiled over every non-pad row of the window."""
    vec = pseaac_vector(window, lambda_rank, weight)
    out = np.tile(vec, (len(window), 1))
    out[[i for i, c in enumerate(window) if c == PAD]] = 0.0
    return out
