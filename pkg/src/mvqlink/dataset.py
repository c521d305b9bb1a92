"""Feature-vector corpus I/O and synthesis.

File format: a 16-byte little-endian header (magic "MVQF", format version,
sub-vector count N, sub-vector dimension D, row count) followed by rows of
N*D float32 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SynthSpec",
    "write_dataset",
    "read_dataset",
    "synthesize",
    "ingest_dataset",
]

MAGIC = b"MVQF"
DATASET_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHHIxx")
assert _HEADER.size == 16


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic Gaussian or Gaussian-mixture feature corpus."""

    n_subvectors: int
    subvector_dim: int
    count: int
    kind: str = "gaussian"  # or "mixture"
    n_components: int = 4
    component_spread: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n_subvectors < 1 or self.subvector_dim < 1 or self.count < 1:
            raise ValueError("n_subvectors, subvector_dim and count must be positive")
        if self.kind not in ("gaussian", "mixture"):
            raise ValueError(f"unknown synthesis kind {self.kind!r}")
        if self.kind == "mixture" and self.n_components < 1:
            raise ValueError("n_components must be positive")


def synthesize(spec: SynthSpec) -> np.ndarray:
    """Deterministic (count, N*D) float32 feature matrix for the given spec."""
    rng = np.random.default_rng(spec.seed)
    n_features = spec.n_subvectors * spec.subvector_dim
    if spec.kind == "gaussian":
        data = rng.standard_normal((spec.count, n_features))
    else:
        centers = spec.component_spread * rng.standard_normal(
            (spec.n_components, n_features)
        )
        labels = rng.integers(spec.n_components, size=spec.count)
        data = centers[labels] + rng.standard_normal((spec.count, n_features))
    return data.astype(np.float32)


def write_dataset(path, data, n_subvectors: int, subvector_dim: int) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("dataset must be a 2-D (count, N*D) array")
    if data.shape[1] != n_subvectors * subvector_dim:
        raise ValueError(
            f"row length {data.shape[1]} does not match N*D = {n_subvectors * subvector_dim}"
        )
    header = _HEADER.pack(MAGIC, DATASET_FORMAT_VERSION, n_subvectors,
                          subvector_dim, data.shape[0])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_dataset(path) -> tuple[np.ndarray, int, int]:
    """Read a feature corpus file; returns (float32 matrix, N, D)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: file too short for a dataset header")
    magic, version, n_sub, dim, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != DATASET_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported dataset format version {version}")
    if n_sub < 1 or dim < 1:
        raise ValueError(f"{path}: invalid dimensions N={n_sub}, D={dim}")
    expected = count * n_sub * dim * 4
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise ValueError(
            f"{path}: truncated or oversized payload, expected {expected} bytes, got {len(body)}"
        )
    data = np.frombuffer(body, dtype="<f4").reshape(count, n_sub * dim).copy()
    return data, n_sub, dim


def ingest_dataset(source) -> tuple[np.ndarray, int, int]:
    """Load features from a file path or synthesize them from a SynthSpec."""
    if isinstance(source, SynthSpec):
        return synthesize(source), source.n_subvectors, source.subvector_dim
    return read_dataset(source)
