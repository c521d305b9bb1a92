"""Expected end-to-end distortion per sub-vector under a noisy index channel,
its analytic mu-gradient, and the precomputed V x N distortion table."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import transition_log_probs
from .vq import Codebook, CodebookBank, quantize

__all__ = [
    "DistortionTable",
    "expected_distortion",
    "distortion_grad_mu",
    "build_table",
    "save_table",
    "load_table",
    "transition_matrix",
]


@dataclass(frozen=True)
class DistortionTable:
    """Dataset-averaged expected distortions, one entry per (codebook, position)."""

    values: np.ndarray  # (V, N)
    dataset_size: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("table values must be a 2-D (V, N) array")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("table entries must be finite and nonnegative")
        if self.dataset_size < 1:
            raise ValueError("dataset_size must be positive")
        object.__setattr__(self, "values", values)

    def entry(self, v: int, i: int) -> float:
        """Expected distortion of sub-vector position i under 1-based codebook v."""
        return float(self.values[v - 1, i])


def expected_distortion(sub, codebook: Codebook, mu_row) -> float:
    """Exact expected squared error between a sub-vector and its reconstruction
    after nearest-codeword quantization and the parallel-BSC index channel."""
    sub = np.asarray(sub, dtype=float)
    k_star, _ = quantize(sub, codebook)
    logp = transition_log_probs(k_star, mu_row, codebook.bits_per_index)
    probs = np.exp(logp)
    d2 = np.sum((codebook.codewords - sub) ** 2, axis=1)
    return float(probs @ d2)


def distortion_grad_mu(sub, codebook: Codebook, mu_row) -> np.ndarray:
    """Analytic gradient of expected_distortion with respect to each flip probability."""
    sub = np.asarray(sub, dtype=float)
    mu = np.asarray(mu_row, dtype=float)
    if np.any(mu <= 0) or np.any(mu >= 1):
        raise ValueError("gradient requires flip probabilities strictly inside (0, 1)")
    b = codebook.bits_per_index
    k_star, _ = quantize(sub, codebook)
    logp = transition_log_probs(k_star, mu, b)
    probs = np.exp(logp)
    d2 = np.sum((codebook.codewords - sub) ** 2, axis=1)
    bits = ((np.arange(1 << b)[:, None] >> np.arange(b - 1, -1, -1)[None, :]) & 1).astype(bool)
    flipped = bits != bits[k_star]  # (2**B, B)
    factor = np.where(flipped, 1.0 / mu, -1.0 / (1.0 - mu))
    return (probs * d2) @ factor


def transition_matrix(mu_row, n_bits: int) -> np.ndarray:
    """Full (2**B, 2**B) transition matrix of B parallel BSCs, as the Kronecker
    product of the per-bit 2x2 channels (big-endian bit order)."""
    mu = np.asarray(mu_row, dtype=float)
    if mu.shape != (n_bits,):
        raise ValueError("mu row length does not match bit count")
    out = np.ones((1, 1))
    for j in range(n_bits):
        bit = np.array([[1.0 - mu[j], mu[j]], [mu[j], 1.0 - mu[j]]])
        out = np.kron(out, bit)
    return out


def build_table(dataset, bank: CodebookBank) -> DistortionTable:
    """Average expected_distortion over the dataset for every (codebook, position) cell."""
    data = np.asarray(dataset, dtype=float)
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[0] == 0:
        raise ValueError("dataset must not be empty")
    if data.shape[1] != bank.N * bank.D:
        raise ValueError(
            f"feature length {data.shape[1]} does not match bank dimensions N*D={bank.N * bank.D}"
        )
    n_samples = data.shape[0]
    subs = data.reshape(n_samples, bank.N, bank.D)
    values = np.empty((bank.V, bank.N))
    for vi, (cb, profile) in enumerate(zip(bank.codebooks, bank.profiles)):
        cw = cb.codewords  # (K, D)
        cw_sq = np.sum(cw**2, axis=1)
        for i in range(bank.N):
            z = subs[:, i, :]  # (n, D)
            d2 = cw_sq[None, :] - 2.0 * z @ cw.T + np.sum(z**2, axis=1)[:, None]
            np.maximum(d2, 0.0, out=d2)
            k_star = np.argmin(d2, axis=1)
            trans = transition_matrix(profile.mu[i], bank.B)
            values[vi, i] = float(np.mean(np.sum(trans[k_star] * d2, axis=1)))
    return DistortionTable(values, n_samples)


def save_table(path, table: DistortionTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["v", "i", "value"])
        n_cb, n_pos = table.values.shape
        for v in range(n_cb):
            for i in range(n_pos):
                writer.writerow([v + 1, i, format(table.values[v, i], ".17g")])


def load_table(path, dataset_size: int = 1) -> DistortionTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["v", "i", "value"]:
            raise ValueError(f"unexpected distortion table header {header!r}")
        cells: dict[tuple[int, int], float] = {}
        for row in reader:
            if not row:
                continue
            v, i, value = int(row[0]), int(row[1]), float(row[2])
            cells[(v, i)] = value
    if not cells:
        raise ValueError("distortion table file contains no cells")
    n_cb = max(v for v, _ in cells)
    n_pos = max(i for _, i in cells) + 1
    if len(cells) != n_cb * n_pos:
        raise ValueError("distortion table file is missing cells")
    values = np.empty((n_cb, n_pos))
    for (v, i), value in cells.items():
        values[v - 1, i] = value
    return DistortionTable(values, dataset_size)
