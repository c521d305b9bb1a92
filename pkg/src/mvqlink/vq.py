"""Product vector quantization: sub-vector splitting, nearest-codeword search,
index/bit mapping and multi-codebook banks."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Codebook",
    "BitFlipProfile",
    "CodebookBank",
    "split",
    "quantize",
    "index_to_bits",
    "bits_to_index",
    "reconstruct",
    "save_bank",
    "load_bank",
]

BANK_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Codebook:
    """An ordered set of 2**bits_per_index codewords of dimension D."""

    codewords: np.ndarray  # (2**B, D)

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=float)
        if cw.ndim != 2:
            raise ValueError("codewords must be a 2-D array")
        k = cw.shape[0]
        if k < 2 or (k & (k - 1)) != 0:
            raise ValueError(f"number of codewords must be a power of two, got {k}")
        if not np.all(np.isfinite(cw)):
            raise ValueError("codewords contain non-finite entries")
        object.__setattr__(self, "codewords", cw)

    @property
    def bits_per_index(self) -> int:
        return int(self.codewords.shape[0]).bit_length() - 1

    @property
    def dim(self) -> int:
        return self.codewords.shape[1]


@dataclass(frozen=True, eq=False)
class BitFlipProfile:
    """Per-position, per-bit flip probabilities attached to one codebook."""

    mu: np.ndarray  # (N, B)
    mu_min: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 2:
            raise ValueError("mu must be a 2-D (N, B) array")
        if not (0.0 < self.mu_min < 0.5):
            raise ValueError(f"mu_min must lie in (0, 0.5), got {self.mu_min}")
        if np.any(mu < self.mu_min - 1e-15) or np.any(mu > 0.5 + 1e-15):
            raise ValueError("flip probabilities must lie in [mu_min, 0.5]")
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True, eq=False)
class CodebookBank:
    """V product-VQ codebooks plus their bit-flip profiles.

    Codebook indices are 1-based throughout (v=1 is the lowest-mu codebook),
    matching the ordering constraints on ``mu_min_list``.
    """

    codebooks: tuple[Codebook, ...]
    profiles: tuple[BitFlipProfile, ...]
    mu_min_list: tuple[float, ...]
    lambda_list: tuple[float, ...]  # provenance metadata only

    def __post_init__(self):
        object.__setattr__(self, "codebooks", tuple(self.codebooks))
        object.__setattr__(self, "profiles", tuple(self.profiles))
        object.__setattr__(self, "mu_min_list", tuple(float(x) for x in self.mu_min_list))
        object.__setattr__(self, "lambda_list", tuple(float(x) for x in self.lambda_list))
        v = len(self.codebooks)
        if v < 1:
            raise ValueError("bank needs at least one codebook")
        if not (len(self.profiles) == len(self.mu_min_list) == len(self.lambda_list) == v):
            raise ValueError("codebooks, profiles, mu_min_list and lambda_list must have equal length")
        d, b = self.codebooks[0].dim, self.codebooks[0].bits_per_index
        for cb in self.codebooks:
            if cb.dim != d or cb.bits_per_index != b:
                raise ValueError("all codebooks must share (D, B)")
        n = self.profiles[0].mu.shape[0]
        for pr in self.profiles:
            if pr.mu.shape != (n, b):
                raise ValueError("all profiles must share shape (N, B)")
        if any(b2 <= a2 for a2, b2 in zip(self.mu_min_list, self.mu_min_list[1:])):
            raise ValueError("mu_min_list must be strictly increasing")
        if any(b2 <= a2 for a2, b2 in zip(self.lambda_list, self.lambda_list[1:])):
            raise ValueError("lambda_list must be strictly increasing")

    @property
    def V(self) -> int:
        return len(self.codebooks)

    @property
    def D(self) -> int:
        return self.codebooks[0].dim

    @property
    def B(self) -> int:
        return self.codebooks[0].bits_per_index

    @property
    def N(self) -> int:
        return self.profiles[0].mu.shape[0]

    def mu(self, v: int) -> np.ndarray:
        """(N, B) flip probabilities of the 1-based codebook index v."""
        if not 1 <= v <= self.V:
            raise ValueError(f"codebook index {v} out of range 1..{self.V}")
        return self.profiles[v - 1].mu


def split(values, subvector_dim: int) -> np.ndarray:
    """Split a feature vector into an (N, D) array of sub-vectors."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError("feature vector must be 1-D")
    if subvector_dim < 1:
        raise ValueError("subvector_dim must be positive")
    if values.size % subvector_dim != 0:
        raise ValueError(
            f"feature length {values.size} is not divisible by sub-vector dimension {subvector_dim}"
        )
    return values.reshape(-1, subvector_dim)


def quantize(sub, codebook: Codebook) -> tuple[int, np.ndarray]:
    """Nearest codeword by squared Euclidean distance; ties go to the smallest index."""
    sub = np.asarray(sub, dtype=float)
    if sub.shape != (codebook.dim,):
        raise ValueError(f"sub-vector length {sub.shape} does not match codebook dimension {codebook.dim}")
    d2 = np.sum((codebook.codewords - sub) ** 2, axis=1)
    k = int(np.argmin(d2))  # argmin returns the first minimum
    return k, codebook.codewords[k]


def index_to_bits(k: int, n_bits: int) -> np.ndarray:
    """Fixed-width big-endian binary encoding of an index."""
    k = int(k)
    if n_bits < 1:
        raise ValueError("n_bits must be positive")
    if not 0 <= k < (1 << n_bits):
        raise ValueError(f"index {k} out of range for {n_bits} bits")
    shifts = np.arange(n_bits - 1, -1, -1)
    return ((k >> shifts) & 1).astype(np.uint8)


def bits_to_index(bits) -> int:
    """Inverse of :func:`index_to_bits`."""
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size < 1:
        raise ValueError("bits must be a non-empty 1-D array")
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must contain only 0s and 1s")
    weights = 1 << np.arange(bits.size - 1, -1, -1)
    return int(np.dot(bits.astype(np.int64), weights))


def reconstruct(bits_per_sub, assignment, bank: CodebookBank) -> np.ndarray:
    """Concatenate the codewords addressed by each bit string from each assigned codebook."""
    bits_per_sub = np.asarray(bits_per_sub)
    assignment = np.asarray(assignment, dtype=int)
    if bits_per_sub.shape != (bank.N, bank.B):
        raise ValueError(
            f"expected {bank.N} bit strings of length {bank.B}, got shape {bits_per_sub.shape}"
        )
    if assignment.shape != (bank.N,):
        raise ValueError(f"assignment must have length {bank.N}")
    if np.any(assignment < 1) or np.any(assignment > bank.V):
        raise ValueError(f"codebook indices must lie in 1..{bank.V}")
    out = np.empty((bank.N, bank.D))
    for i in range(bank.N):
        k = bits_to_index(bits_per_sub[i])
        out[i] = bank.codebooks[assignment[i] - 1].codewords[k]
    return out.reshape(-1)


def bank_to_dict(bank: CodebookBank) -> dict:
    return {
        "version": BANK_FORMAT_VERSION,
        "D": bank.D,
        "B": bank.B,
        "N": bank.N,
        "V": bank.V,
        "mu_min": list(bank.mu_min_list),
        "lambda": list(bank.lambda_list),
        "codebooks": [cb.codewords.tolist() for cb in bank.codebooks],
        "profiles": [pr.mu.tolist() for pr in bank.profiles],
    }


def bank_from_dict(doc: dict) -> CodebookBank:
    try:
        version = doc["version"]
        d, b, n, v = (int(doc[key]) for key in ("D", "B", "N", "V"))
        mu_min = [float(x) for x in doc["mu_min"]]
        lam = [float(x) for x in doc["lambda"]]
        raw_codebooks = doc["codebooks"]
        raw_profiles = doc["profiles"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed codebook bank document: {exc}") from exc
    if version != BANK_FORMAT_VERSION:
        raise ValueError(f"unsupported bank format version {version}")
    if len(raw_codebooks) != v or len(raw_profiles) != v or len(mu_min) != v or len(lam) != v:
        raise ValueError(f"bank document inconsistent with V={v}")
    codebooks = []
    for cw in raw_codebooks:
        cw = np.asarray(cw, dtype=float)
        if cw.shape != (1 << b, d):
            raise ValueError(f"codebook shape {cw.shape} does not match (2^{b}, {d})")
        codebooks.append(Codebook(cw))
    profiles = []
    for mu, lo in zip(raw_profiles, mu_min):
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (n, b):
            raise ValueError(f"profile shape {mu.shape} does not match ({n}, {b})")
        profiles.append(BitFlipProfile(mu, lo))
    return CodebookBank(tuple(codebooks), tuple(profiles), tuple(mu_min), tuple(lam))


def save_bank(path, bank: CodebookBank) -> None:
    with open(path, "w") as fh:
        json.dump(bank_to_dict(bank), fh)


def load_bank(path) -> CodebookBank:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"codebook bank file is not valid JSON: {exc}") from exc
    return bank_from_dict(doc)
