"""Parallel-BSC transfer model, Gray-QAM BER approximation and its numerical
inverse, Gumbel-Softmax soft reconstruction, and a Gray-mapped square-QAM modem
over a fading channel."""

from __future__ import annotations

from dataclasses import dataclass
from math import exp

import numpy as np
from scipy.special import erfc

from .vq import Codebook, index_to_bits

__all__ = [
    "ChannelState",
    "GumbelConfig",
    "check_mod_order",
    "bsc_transition_prob",
    "bsc_sample",
    "gumbel_soft_reconstruct",
    "ber_approx",
    "ber_inverse",
    "qam_modulate",
    "qam_detect",
    "draw_channel",
]

# Floor applied to log transition probabilities that underflow to 0; close to
# log(smallest subnormal double) so the ranking of candidates is preserved.
LOG_PROB_FLOOR = -745.0


@dataclass(frozen=True)
class ChannelState:
    """Block-fading channel realization with noise power sigma2."""

    h: complex
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def gamma(self) -> float:
        """Channel-gain-to-noise-power ratio |h|^2 / sigma^2."""
        return abs(self.h) ** 2 / self.sigma2


@dataclass(frozen=True)
class GumbelConfig:
    """Temperature schedule for the Gumbel-Softmax relaxation."""

    tau: float = 0.5
    anneal_factor: float = exp(-0.003)
    anneal_period: int = 100

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 < self.anneal_factor <= 1:
            raise ValueError("anneal_factor must lie in (0, 1]")

    def tau_at(self, iteration: int) -> float:
        return self.tau * self.anneal_factor ** (iteration // self.anneal_period)


def _check_bits(bits) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError("bit string must be 1-D")
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("bit string entries must be 0 or 1")
    return bits.astype(np.uint8)


def _check_mu_row(mu_row, n_bits: int) -> np.ndarray:
    mu = np.asarray(mu_row, dtype=float)
    if mu.shape != (n_bits,):
        raise ValueError(f"mu row length {mu.shape} does not match bit count {n_bits}")
    if np.any(mu < 0) or np.any(mu > 0.5):
        raise ValueError("flip probabilities must lie in [0, 0.5]")
    return mu


def bsc_transition_prob(a, b, mu_row) -> float:
    """Probability that B parallel BSCs with per-bit flip probabilities mu turn a into b."""
    a = _check_bits(a)
    b = _check_bits(b)
    if a.shape != b.shape:
        raise ValueError("bit strings must have equal length")
    mu = _check_mu_row(mu_row, a.size)
    flipped = a != b
    return float(np.prod(np.where(flipped, mu, 1.0 - mu)))


def bsc_sample(a, mu_row, rng) -> np.ndarray:
    """Flip each bit of a independently with its flip probability."""
    a = _check_bits(a)
    mu = _check_mu_row(mu_row, a.size)
    rng = np.random.default_rng(rng)
    flips = rng.random(a.size) < mu
    return (a ^ flips).astype(np.uint8)


def _index_bits_table(n_bits: int) -> np.ndarray:
    # (2**B, B) matrix of big-endian index bits
    ks = np.arange(1 << n_bits)[:, None]
    shifts = np.arange(n_bits - 1, -1, -1)[None, :]
    return ((ks >> shifts) & 1).astype(np.uint8)


def transition_log_probs(index: int, mu_row, n_bits: int) -> np.ndarray:
    """Log transition probability from codeword `index` to every other index,
    floored at LOG_PROB_FLOOR where the probability underflows."""
    mu = _check_mu_row(mu_row, n_bits)
    bits = _index_bits_table(n_bits)
    flipped = bits != bits[index]
    with np.errstate(divide="ignore"):
        log_mu = np.log(mu)
        log_keep = np.log1p(-mu)
    logp = np.where(flipped, log_mu, log_keep).sum(axis=1)
    return np.maximum(logp, LOG_PROB_FLOOR)


def gumbel_soft_reconstruct(quantized_index: int, codebook: Codebook, mu_row, tau: float, rng):
    """Differentiable-relaxation surrogate of the noisy index channel.

    Returns the softmax weights over all codewords and the weighted codeword sum.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    b = codebook.bits_per_index
    if not 0 <= quantized_index < (1 << b):
        raise ValueError("quantized_index out of range")
    logp = transition_log_probs(quantized_index, mu_row, b)
    rng = np.random.default_rng(rng)
    gumbels = rng.gumbel(size=logp.size)
    scores = (logp + gumbels) / tau
    scores -= scores.max()
    weights = np.exp(scores)
    weights /= weights.sum()
    return weights, weights @ codebook.codewords


def check_mod_order(m: int, m_max: int | None = None) -> int:
    m = int(m)
    if m < 2 or m % 2 != 0:
        raise ValueError(f"modulation order must be an even integer >= 2, got {m}")
    if m_max is not None and m > m_max:
        raise ValueError(f"modulation order {m} exceeds maximum {m_max}")
    return m


def ber_approx(p, m: int, gamma: float):
    """Two-term erfc approximation of the Gray-mapped square 2^m-QAM bit error rate
    at symbol power p and gain-to-noise ratio gamma.

    Not clamped at 0.5: the p=0 value exceeds 0.5 for m >= 4, which keeps the
    function strictly decreasing so that its inverse is well defined.
    """
    m = check_mod_order(m)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("power must be nonnegative")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    sqrt_m = 2.0 ** (m / 2)  # sqrt(2^m)
    log2_sqrt_m = m / 2
    arg = np.sqrt(3.0 * p * gamma / (2.0 * (2.0**m - 1.0)))
    c1 = (sqrt_m - 1.0) / (sqrt_m * log2_sqrt_m)
    c2 = (sqrt_m - 2.0) / (sqrt_m * log2_sqrt_m)
    out = c1 * erfc(arg) + c2 * erfc(3.0 * arg)
    return out if out.ndim else float(out)


def ber_zero_power(m: int) -> float:
    """ber_approx value at p = 0, the largest attainable target."""
    return float(ber_approx(0.0, m, 1.0))


def ber_inverse(target, m: int, gamma: float, rel_tol: float = 1e-12):
    """Unique symbol power p with ber_approx(p; m, gamma) == target, by bracketed bisection.

    Accepts scalar or array targets.
    """
    m = check_mod_order(m)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    target = np.asarray(target, dtype=float)
    scalar = target.ndim == 0
    t = np.atleast_1d(target)
    eps0 = ber_zero_power(m)
    if np.any(t <= 0):
        raise ValueError("target BER must be positive")
    if np.any(t > eps0 * (1 + 1e-12)):
        raise ValueError(f"target BER exceeds the zero-power value {eps0} for m={m}")

    lo = np.zeros_like(t)
    hi = np.full_like(t, 1.0 / gamma)
    # grow the bracket until ber(hi) is below every target
    for _ in range(200):
        need = ber_approx(hi, m, gamma) > t
        if not np.any(need):
            break
        hi = np.where(need, hi * 2.0, hi)
    else:
        raise RuntimeError("failed to bracket the BER inverse")

    for _ in range(400):
        mid = 0.5 * (lo + hi)
        high_side = ber_approx(mid, m, gamma) > t
        lo = np.where(high_side, mid, lo)
        hi = np.where(high_side, hi, mid)
        if np.all(hi - lo <= rel_tol * hi):
            break
    out = 0.5 * (lo + hi)
    # exact-boundary targets (e.g. 0.5 for QPSK) invert to zero power
    out = np.where(t >= eps0, 0.0, out)
    return float(out[0]) if scalar else out


def _qam_levels(m: int) -> tuple[np.ndarray, float]:
    """Per-axis PAM amplitudes (natural order) and the unit-energy scale factor."""
    half = m // 2
    n_levels = 1 << half
    idx = np.arange(n_levels)
    amps = 2.0 * idx - (n_levels - 1)
    scale = np.sqrt(3.0 / (2.0 * (2.0**m - 1.0)))
    return amps * scale, scale


def _gray_encode(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


def _gray_decode(g: np.ndarray) -> np.ndarray:
    n = np.asarray(g).copy()
    shift = 1
    while np.any(n >> shift):
        n = n ^ (n >> shift)
        shift *= 2
    return n


def qam_modulate(bits, m: int) -> complex:
    """Map m bits to one unit-average-energy square-QAM symbol.

    The first m/2 bits Gray-index the I axis, the rest the Q axis.
    """
    m = check_mod_order(m)
    bits = _check_bits(bits)
    if bits.size != m:
        raise ValueError(f"expected {m} bits, got {bits.size}")
    half = m // 2
    weights = 1 << np.arange(half - 1, -1, -1)
    gi = int(np.dot(bits[:half], weights))
    gq = int(np.dot(bits[half:], weights))
    amps, _ = _qam_levels(m)
    return complex(amps[_gray_decode(gi)], amps[_gray_decode(gq)])


def _detect_axis(x: np.ndarray, m: int) -> np.ndarray:
    """Nearest per-axis level index (natural order) for equalized coordinates."""
    amps, scale = _qam_levels(m)
    n_levels = amps.size
    idx = np.rint((x / scale + (n_levels - 1)) / 2.0).astype(int)
    return np.clip(idx, 0, n_levels - 1)


def qam_detect(y: complex, state: ChannelState, m: int, p: float) -> np.ndarray:
    """Equalize by h, undo the sqrt(p) scaling and Gray-demap the nearest point."""
    m = check_mod_order(m)
    if not p > 0:
        raise ValueError("power must be positive for detection")
    half = m // 2
    s = np.asarray(y) / (state.h * np.sqrt(p))
    ni = _detect_axis(np.real(s), m)
    nq = _detect_axis(np.imag(s), m)
    gi, gq = _gray_encode(ni), _gray_encode(nq)
    shifts = np.arange(half - 1, -1, -1)
    return np.concatenate([(gi >> shifts) & 1, (gq >> shifts) & 1]).astype(np.uint8)


def qam_modulate_many(bit_rows: np.ndarray, m: int) -> np.ndarray:
    """Vectorized modulation: (n, m) bit matrix to n unit-energy symbols."""
    m = check_mod_order(m)
    bit_rows = np.asarray(bit_rows, dtype=np.int64)
    if bit_rows.ndim != 2 or bit_rows.shape[1] != m:
        raise ValueError(f"expected an (n, {m}) bit matrix")
    half = m // 2
    weights = 1 << np.arange(half - 1, -1, -1)
    gi = bit_rows[:, :half] @ weights
    gq = bit_rows[:, half:] @ weights
    amps, _ = _qam_levels(m)
    return amps[_gray_decode(gi)] + 1j * amps[_gray_decode(gq)]


def qam_detect_many(y: np.ndarray, h: complex, m: int, p: float) -> np.ndarray:
    """Vectorized detection: n received symbols to an (n, m) bit matrix."""
    m = check_mod_order(m)
    half = m // 2
    s = np.asarray(y) / (h * np.sqrt(p))
    ni = _detect_axis(np.real(s), m)
    nq = _detect_axis(np.imag(s), m)
    gi, gq = _gray_encode(ni), _gray_encode(nq)
    shifts = np.arange(half - 1, -1, -1)
    bits = np.empty((s.size, m), dtype=np.uint8)
    bits[:, :half] = (gi[:, None] >> shifts) & 1
    bits[:, half:] = (gq[:, None] >> shifts) & 1
    return bits


def draw_channel(model: str, sigma2: float, rng) -> ChannelState:
    """Draw one block-fading channel state: awgn (h = 1) or rayleigh (h ~ CN(0, 1))."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if model == "awgn":
        return ChannelState(1.0 + 0.0j, sigma2)
    if model == "rayleigh":
        rng = np.random.default_rng(rng)
        h = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
        return ChannelState(complex(h), sigma2)
    raise ValueError(f"unknown channel model {model!r}")
