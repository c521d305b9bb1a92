"""Desk-scale multi-codebook trainer: channel-optimized Lloyd iterations with
fixed or gradient-refined bit-flip profiles, a sequential warm-start schedule
across codebooks, and an sklearn-style estimator wrapper."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .distortion import transition_matrix
from .vq import BitFlipProfile, Codebook, CodebookBank, quantize, split

__all__ = [
    "TrainConfig",
    "regularizer",
    "regularizer_grad",
    "lloyd_step",
    "refine_profile",
    "train_sequential",
    "ramp_profile",
    "make_synthetic_bank",
    "covq_objective",
    "MultiCodebookVectorQuantizer",
]

REFERENCE_MU_MIN = (0.0005, 0.001, 0.0045, 0.02, 0.05)


def default_mu_min_list(n_codebooks: int) -> tuple[float, ...]:
    if n_codebooks == len(REFERENCE_MU_MIN):
        return REFERENCE_MU_MIN
    return tuple(np.geomspace(REFERENCE_MU_MIN[0], REFERENCE_MU_MIN[-1], n_codebooks))


def default_lambda_list(n_codebooks: int) -> tuple[float, ...]:
    return tuple(0.125 * 2.0**v for v in range(n_codebooks))


@dataclass(frozen=True)
class TrainConfig:
    n_codebooks: int
    subvector_dim: int
    index_bits: int
    n_subvectors: int
    mu_min_list: tuple[float, ...] = ()
    lambda_list: tuple[float, ...] = ()
    max_iters: int = 50
    convergence_tol: float = 1e-6
    init: str = "splitting"  # or "random-sample"
    profile_mode: str = "fixed"  # or "refined"
    refine_step: float = 0.05
    refine_iters: int = 20
    master_seed: int = 0

    def __post_init__(self):
        if self.n_codebooks < 1:
            raise ValueError("n_codebooks must be >= 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if self.init not in ("splitting", "random-sample"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.profile_mode not in ("fixed", "refined"):
            raise ValueError(f"unknown profile mode {self.profile_mode!r}")
        mu_min = tuple(self.mu_min_list) or default_mu_min_list(self.n_codebooks)
        lam = tuple(self.lambda_list) or default_lambda_list(self.n_codebooks)
        if len(mu_min) != self.n_codebooks or len(lam) != self.n_codebooks:
            raise ValueError("mu_min_list and lambda_list must have one entry per codebook")
        if any(not 0 < x < 0.5 for x in mu_min):
            raise ValueError("mu_min values must lie in (0, 0.5)")
        if any(b <= a for a, b in zip(mu_min, mu_min[1:])):
            raise ValueError("mu_min_list must be strictly increasing")
        object.__setattr__(self, "mu_min_list", mu_min)
        object.__setattr__(self, "lambda_list", lam)


def regularizer(mu) -> float:
    """Mean of mu * ln(mu) over all profile entries; minimized at mu = 1/e."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0) or np.any(mu >= 1):
        raise ValueError("regularizer requires entries strictly inside (0, 1)")
    return float(np.mean(mu * np.log(mu)))


def regularizer_grad(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0) or np.any(mu >= 1):
        raise ValueError("regularizer gradient requires entries strictly inside (0, 1)")
    return (np.log(mu) + 1.0) / mu.size


def _as_subvector_blocks(dataset, n_pos: int, dim: int) -> np.ndarray:
    data = np.asarray(dataset, dtype=float)
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[0] == 0:
        raise ValueError("dataset must not be empty")
    if data.shape[1] != n_pos * dim:
        raise ValueError(
            f"feature length {data.shape[1]} does not match N*D = {n_pos * dim}"
        )
    return data.reshape(data.shape[0], n_pos, dim)


def _assign_and_distances(subs_flat: np.ndarray, codewords: np.ndarray):
    """Nearest-codeword index and the full squared-distance matrix."""
    d2 = (
        np.sum(codewords**2, axis=1)[None, :]
        - 2.0 * subs_flat @ codewords.T
        + np.sum(subs_flat**2, axis=1)[:, None]
    )
    np.maximum(d2, 0.0, out=d2)
    return np.argmin(d2, axis=1), d2


def covq_objective(codebook: Codebook, mu_rows: np.ndarray, subs: np.ndarray) -> float:
    """Empirical mean expected distortion of the dataset through the noisy index
    channel, averaged over samples and positions."""
    n_samples, n_pos, _ = subs.shape
    total = 0.0
    for i in range(n_pos):
        k_star, d2 = _assign_and_distances(subs[:, i, :], codebook.codewords)
        trans = transition_matrix(mu_rows[i], codebook.bits_per_index)
        total += float(np.sum(trans[k_star] * d2)) / n_samples
    return total / n_pos


def lloyd_step(codebook: Codebook, mu_rows: np.ndarray, subs: np.ndarray) -> Codebook:
    """One channel-optimized Lloyd iteration.

    The encoder step assigns every training sub-vector to its nearest codeword
    (the same rule used at inference); the centroid step solves the weighted
    least-squares minimizer of the expected-distortion objective for that fixed
    assignment. Dead codewords are re-seeded at the worst-quantized points.
    """
    n_samples, n_pos, dim = subs.shape
    if n_samples == 0:
        raise ValueError("dataset must not be empty")
    k = codebook.codewords.shape[0]
    num = np.zeros((k, dim))
    den = np.zeros(k)
    worst_d2 = np.zeros(n_samples * n_pos)
    for i in range(n_pos):
        z = subs[:, i, :]
        k_star, d2 = _assign_and_distances(z, codebook.codewords)
        worst_d2[i * n_samples:(i + 1) * n_samples] = d2[np.arange(n_samples), k_star]
        sums = np.zeros((k, dim))
        np.add.at(sums, k_star, z)
        counts = np.bincount(k_star, minlength=k).astype(float)
        trans = transition_matrix(mu_rows[i], codebook.bits_per_index)  # symmetric
        num += trans @ sums
        den += trans @ counts
    new_codewords = codebook.codewords.copy()
    alive = den > 1e-300
    new_codewords[alive] = num[alive] / den[alive, None]
    dead = np.flatnonzero(~alive)
    if dead.size:
        # re-seed dead codewords at the points with the largest quantization error
        order = np.argsort(-worst_d2, kind="stable")
        flat = subs.transpose(1, 0, 2).reshape(-1, dim)
        for rank, kk in enumerate(dead):
            new_codewords[kk] = flat[order[rank % order.size]]
    return Codebook(new_codewords)


def ramp_profile(n_pos: int, n_bits: int, mu_min: float, seed) -> np.ndarray:
    """Deterministic seeded profile: a log-spaced ramp over
    [mu_min, min(4 mu_min, 0.5)] shuffled across bit coordinates."""
    hi = min(4.0 * mu_min, 0.5)
    vals = np.geomspace(mu_min, hi, n_pos * n_bits)
    rng = np.random.default_rng(seed)
    return np.clip(rng.permutation(vals).reshape(n_pos, n_bits), mu_min, 0.5)


def refine_profile(codebook: Codebook, mu: np.ndarray, subs: np.ndarray, lam: float,
                   mu_min: float, step_size: float = 0.05, iters: int = 20) -> BitFlipProfile:
    """Projected gradient descent on mean expected distortion plus the entropy
    regularizer, with entries clipped into [mu_min, 0.5] after every step and
    the step halved whenever the objective would increase."""
    mu = np.clip(np.asarray(mu, dtype=float).copy(), mu_min, 0.5)
    n_samples, n_pos, _ = subs.shape
    b = codebook.bits_per_index
    bits = ((np.arange(1 << b)[:, None] >> np.arange(b - 1, -1, -1)[None, :]) & 1).astype(float)
    assigned = []
    for i in range(n_pos):
        k_star, d2 = _assign_and_distances(subs[:, i, :], codebook.codewords)
        assigned.append((k_star, d2))

    def distortion_and_grad(mu_now):
        total = 0.0
        grad = np.empty_like(mu_now)
        for i in range(n_pos):
            k_star, d2 = assigned[i]
            trans = transition_matrix(mu_now[i], b)
            w = trans[k_star] * d2  # (n, K)
            total += float(w.sum()) / n_samples
            a = w.sum(axis=1)  # (n,)
            g = w @ bits  # (n, B): weight mass on codewords whose bit j is 1
            star_bits = bits[k_star]  # (n, B)
            f = np.where(star_bits > 0, a[:, None] - g, g)  # mass on flipped bit j
            grad[i] = np.mean(f / mu_now[i] - (a[:, None] - f) / (1.0 - mu_now[i]), axis=0)
        return total / n_pos, grad / n_pos

    def objective(mu_now, dist=None):
        if dist is None:
            dist, _ = distortion_and_grad(mu_now)
        return dist + lam * regularizer(mu_now)

    step = step_size
    dist, grad = distortion_and_grad(mu)
    obj = dist + lam * regularizer(mu)
    for _ in range(iters):
        grad_total = grad + lam * regularizer_grad(mu)
        accepted = False
        for _ in range(30):
            trial = np.clip(mu - step * grad_total, mu_min, 0.5)
            trial_obj = objective(trial)
            if trial_obj <= obj:
                accepted = True
                break
            step *= 0.5
        if not accepted or np.allclose(trial, mu):
            break
        mu, obj = trial, trial_obj
        dist, grad = distortion_and_grad(mu)
    return BitFlipProfile(mu, mu_min)


def _init_codebook(subs: np.ndarray, n_codewords: int, mode: str, rng) -> Codebook:
    flat = subs.transpose(1, 0, 2).reshape(-1, subs.shape[2])
    if mode == "random-sample":
        replace = flat.shape[0] < n_codewords
        picks = rng.choice(flat.shape[0], size=n_codewords, replace=replace)
        cw = flat[picks].astype(float)
        if replace:
            cw = cw + 1e-6 * rng.standard_normal(cw.shape)
        return Codebook(cw)
    # splitting: double the codebook by +/-1% perturbation, with classical Lloyd
    # refinement (zero flip probability) after each doubling
    cw = flat.mean(axis=0, keepdims=True)
    while cw.shape[0] < n_codewords:
        delta = 0.01 * np.where(cw == 0.0, 1e-3, cw)
        cw = np.vstack([cw + delta, cw - delta])
        for _ in range(3):
            k_star, _ = _assign_and_distances(flat, cw)
            counts = np.bincount(k_star, minlength=cw.shape[0]).astype(float)
            sums = np.zeros_like(cw)
            np.add.at(sums, k_star, flat)
            alive = counts > 0
            cw[alive] = sums[alive] / counts[alive, None]
    return Codebook(cw[:n_codewords])


def train_sequential(dataset, config: TrainConfig, history: list | None = None) -> CodebookBank:
    """Train the V codebooks sequentially, warm-starting each from the previous
    one and revisiting earlier codebooks with one refresh pass per stage.

    `history` (if given) collects (stage, iteration, objective) tuples, where
    the objective is the empirical mean expected distortion of that stage's
    codebook under its profile.
    """
    subs = _as_subvector_blocks(dataset, config.n_subvectors, config.subvector_dim)
    rng = np.random.default_rng(config.master_seed)
    n_codewords = 1 << config.index_bits

    codebooks: list[Codebook] = []
    profiles: list[BitFlipProfile] = []
    for stage in range(config.n_codebooks):
        mu_min = config.mu_min_list[stage]
        lam = config.lambda_list[stage]
        if stage == 0:
            cb = _init_codebook(subs, n_codewords, config.init, rng)
        else:
            cb = Codebook(codebooks[-1].codewords.copy())
        mu = ramp_profile(config.n_subvectors, config.index_bits, mu_min,
                          config.master_seed + 1000 * (stage + 1))
        if config.profile_mode == "refined":
            profile = refine_profile(cb, mu, subs, lam, mu_min,
                                     config.refine_step, config.refine_iters)
        else:
            profile = BitFlipProfile(mu, mu_min)

        obj = covq_objective(cb, profile.mu, subs)
        if history is not None:
            history.append((stage + 1, 0, obj))
        for it in range(1, config.max_iters + 1):
            new_cb = lloyd_step(cb, profile.mu, subs)
            new_obj = covq_objective(new_cb, profile.mu, subs)
            if new_obj > obj:
                # nearest-codeword encoding is not the exact channel-aware
                # minimizer; reject any step that would raise the objective
                break
            cb = new_cb
            if history is not None:
                history.append((stage + 1, it, new_obj))
            if obj - new_obj <= config.convergence_tol * max(obj, 1e-300):
                obj = new_obj
                break
            obj = new_obj

        # single refresh pass over earlier codebooks, also monotone-guarded
        for u in range(stage):
            old_obj = covq_objective(codebooks[u], profiles[u].mu, subs)
            refreshed = lloyd_step(codebooks[u], profiles[u].mu, subs)
            if covq_objective(refreshed, profiles[u].mu, subs) <= old_obj:
                codebooks[u] = refreshed

        codebooks.append(cb)
        profiles.append(profile)

    return CodebookBank(tuple(codebooks), tuple(profiles),
                        config.mu_min_list, config.lambda_list)


def make_synthetic_bank(n_codebooks: int, subvector_dim: int, index_bits: int,
                        n_subvectors: int, mu_min_list=None, lambda_list=None,
                        seed=0, codeword_scale: float = 1.0) -> CodebookBank:
    """Untrained stand-in bank: Gaussian codewords plus seeded ramp profiles."""
    mu_min_list = tuple(mu_min_list) if mu_min_list else default_mu_min_list(n_codebooks)
    lambda_list = tuple(lambda_list) if lambda_list else default_lambda_list(n_codebooks)
    rng = np.random.default_rng(seed)
    codebooks = tuple(
        Codebook(codeword_scale * rng.standard_normal((1 << index_bits, subvector_dim)))
        for _ in range(n_codebooks)
    )
    profiles = tuple(
        BitFlipProfile(
            ramp_profile(n_subvectors, index_bits, mu_min_list[v], seed + 1000 * (v + 1)),
            mu_min_list[v],
        )
        for v in range(n_codebooks)
    )
    return CodebookBank(codebooks, profiles, mu_min_list, lambda_list)


class MultiCodebookVectorQuantizer(TransformerMixin, BaseEstimator):
    """Channel-optimized multi-codebook product quantizer.

    fit() trains the codebook bank on a feature matrix; transform() returns the
    noiseless quantize-reconstruct round trip of each row under one codebook.
    """

    def __init__(self, n_codebooks=5, subvector_dim=4, index_bits=9,
                 mu_min_list=None, lambda_list=None, max_iters=50, tol=1e-6,
                 init="splitting", profile_mode="fixed", refine_step=0.05,
                 refine_iters=20, transform_codebook=1, random_state=0):
        self.n_codebooks = n_codebooks
        self.subvector_dim = subvector_dim
        self.index_bits = index_bits
        self.mu_min_list = mu_min_list
        self.lambda_list = lambda_list
        self.max_iters = max_iters
        self.tol = tol
        self.init = init
        self.profile_mode = profile_mode
        self.refine_step = refine_step
        self.refine_iters = refine_iters
        self.transform_codebook = transform_codebook
        self.random_state = random_state

    def _config(self, n_features: int) -> TrainConfig:
        if n_features % self.subvector_dim != 0:
            raise ValueError(
                f"n_features={n_features} is not divisible by subvector_dim={self.subvector_dim}"
            )
        return TrainConfig(
            n_codebooks=self.n_codebooks,
            subvector_dim=self.subvector_dim,
            index_bits=self.index_bits,
            n_subvectors=n_features // self.subvector_dim,
            mu_min_list=tuple(self.mu_min_list) if self.mu_min_list else (),
            lambda_list=tuple(self.lambda_list) if self.lambda_list else (),
            max_iters=self.max_iters,
            convergence_tol=self.tol,
            init=self.init,
            profile_mode=self.profile_mode,
            refine_step=self.refine_step,
            refine_iters=self.refine_iters,
            master_seed=self.random_state if self.random_state is not None else 0,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.history_ = []
        self.bank_ = train_sequential(X, self._config(X.shape[1]), self.history_)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        bank = self.bank_
        cb = bank.codebooks[self.transform_codebook - 1]
        out = np.empty_like(X)
        for r in range(X.shape[0]):
            subs = split(X[r], self.subvector_dim)
            out[r] = np.concatenate([quantize(sub, cb)[1] for sub in subs])
        return out
