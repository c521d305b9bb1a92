"""Inference-stage optimizers: joint codebook assignment, adaptive modulation and
power allocation (with a fixed-modulation variant and a whole-bank baseline),
symbol-level post-processing, and the SNR-indexed lookup table."""

from __future__ import annotations

import json
import weakref
from dataclasses import dataclass

import numpy as np

from .channel import ber_inverse
from .distortion import DistortionTable
from .vq import CodebookBank

__all__ = [
    "LinkBudget",
    "SymbolSlot",
    "TransmissionPlan",
    "LookupTable",
    "temp_power",
    "p1_select",
    "p2_swap",
    "jcamp",
    "jcap",
    "codebook_selection_baseline",
    "post_process",
    "build_lut",
    "lut_plan",
    "save_lut",
    "load_lut",
    "instantaneous_snr_db",
]


@dataclass(frozen=True)
class LinkBudget:
    """Power/rate constraints of one feature-vector transmission."""

    p_tot: float
    rate: int  # bits per symbol, R
    m_max: int
    n_bits: int  # N * B, total bits per feature vector

    def __post_init__(self):
        if not self.p_tot > 0:
            raise ValueError("p_tot must be positive")
        if self.rate < 2 or self.rate % 2 != 0:
            raise ValueError("rate must be an even integer >= 2")
        if self.m_max % 2 != 0 or self.m_max < self.rate:
            raise ValueError("m_max must be even and >= rate")
        if self.n_bits % self.rate != 0:
            raise ValueError(f"total bit count {self.n_bits} must be divisible by rate {self.rate}")

    @property
    def n_symbols(self) -> int:
        return self.n_bits // self.rate


@dataclass(frozen=True)
class SymbolSlot:
    """One transmitted symbol: order, power, bit coordinates and target BER."""

    m: int
    p: float
    group: tuple[tuple[int, int], ...]  # 0-based (position, bit) coordinates
    mu_bar: float


@dataclass(frozen=True, eq=False)
class TransmissionPlan:
    assignment: np.ndarray  # (N,) 1-based codebook indices
    symbols: tuple[SymbolSlot, ...]
    scaled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "assignment", np.asarray(self.assignment, dtype=int))
        object.__setattr__(self, "symbols", tuple(self.symbols))

    @property
    def total_power(self) -> float:
        return float(sum(s.p for s in self.symbols))

    def expected_distortion(self, table: DistortionTable) -> float:
        return float(table.values[self.assignment - 1, np.arange(self.assignment.size)].sum())

    def to_dict(self) -> dict:
        return {
            "assignment": self.assignment.tolist(),
            "symbols": [
                {"m": s.m, "p": s.p, "group": [list(c) for c in s.group], "mu_bar": s.mu_bar}
                for s in self.symbols
            ],
            "scaled": self.scaled,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TransmissionPlan":
        symbols = tuple(
            SymbolSlot(
                int(s["m"]),
                float(s["p"]),
                tuple((int(i), int(j)) for i, j in s["group"]),
                float(s.get("mu_bar", 0.0)),
            )
            for s in doc["symbols"]
        )
        return cls(np.asarray(doc["assignment"], dtype=int), symbols, bool(doc.get("scaled", False)))


class _InverseCache:
    """Per-bank cache of ber_inverse(mu; m) at gamma = 1 for every profile entry.

    ber_approx depends on power only through p * gamma, so the unit-gamma
    inverse divided by gamma serves every channel state.
    """

    def __init__(self, bank: CodebookBank):
        self._mu = np.stack([pr.mu for pr in bank.profiles])  # (V, N, B)
        self._tables: dict[int, np.ndarray] = {}

    def table(self, m: int) -> np.ndarray:
        if m not in self._tables:
            self._tables[m] = ber_inverse(self._mu.reshape(-1), m, 1.0).reshape(self._mu.shape)
        return self._tables[m]


_BANK_CACHES: "weakref.WeakKeyDictionary[CodebookBank, _InverseCache]" = weakref.WeakKeyDictionary()


def _get_cache(bank: CodebookBank) -> _InverseCache:
    cache = _BANK_CACHES.get(bank)
    if cache is None:
        cache = _InverseCache(bank)
        _BANK_CACHES[bank] = cache
    return cache


def temp_power(mu: float, m: int, gamma: float) -> float:
    """Per-bit temporary power: the BER-matching symbol power shared by m bits."""
    return ber_inverse(mu, m, gamma) / m


def _per_bit_power(v, m_hat, cache: _InverseCache, gamma: float) -> np.ndarray:
    """(N, B) matrix of per-bit temporary powers for assignment v and orders m_hat."""
    out = np.empty(m_hat.shape)
    idx_i = np.arange(v.size)
    for m in np.unique(m_hat):
        tab = cache.table(int(m))[v - 1, idx_i, :]  # (N, B)
        mask = m_hat == m
        out[mask] = tab[mask] / (gamma * m)
    return out


def _temp_power_total(v, m_hat, cache: _InverseCache, gamma: float) -> float:
    return float(_per_bit_power(v, m_hat, cache, gamma).sum())


def _downgrade_ratios(v, m_hat, table: DistortionTable, cache: _InverseCache,
                      gamma: float) -> np.ndarray:
    """Distortion-drop / power-increase ratio of downgrading each position by one
    codebook level; -inf where no downgrade is possible."""
    n_pos = v.size
    idx_i = np.arange(n_pos)
    ratios = np.full(n_pos, -np.inf)
    cand = v > 1
    if not np.any(cand):
        return ratios
    v_lo = np.maximum(v - 1, 1)
    d_gain = table.values[v - 1, idx_i] - table.values[v_lo - 1, idx_i]
    dp = np.zeros(n_pos)
    for m in np.unique(m_hat):
        tab = cache.table(int(m))
        mask = m_hat == m  # (N, B)
        diff = (tab[v_lo - 1, idx_i, :] - tab[v - 1, idx_i, :]) / m
        dp += np.where(mask, diff, 0.0).sum(axis=1)
    dp /= gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        r = d_gain / dp
    r = np.where(dp == 0.0, np.where(d_gain > 0, np.inf, -np.inf), r)
    ratios[cand] = r[cand]
    return ratios


def p1_select(assignment, m_hat, table: DistortionTable, bank: CodebookBank, gamma: float) -> int:
    """Greedy downgrade choice: the position whose codebook downgrade maximizes
    distortion reduction per unit of extra temporary power. Ties go to the
    smallest position."""
    v = np.asarray(assignment, dtype=int)
    m_hat = np.asarray(m_hat, dtype=int)
    if not np.any(v > 1):
        raise ValueError("no downgrade candidate: every position already uses codebook 1")
    ratios = _downgrade_ratios(v, m_hat, table, _get_cache(bank), gamma)
    return int(np.argmax(ratios))  # argmax returns the first maximum


def p2_swap(m_hat, assignment, bank: CodebookBank, gamma: float, m_max: int) -> np.ndarray:
    """Greedy order swapping: for each order m, raise the m+2 cheapest-to-raise
    bits two levels and lower the m-2 most-profitable-to-lower bits two levels
    while the summed power increments stay below the decrements. Each applied
    swap trades two order-m symbols for one order-(m+2) and one order-(m-2)
    symbol, preserving the symbol count."""
    v = np.asarray(assignment, dtype=int)
    m_hat = np.asarray(m_hat, dtype=int).copy()
    cache = _get_cache(bank)
    for m in range(4, m_max - 1, 2):
        while True:
            coords = np.argwhere(m_hat == m)  # lexicographically sorted (i, j)
            if coords.shape[0] < 2 * m:
                break
            ii, jj = coords[:, 0], coords[:, 1]
            inv_up = cache.table(m + 2)[v[ii] - 1, ii, jj]
            inv_mid = cache.table(m)[v[ii] - 1, ii, jj]
            inv_dn = cache.table(m - 2)[v[ii] - 1, ii, jj]
            p_plus = (inv_up - inv_mid) / gamma
            p_minus = (inv_mid - inv_dn) / gamma
            # raise set: m+2 smallest increments; stable sort breaks ties by (i, j)
            order_up = np.argsort(p_plus, kind="stable")
            raise_set = order_up[: m + 2]
            remaining = order_up[m + 2:]
            # lower set: m-2 largest decrements among the rest, ties by (i, j)
            order_dn = remaining[np.lexsort((remaining, -p_minus[remaining]))]
            lower_set = order_dn[: m - 2]
            if p_plus[raise_set].sum() < p_minus[lower_set].sum():
                m_hat[ii[raise_set], jj[raise_set]] = m + 2
                m_hat[ii[lower_set], jj[lower_set]] = m - 2
            else:
                break
    return m_hat


def post_process(assignment, m_hat, bank: CodebookBank, gamma: float, budget: LinkBudget,
                 scale_to_budget: bool = False) -> TransmissionPlan:
    """Group bits into symbols and allocate BER-matched powers.

    Bits are ranked by ascending flip probability (ties by coordinate). Each
    symbol takes the order of the lowest-ranked ungrouped bit and fills up with
    the lowest-ranked ungrouped bits of the same order. Residual power is spread
    evenly across symbols; when scale_to_budget is set (the infeasible fallback)
    powers are instead scaled uniformly to hit the budget.
    """
    v = np.asarray(assignment, dtype=int)
    m_hat = np.asarray(m_hat, dtype=int)
    n_pos, n_bits = m_hat.shape
    mu = np.stack([bank.mu(int(vi))[i] for i, vi in enumerate(v)])  # (N, B)

    flat_mu = mu.reshape(-1)
    flat_m = m_hat.reshape(-1)
    rank_order = np.argsort(flat_mu, kind="stable")  # stable: ties fall back to (i, j)

    counts = np.bincount(flat_m)
    for m in np.flatnonzero(counts):
        if counts[m] % m != 0:
            raise RuntimeError(f"bit count {counts[m]} at order {m} is not divisible by {m}")

    # Sequential grouping is equivalent to chunking each order's bits in rank
    # order; symbols are then emitted by the rank of their first member.
    slot_members: list[np.ndarray] = []
    slot_orders: list[int] = []
    ranked_m = flat_m[rank_order]
    for m in np.unique(flat_m):
        at_m = rank_order[ranked_m == m]
        for chunk in at_m.reshape(-1, m):
            slot_members.append(chunk)
            slot_orders.append(int(m))
    rank_of = np.empty(flat_mu.size, dtype=int)
    rank_of[rank_order] = np.arange(flat_mu.size)
    first_rank = np.array([rank_of[members[0]] for members in slot_members])
    emit = np.argsort(first_rank)
    slot_members = [slot_members[t] for t in emit]
    slot_orders = [slot_orders[t] for t in emit]

    orders = np.asarray(slot_orders)
    mu_bars = np.array([flat_mu[members].mean() for members in slot_members])
    powers = np.empty(len(slot_members))
    for m in np.unique(orders):
        mask = orders == m
        powers[mask] = ber_inverse(mu_bars[mask], int(m), gamma)

    if scale_to_budget:
        total = powers.sum()
        if total > 0:
            powers *= budget.p_tot / total
    else:
        powers += (budget.p_tot - powers.sum()) / len(slot_members)

    symbols = []
    for members, m_t, mu_bar, p_t in zip(slot_members, slot_orders, mu_bars, powers):
        group = tuple((int(u) // n_bits, int(u) % n_bits) for u in members)
        symbols.append(SymbolSlot(m_t, float(p_t), group, float(mu_bar)))
    return TransmissionPlan(v, tuple(symbols), scaled=scale_to_budget)


def _scaled_fallback(bank: CodebookBank, gamma: float, budget: LinkBudget) -> TransmissionPlan:
    v = np.full(bank.N, bank.V, dtype=int)
    m_hat = np.full((bank.N, bank.B), budget.rate, dtype=int)
    return post_process(v, m_hat, bank, gamma, budget, scale_to_budget=True)


def jcamp(table: DistortionTable, bank: CodebookBank, gamma: float,
          budget: LinkBudget) -> TransmissionPlan:
    """Joint codebook assignment, adaptive modulation and power allocation.

    Alternates greedy codebook downgrades (while the temporary power budget
    holds) with order swaps that free power; on exit the final infeasible
    downgrade is reverted and the order matrix restored to its buffered value
    before symbol-level post-processing.
    """
    cache = _get_cache(bank)
    v = np.full(bank.N, bank.V, dtype=int)
    m_hat = np.full((bank.N, bank.B), budget.rate, dtype=int)
    if _temp_power_total(v, m_hat, cache, gamma) > budget.p_tot:
        return _scaled_fallback(bank, gamma, budget)

    last_star = -1
    m_buffer = m_hat.copy()
    exhausted = False  # every position reached codebook 1 while still feasible
    while _temp_power_total(v, m_hat, cache, gamma) <= budget.p_tot:
        m_buffer = m_hat.copy()
        # P1: greedy downgrades until the temporary power budget is exceeded
        while _temp_power_total(v, m_hat, cache, gamma) <= budget.p_tot:
            if not np.any(v > 1):
                exhausted = True
                break
            last_star = p1_select(v, m_hat, table, bank, gamma)
            v[last_star] -= 1
        if exhausted:
            break
        # P2: swap orders on the infeasible state to free temporary power
        m_hat = p2_swap(m_hat, v, bank, gamma, budget.m_max)
    if not exhausted:
        v[last_star] += 1
        m_hat = m_buffer
    return post_process(v, m_hat, bank, gamma, budget)


def jcap(table: DistortionTable, bank: CodebookBank, gamma: float,
         budget: LinkBudget) -> TransmissionPlan:
    """Fixed-modulation variant: greedy codebook assignment at order R plus
    BER-matched power allocation."""
    cache = _get_cache(bank)
    v = np.full(bank.N, bank.V, dtype=int)
    m_hat = np.full((bank.N, bank.B), budget.rate, dtype=int)
    if _temp_power_total(v, m_hat, cache, gamma) > budget.p_tot:
        return _scaled_fallback(bank, gamma, budget)
    last_star = -1
    exhausted = False
    while _temp_power_total(v, m_hat, cache, gamma) <= budget.p_tot:
        if not np.any(v > 1):
            exhausted = True
            break
        last_star = p1_select(v, m_hat, table, bank, gamma)
        v[last_star] -= 1
    if not exhausted:
        v[last_star] += 1
    return post_process(v, m_hat, bank, gamma, budget)


def codebook_selection_baseline(table: DistortionTable, bank: CodebookBank, gamma: float,
                                budget: LinkBudget) -> TransmissionPlan:
    """Whole-bank baseline: the single best codebook that is power-feasible for
    every sub-vector at fixed order R."""
    cache = _get_cache(bank)
    m_hat = np.full((bank.N, bank.B), budget.rate, dtype=int)
    for vv in range(1, bank.V + 1):
        v = np.full(bank.N, vv, dtype=int)
        if _temp_power_total(v, m_hat, cache, gamma) <= budget.p_tot:
            return post_process(v, m_hat, bank, gamma, budget)
    return _scaled_fallback(bank, gamma, budget)


def instantaneous_snr_db(p_tot: float, gamma: float, n_bits: int) -> float:
    """Instantaneous SNR for one feature-vector transmission, in dB."""
    if p_tot <= 0 or gamma <= 0 or n_bits <= 0:
        raise ValueError("p_tot, gamma and n_bits must be positive")
    return 10.0 * np.log10(p_tot * gamma / n_bits)


@dataclass(frozen=True, eq=False)
class LookupTable:
    """Precomputed plans indexed by quantized instantaneous SNR."""

    snr_lo_db: float
    snr_hi_db: float
    bits: int
    method: str
    entries: tuple[TransmissionPlan, ...]
    budget: LinkBudget

    def __post_init__(self):
        if not self.snr_lo_db < self.snr_hi_db:
            raise ValueError("snr_lo_db must be below snr_hi_db")
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        if len(self.entries) != 1 << self.bits:
            raise ValueError(f"expected {1 << self.bits} entries, got {len(self.entries)}")


def build_lut(table: DistortionTable, bank: CodebookBank, budget: LinkBudget,
              snr_lo_db: float, snr_hi_db: float, bits: int, method: str) -> LookupTable:
    """Precompute one plan per quantized-SNR cell, evaluated at the cell center."""
    solver = PLAN_METHODS[method]
    n_cells = 1 << bits
    width = (snr_hi_db - snr_lo_db) / n_cells
    entries = []
    for c in range(n_cells):
        center_db = snr_lo_db + (c + 0.5) * width
        gamma_c = budget.n_bits * 10.0 ** (center_db / 10.0) / budget.p_tot
        entries.append(solver(table, bank, gamma_c, budget))
    return LookupTable(snr_lo_db, snr_hi_db, bits, method, tuple(entries), budget)


def lut_plan(lut: LookupTable, gamma: float) -> TransmissionPlan:
    """Clip the instantaneous SNR into the table range and return the cell's plan."""
    snr = instantaneous_snr_db(lut.budget.p_tot, gamma, lut.budget.n_bits)
    n_cells = 1 << lut.bits
    width = (lut.snr_hi_db - lut.snr_lo_db) / n_cells
    idx = int((snr - lut.snr_lo_db) // width)
    idx = min(max(idx, 0), n_cells - 1)
    return lut.entries[idx]


def save_lut(path, lut: LookupTable) -> None:
    doc = {
        "snr_lo_db": lut.snr_lo_db,
        "snr_hi_db": lut.snr_hi_db,
        "bits": lut.bits,
        "method": lut.method,
        "entries": [plan.to_dict() for plan in lut.entries],
        # budget fields beyond the minimal schema, needed to index by SNR later
        "p_tot": lut.budget.p_tot,
        "rate": lut.budget.rate,
        "m_max": lut.budget.m_max,
        "n_bits": lut.budget.n_bits,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_lut(path) -> LookupTable:
    with open(path) as fh:
        doc = json.load(fh)
    budget = LinkBudget(float(doc["p_tot"]), int(doc["rate"]), int(doc["m_max"]), int(doc["n_bits"]))
    entries = tuple(TransmissionPlan.from_dict(e) for e in doc["entries"])
    return LookupTable(
        float(doc["snr_lo_db"]), float(doc["snr_hi_db"]), int(doc["bits"]),
        str(doc["method"]), entries, budget,
    )


PLAN_METHODS = {"jcamp": jcamp, "jcap": jcap, "baseline": codebook_selection_baseline}
