"""Artificial capacity-raising Markov chain behind the PMC and GS estimators.

Link ``i`` starts at its lowest level.  Each level ``k >= 1`` has an
exponential clock ``Y[i, k]`` with rate ``lambda[i, k]`` and the capacity at
time ``g`` is the highest level whose clock has rung by then.  Rates are
chosen so that the capacity at time 1 has exactly the static law of the link.

Jump times are stored flat: link ``i`` owns slots ``jump_ptr[i]:jump_ptr[i+1]``
holding levels ``1 .. b_i`` in order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .network import ModelError, NetworkModel

__all__ = [
    "RateTable",
    "JumpRealization",
    "build_rates",
    "sample_jumps",
    "capacity_at",
]


@dataclass(frozen=True)
class RateTable:
    """Jump rates of every (link, level) pair plus the level tables.

    Attributes
    ----------
    jump_ptr : (m + 1,) int array
        Offsets of each link's jumps in ``rates``.
    rates : (kappa,) float array
        ``rates[jump_ptr[i] + k - 1]`` is the rate of the jump to level ``k``.
    level_ptr : (m + 1,) int array
        Offsets of each link's capacity levels in ``levels``.
    levels : int array
        Capacity levels ``c[i, 0..b_i]``, flattened.
    """

    jump_ptr: np.ndarray
    rates: np.ndarray
    level_ptr: np.ndarray
    levels: np.ndarray

    @property
    def m(self) -> int:
        return self.jump_ptr.shape[0] - 1

    @property
    def kappa(self) -> int:
        return int(self.jump_ptr[-1])

    @property
    def total(self) -> float:
        return math.fsum(self.rates)

    def link_rates(self, i: int) -> np.ndarray:
        return self.rates[self.jump_ptr[i]:self.jump_ptr[i + 1]]

    def link_levels(self, i: int) -> np.ndarray:
        return self.levels[self.level_ptr[i]:self.level_ptr[i + 1]]

    def base_capacities(self) -> np.ndarray:
        return self.levels[self.level_ptr[:-1]].copy()


def _link_rates(probs) -> list[float]:
    b = len(probs) - 1
    low = [math.fsum(probs[:k + 1]) for k in range(b)]  # r_0 + ... + r_k, k < b
    high = [math.fsum(probs[k + 1:]) for k in range(b)]
    if any(not s > 0.0 for s in low) or any(not s > 0.0 for s in high):
        raise ModelError(f"cumulative probabilities {low} must lie strictly in (0, 1)")
    top = probs[b]
    # -ln(r_0 + ... + r_{b-1}); use the complement when it is the small side
    last = -math.log1p(-top) if top < 0.5 else -math.log(low[b - 1])
    # lambda_k = ln(S_k / S_{k-1}) = log1p(r_k / S_{k-1}) for 1 <= k < b
    rates = [math.log1p(probs[k] / low[k - 1]) for k in range(1, b)]
    rates.append(last)
    return rates


def build_rates(model: NetworkModel) -> RateTable:
    """Jump rates reproducing each link's capacity law at time 1."""
    rates, levels, jptr, lptr = [], [], [0], [0]
    for link in model.links:
        rates.extend(_link_rates(link.probs))
        levels.extend(link.levels)
        jptr.append(len(rates))
        lptr.append(len(levels))
    return RateTable(
        np.array(jptr, np.int64),
        np.array(rates, np.float64),
        np.array(lptr, np.int64),
        np.array(levels, np.int64),
    )


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True, nogil=True)
def draw_exponential(rng, rate):
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return -np.log(u) / rate


@njit(cache=True, nogil=True)
def draw_times(rng, rates, y):
    for q in range(rates.shape[0]):
        y[q] = draw_exponential(rng, rates[q])


@njit(cache=True, nogil=True)
def reduce_jumps(jump_ptr, rates, y, j_link, j_level, j_time, j_rate):
    """Drop clocks that cannot raise their link and merge their rates forward.

    Scanning each link from its top level down, a clock ringing no earlier
    than the currently retained higher clock is useless; its rate is added to
    that retained clock.  Retained jumps of all links are returned sorted by
    time, ties broken by (link, level).  Returns the retained count.
    """
    m = jump_ptr.shape[0] - 1
    kappa = rates.shape[0]
    keep = np.zeros(kappa, np.bool_)
    merged = np.zeros(kappa, np.float64)
    for i in range(m):
        lo = jump_ptr[i]
        hi = jump_ptr[i + 1]
        cur = hi - 1
        keep[cur] = True
        merged[cur] = rates[cur]
        for q in range(hi - 2, lo - 1, -1):
            if y[q] >= y[cur]:
                merged[cur] += rates[q]
            else:
                cur = q
                keep[q] = True
                merged[q] = rates[q]
    n = 0
    for i in range(m):
        for q in range(jump_ptr[i], jump_ptr[i + 1]):
            if keep[q]:
                j_link[n] = i
                j_level[n] = q - jump_ptr[i] + 1
                j_time[n] = y[q]
                j_rate[n] = merged[q]
                n += 1
    order = np.argsort(j_time[:n], kind="mergesort")
    j_link[:n] = j_link[:n][order]
    j_level[:n] = j_level[:n][order]
    j_time[:n] = j_time[:n][order]
    j_rate[:n] = j_rate[:n][order]
    return n


@njit(cache=True, nogil=True)
def levels_at(jump_ptr, y, g, out):
    """Level index of every link at time ``g`` from raw clock times."""
    m = jump_ptr.shape[0] - 1
    for i in range(m):
        k = 0
        for q in range(jump_ptr[i], jump_ptr[i + 1]):
            if y[q] <= g:
                k = q - jump_ptr[i] + 1
        out[i] = k


# ---------------------------------------------------------------------------

@dataclass
class JumpRealization:
    """One draw of all clocks and the reduced, time-sorted jump list.

    ``link[j], level[j], time[j], rate[j]`` describe the ``j``-th retained
    jump; ``rate`` holds the merged rate of the levels it skips over.
    ``active`` marks jumps that are still scheduled.
    """

    y: np.ndarray
    link: np.ndarray
    level: np.ndarray
    time: np.ndarray
    rate: np.ndarray
    active: np.ndarray
    rates: RateTable

    @property
    def size(self) -> int:
        return self.link.shape[0]

    def positions_of(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.link == i)

    def remaining_rate(self) -> float:
        """Total rate of jumps still active."""
        return math.fsum(self.rate[self.active])


def sample_jumps(rates: RateTable, rng: np.random.Generator) -> JumpRealization:
    """Draw every clock, then keep only the jumps that raise some capacity."""
    y = np.empty(rates.kappa)
    draw_times(rng, rates.rates, y)
    return realize(rates, y)


def realize(rates: RateTable, y: np.ndarray) -> JumpRealization:
    """Reduced jump list for given raw clock times ``y``."""
    kappa = rates.kappa
    jl = np.empty(kappa, np.int64)
    jk = np.empty(kappa, np.int64)
    jt = np.empty(kappa)
    jr = np.empty(kappa)
    n = reduce_jumps(rates.jump_ptr, rates.rates, y, jl, jk, jt, jr)
    return JumpRealization(y, jl[:n], jk[:n], jt[:n], jr[:n], np.ones(n, np.bool_), rates)


def capacity_at(realization: JumpRealization, gamma: float) -> np.ndarray:
    """Capacity vector at time ``gamma`` (right-continuous, nondecreasing)."""
    rt = realization.rates
    k = np.zeros(rt.m, np.int64)
    hit = realization.time <= gamma
    np.maximum.at(k, realization.link[hit], realization.level[hit])
    return rt.levels[rt.level_ptr[:-1] + k]
