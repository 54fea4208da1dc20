"""Tail of a sum of independent exponentials (hypoexponential distribution).

For rates ``L_1, ..., L_C`` the tail is

    P[A_1 + ... + A_C > g] = sum_j exp(-L_j g) prod_{k != j} L_k / (L_k - L_j)

when the rates are distinct.  The terms alternate in sign and can cancel
catastrophically when rates are close or the tail is tiny, so the sum is
first tried in double precision with a running error bound and redone in
binary floating point of increasing width (via gmpy2) until the bound meets
the requested relative accuracy.  Repeated rates are handled exactly by the
partial-fraction expansion into Erlang tails.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr
from numba import njit

__all__ = ["PhaseTypeSpec", "tail", "tail_fast", "PrecisionError"]

EPS = float(np.finfo(float).eps)
MAX_BITS = 1 << 14


class PrecisionError(ArithmeticError):
    """The requested accuracy could not be certified within ``MAX_BITS`` bits."""


@dataclass(frozen=True)
class PhaseTypeSpec:
    """Stage rates of a pure-birth chain absorbed after the last stage."""

    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(x) for x in self.rates)
        if not rates:
            raise ValueError("at least one stage rate is required")
        if any(not (x > 0.0 and math.isfinite(x)) for x in rates):
            raise ValueError(f"stage rates must be positive and finite: {rates}")
        object.__setattr__(self, "rates", rates)

    def generator(self) -> np.ndarray:
        """Bidiagonal sub-generator with ``-L_j`` on the diagonal."""
        c = len(self.rates)
        q = np.diag(-np.asarray(self.rates))
        q[np.arange(c - 1), np.arange(1, c)] = self.rates[:-1]
        return q

    def tail(self, gamma: float, **kw) -> float:
        return tail(self, gamma, **kw)


@njit(cache=True, nogil=True)
def tail_double(rates, gamma):
    """Alternating sum in double precision; returns (value, sum of |terms|).

    Each term's coefficient is formed in log space so that products of many
    large ratios do not overflow.  Equal rates give an infinite magnitude.
    """
    c = rates.shape[0]
    value = 0.0
    mag = 0.0
    for j in range(c):
        lj = rates[j]
        log_p = -lj * gamma
        neg = 0
        for k in range(c):
            if k != j:
                dk = rates[k] - lj
                if dk == 0.0:
                    return np.nan, np.inf
                log_p += np.log(rates[k]) - np.log(abs(dk))
                if dk < 0.0:
                    neg += 1
        term = np.exp(log_p)
        value += -term if neg % 2 else term
        mag += term
    return value, mag


@njit(cache=True, nogil=True)
def tail_fast(rates, gamma, rtol):
    """Double-precision tail, or -1.0 when its accuracy cannot be certified."""
    c = rates.shape[0]
    if c == 1:
        return np.exp(-rates[0] * gamma)
    top = 0.0
    for j in range(c):
        top = max(top, rates[j])
    if top * gamma >= 700.0:
        return -1.0
    value, mag = tail_double(rates, gamma)
    if value > 0.0 and 8.0 * (c + 2) * EPS * mag <= 0.1 * rtol * value:
        return min(value, 1.0)
    return -1.0


def _erlang_tail(lam_g, l):
    # e^{-x} sum_{n<l} x^n / n!
    term = mpfr(1)
    acc = mpfr(1)
    for n in range(1, l):
        term = term * lam_g / n
        acc += term
    return acc * gmpy2.exp(-lam_g)


def _tail_mpfr(groups, gamma: float, bits: int):
    """Partial-fraction tail at ``bits`` of precision; returns (value, sum of |terms|)."""
    with gmpy2.context(precision=bits):
        lam = [mpfr(x) for x, _ in groups]
        mult = [k for _, k in groups]
        g = mpfr(gamma)
        total = mpfr(0)
        mag = mpfr(0)
        for j, (lj, mj) in enumerate(zip(lam, mult)):
            # Taylor coefficients at s = -L_j of prod_{k != j} (L_k / (L_k + s))^{m_k}
            series = [mpfr(1)] + [mpfr(0)] * (mj - 1)
            scale = mpfr(1)
            for k, (lk, mk) in enumerate(zip(lam, mult)):
                if k == j:
                    continue
                d = lk - lj
                scale *= (lk / d) ** mk
                if mj > 1:
                    # (1 + x/d)^{-mk} = sum_n (-1)^n C(mk+n-1, n) (x/d)^n
                    fac = [mpfr(1)]
                    for n in range(1, mj):
                        fac.append(-fac[-1] * (mk + n - 1) / (n * d))
                    series = [
                        sum((series[a] * fac[n - a] for a in range(n + 1)), mpfr(0))
                        for n in range(mj)
                    ]
            lam_g = lj * g
            for l in range(1, mj + 1):
                coef = scale * series[mj - l] * lj ** (mj - l)
                term = coef * _erlang_tail(lam_g, l)
                total += term
                mag += abs(term)
        return total, mag


def tail(spec: PhaseTypeSpec | Sequence[float], gamma: float = 1.0, *,
         rtol: float = 1e-10, bits: int = 256) -> float:
    """``P[A_1 + ... + A_C > gamma]`` for independent ``A_j ~ Exp(rate_j)``.

    The result is certified to relative accuracy ``rtol`` (up to the error
    bound used); ``bits`` is the first extended precision tried when double
    precision is not enough.  The tail is symmetric in the rates, so their
    order does not matter.
    """
    if not isinstance(spec, PhaseTypeSpec):
        spec = PhaseTypeSpec(tuple(spec))
    gamma = float(gamma)
    if not gamma >= 0.0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if gamma == 0.0:
        return 1.0
    rates = np.asarray(spec.rates)
    c = rates.shape[0]
    if c == 1:
        return math.exp(-rates[0] * gamma)
    if len(set(spec.rates)) == c:
        value = tail_fast(rates, gamma, rtol)
        if value >= 0.0:
            return float(value)
    counts = Counter(spec.rates)
    groups = sorted(counts.items(), reverse=True)
    while bits <= MAX_BITS:
        value, mag = _tail_mpfr(groups, gamma, bits)
        if value > 0 and 8 * (c + 2) * mag * mpfr(2) ** (-bits) <= 0.1 * rtol * value:
            return min(float(value), 1.0)
        bits *= 2
    raise PrecisionError(f"tail not resolved to rtol={rtol} with {MAX_BITS} bits")
