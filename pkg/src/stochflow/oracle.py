"""Brute-force references used to validate the estimators.

Nothing here is fast; everything here is independent of the estimator code
paths it is meant to check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import mpmath
import numpy as np
import scipy.linalg
from numba import njit

from .maxflow import FlowNetwork, flow_from_scratch
from .network import ModelError, NetworkModel

__all__ = [
    "ExactResult",
    "exact_unreliability",
    "min_cut_by_enumeration",
    "tail_by_convolution",
    "tail_expm",
    "MAX_STATES",
]

MAX_STATES = 10**7


@dataclass(frozen=True)
class ExactResult:
    u: float
    states: int
    failing_states: int


@njit(cache=True)
def _enumerate(level_ptr, levels, probs, directed, head, adj_ptr, adj_arc, s, t, d):
    m = level_ptr.shape[0] - 1
    digit = np.zeros(m, np.int64)
    caps = np.empty(m, np.int64)
    res = np.zeros(2 * m, np.int64)
    prev = np.empty(adj_ptr.shape[0] - 1, np.int64)
    queue = np.empty(adj_ptr.shape[0] - 1, np.int64)
    # Neumaier-compensated accumulation of the failing mass
    acc = 0.0
    comp = 0.0
    states = 0
    failing = 0
    while True:
        p = 1.0
        for i in range(m):
            caps[i] = levels[level_ptr[i] + digit[i]]
            p *= probs[level_ptr[i] + digit[i]]
        states += 1
        if flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, s, t, d, prev, queue) < d:
            failing += 1
            tot = acc + p
            if abs(acc) >= abs(p):
                comp += (acc - tot) + p
            else:
                comp += (p - tot) + acc
            acc = tot
        i = 0
        while i < m:
            digit[i] += 1
            if digit[i] < level_ptr[i + 1] - level_ptr[i]:
                break
            digit[i] = 0
            i += 1
        if i == m:
            break
    return acc + comp, states, failing


def exact_unreliability(model: NetworkModel, max_states: int = MAX_STATES) -> ExactResult:
    """``P[maxflow(X) < demand]`` by summing over every capacity vector."""
    states = model.state_count()
    if states > max_states:
        raise ModelError(f"state space has {states} states (limit {max_states})")
    net = FlowNetwork.from_model(model)
    level_ptr = np.cumsum([0] + [len(l.levels) for l in model.links]).astype(np.int64)
    levels = np.array([c for l in model.links for c in l.levels], np.int64)
    probs = np.array([p for l in model.links for p in l.probs], np.float64)
    u, n, fail = _enumerate(level_ptr, levels, probs, model.directed, net.head, net.adj_ptr,
                            net.adj_arc, model.source, model.sink, model.demand)
    return ExactResult(float(min(max(u, 0.0), 1.0)), int(n), int(fail))


def min_cut_by_enumeration(nodes: int, endpoints, capacities, source: int, sink: int,
                           directed: bool = False) -> int:
    """Smallest ``source``/``sink`` cut capacity over all ``2**(nodes-2)`` node partitions."""
    ends = np.asarray(endpoints).reshape(-1, 2)
    caps = np.asarray(capacities)
    others = [v for v in range(nodes) if v not in (source, sink)]
    best = None
    for bits in itertools.product((False, True), repeat=len(others)):
        side = np.zeros(nodes, bool)
        side[source] = True
        side[others] = bits
        a, b = side[ends[:, 0]], side[ends[:, 1]]
        crossing = a & ~b if directed else a != b
        cut = int(caps[crossing].sum())
        best = cut if best is None else min(best, cut)
    return best


def tail_by_convolution(rates, gamma: float, dps: int = 40) -> float:
    """Tail of ``A_1 + ... + A_C`` from the product of the stage transforms.

    The density of a sum of independent stages is the convolution of the
    stage densities, i.e. the product ``prod_j L_j / (L_j + s)`` of their
    Laplace transforms.  The tail is recovered by Talbot contour quadrature of
    ``(1 - prod_j L_j / (L_j + s)) / s``.  Working precision is raised until
    two successive evaluations agree to 1e-14 relative.
    """
    rates = [float(x) for x in rates]
    if not rates or len(rates) > 50:
        raise ValueError("between 1 and 50 stage rates are supported")
    if any(x <= 0 for x in rates) or gamma < 0:
        raise ValueError("rates must be positive and gamma nonnegative")
    if gamma == 0:
        return 1.0
    prev = None
    for _ in range(8):
        with mpmath.workdps(dps):
            lam = [mpmath.mpf(x) for x in rates]

            def transform(s):
                p = mpmath.mpf(1)
                for x in lam:
                    p *= x / (x + s)
                return (1 - p) / s

            val = mpmath.invertlaplace(transform, mpmath.mpf(gamma), method="talbot")
            val = mpmath.re(val)
            if prev is not None and val > 0 and abs(val - prev) <= 1e-14 * abs(val):
                return float(val)
            prev = val
        dps *= 2
    raise ArithmeticError(f"convolution tail did not converge; last change {abs(val - prev)}")


def tail_expm(rates, gamma: float, bits: int | None = None) -> float:
    """``e_1' expm(Q gamma) 1`` for the bidiagonal stage generator ``Q``.

    With ``bits=None`` scipy's scaling-and-squaring Pade expm is used in
    double precision; otherwise mpmath's expm at ``bits`` of precision.
    """
    rates = [float(x) for x in rates]
    c = len(rates)
    if bits is None:
        q = np.diag(-np.asarray(rates))
        q[np.arange(c - 1), np.arange(1, c)] = rates[:-1]
        return float(scipy.linalg.expm(q * gamma)[0].sum())
    with mpmath.workprec(bits):
        q = mpmath.zeros(c)
        for j, x in enumerate(rates):
            q[j, j] = -mpmath.mpf(x)
            if j + 1 < c:
                q[j, j + 1] = mpmath.mpf(x)
        e = mpmath.expm(q * mpmath.mpf(gamma))
        return float(mpmath.fsum(e[0, j] for j in range(c)))
