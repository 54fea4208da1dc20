"""Generalized splitting (GS) on the vector of jump clocks.

The state is the full clock vector ``Y`` (one clock per link level, nothing
reduced).  ``T_C(Y)`` is the first time the rising capacities carry the
demand, and the rare event is ``T_C > 1``.  Given levels
``0 = g_0 < g_1 < ... < g_tau = 1``, each state surviving level ``g_t`` is
split into ``s`` states by ``s`` consecutive Gibbs passes that keep
``T_C > g_t``, and the survivors of ``g_{t+1}`` go on.  The estimator is
``N / s**(tau - 1)`` where ``N`` counts the chains ending above 1.

Note that ``T_C > g`` holds exactly when the max flow at the capacities of
time ``g`` is below the demand, which is how every check here is done.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .ctmc import RateTable, build_rates, draw_exponential, draw_times, levels_at
from .maxflow import FlowNetwork, augment, flow_from_scratch, raise_link
from .network import ModelError, NetworkModel
from .pmc import check_feasible

__all__ = [
    "SplittingSchedule",
    "GsState",
    "GsEngine",
    "pilot_levels",
    "gibbs_pass",
    "gs_sample",
    "ExtinctionError",
]


class ExtinctionError(RuntimeError):
    """No pilot state survived a level; a larger pilot size is needed."""


@dataclass(frozen=True)
class SplittingSchedule:
    """Levels on ``T_C`` plus the splitting factor and pilot settings that produced them."""

    levels: tuple[float, ...]
    s: int = 2
    n0: int = 500
    seed: int | None = None
    pilot_time_s: float = field(default=0.0, compare=False)

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", lv)
        if len(lv) < 2 or lv[0] != 0.0 or lv[-1] != 1.0:
            raise ValueError(f"levels must run from 0 to exactly 1, got {lv}")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("levels must be strictly increasing")
        if int(self.s) != self.s or self.s < 2:
            raise ValueError(f"splitting factor must be an integer >= 2, got {self.s}")

    @property
    def tau(self) -> int:
        return len(self.levels) - 1

    def to_dict(self) -> dict:
        return {"levels": list(self.levels), "s": self.s, "n0": self.n0, "seed": self.seed}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "SplittingSchedule":
        return cls(tuple(doc["levels"]), int(doc.get("s", 2)), int(doc.get("n0", 500)),
                   doc.get("seed"))

    @classmethod
    def load(cls, path: str | Path) -> "SplittingSchedule":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True, nogil=True)
def critical_time(y, jump_ptr, level_ptr, levels, directed, head, adj_ptr, adj_arc, s, t, d,
                  order, caps, lev, res, prev, queue):
    """``T_C(y)``: the clock at which the flow first reaches ``d`` (0 if it already does)."""
    m = jump_ptr.shape[0] - 1
    for i in range(m):
        lev[i] = 0
        caps[i] = levels[level_ptr[i]]
    psi = flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, s, t, d, prev, queue)
    if psi >= d:
        return 0.0
    order[:] = np.argsort(y, kind="mergesort")
    for p in range(order.shape[0]):
        q = order[p]
        # owner link of clock q
        i = np.searchsorted(jump_ptr, q, side="right") - 1
        k = q - jump_ptr[i] + 1
        if k <= lev[i]:
            continue
        new = levels[level_ptr[i] + k]
        raise_link(res, i, new - caps[i], directed)
        caps[i] = new
        lev[i] = k
        psi += augment(res, head, adj_ptr, adj_arc, s, t, d - psi, prev, queue)
        if psi >= d:
            return y[q]
    return np.inf


@njit(cache=True, nogil=True)
def survives(y, g, jump_ptr, level_ptr, levels, directed, head, adj_ptr, adj_arc, s, t, d,
             caps, lev, res, prev, queue):
    """``T_C(y) > g``, i.e. the flow at the capacities of time ``g`` is below ``d``."""
    levels_at(jump_ptr, y, g, lev)
    for i in range(lev.shape[0]):
        caps[i] = levels[level_ptr[i] + lev[i]]
    return flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, s, t, d,
                             prev, queue) < d


@njit(cache=True, nogil=True)
def gibbs_kernel(rng, y, g, rates, jump_ptr, level_ptr, levels, directed, head, adj_ptr,
                 adj_arc, s, t, d, perm, caps, lev, res, snap, prev, queue):
    """One systematic Gibbs pass over all clocks, conditional on ``T_C > g``.

    Each clock is redrawn from its law given the others and ``T_C > g``:
    only a clock whose ringing by ``g`` would lift the flow at ``g`` to ``d``
    is constrained, and then to ``(g, inf)``.  Returns the flow at ``g``
    afterwards (below ``d``).
    """
    kappa = y.shape[0]
    levels_at(jump_ptr, y, g, lev)
    for i in range(lev.shape[0]):
        caps[i] = levels[level_ptr[i] + lev[i]]
    psi = flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, s, t, d, prev, queue)
    for q in range(kappa):
        perm[q] = q
    for q in range(kappa - 1, 0, -1):
        r = int(rng.random() * (q + 1))
        if r > q:
            r = q
        tmp = perm[q]
        perm[q] = perm[r]
        perm[r] = tmp
    for p in range(kappa):
        q = perm[p]
        i = np.searchsorted(jump_ptr, q, side="right") - 1
        k = q - jump_ptr[i] + 1
        # highest other level of link i already reached by g
        other = 0
        for r in range(jump_ptr[i], jump_ptr[i + 1]):
            if r != q and y[r] <= g:
                other = r - jump_ptr[i] + 1
        if other > k:
            # a higher level masks this clock at g
            y[q] = draw_exponential(rng, rates[q])
            continue
        if y[q] <= g:
            # link sits at level k; dropping it can only lower the flow
            y[q] = draw_exponential(rng, rates[q])
            if y[q] > g:
                lev[i] = other
                caps[i] = levels[level_ptr[i] + other]
                psi = flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, s, t, d,
                                        prev, queue)
            continue
        # clock beyond g: would reaching level k by g complete the demand?
        delta = levels[level_ptr[i] + k] - caps[i]
        if psi + delta < d:
            y[q] = draw_exponential(rng, rates[q])
            if y[q] <= g:
                raise_link(res, i, delta, directed)
                caps[i] += delta
                lev[i] = k
                psi += augment(res, head, adj_ptr, adj_arc, s, t, d - psi, prev, queue)
            continue
        snap[:] = res
        raise_link(res, i, delta, directed)
        pushed = augment(res, head, adj_ptr, adj_arc, s, t, d - psi, prev, queue)
        if psi + pushed >= d:
            y[q] = g + draw_exponential(rng, rates[q])
            res[:] = snap
            continue
        y[q] = draw_exponential(rng, rates[q])
        if y[q] <= g:
            caps[i] += delta
            lev[i] = k
            psi += pushed
        else:
            res[:] = snap
    return psi


@njit(cache=True, nogil=True)
def replicate_kernel(rng, levels_g, split, rates, jump_ptr, level_ptr, levels, directed, head,
                     adj_ptr, adj_arc, s, t, d, stack_y, stack_t, perm, caps, lev, res, snap,
                     prev, queue, counters):
    """One GS replication; returns ``N``.  ``counters`` gets (passes, max stack depth)."""
    tau = levels_g.shape[0] - 1
    y = stack_y[0]
    draw_times(rng, rates, y)
    passes = 0
    deepest = 0
    if not survives(y, levels_g[1], jump_ptr, level_ptr, levels, directed, head, adj_ptr,
                    adj_arc, s, t, d, caps, lev, res, prev, queue):
        counters[0] = 0
        counters[1] = 0
        return 0
    top = 1
    stack_t[0] = 1
    hits = 0
    cur = np.empty_like(y)
    while top > 0:
        top -= 1
        lvl = stack_t[top]
        if lvl == tau:
            hits += 1
            continue
        cur[:] = stack_y[top]
        g = levels_g[lvl]
        g_next = levels_g[lvl + 1]
        for r in range(split):
            gibbs_kernel(rng, cur, g, rates, jump_ptr, level_ptr, levels, directed, head,
                         adj_ptr, adj_arc, s, t, d, perm, caps, lev, res, snap, prev, queue)
            passes += 1
            if survives(cur, g_next, jump_ptr, level_ptr, levels, directed, head, adj_ptr,
                        adj_arc, s, t, d, caps, lev, res, prev, queue):
                stack_y[top][:] = cur
                stack_t[top] = lvl + 1
                top += 1
                if top > deepest:
                    deepest = top
    counters[0] = passes
    counters[1] = deepest
    return hits


@njit(cache=True, nogil=True)
def gs_block(rng, count, levels_g, split, rates, jump_ptr, level_ptr, levels, directed, head,
             adj_ptr, adj_arc, s, t, d, stack_y, stack_t, perm, caps, lev, res, snap, prev,
             queue, counters, hits, passes):
    for r in range(count):
        hits[r] = replicate_kernel(rng, levels_g, split, rates, jump_ptr, level_ptr, levels,
                                   directed, head, adj_ptr, adj_arc, s, t, d, stack_y, stack_t,
                                   perm, caps, lev, res, snap, prev, queue, counters)
        passes[r] = counters[0]


# ---------------------------------------------------------------------------

@dataclass
class GsState:
    """A clock vector with its critical time."""

    y: np.ndarray
    t_c: float


class GsEngine:
    """Model-bound GS machinery: graph arrays, rates and scratch buffers."""

    def __init__(self, model: NetworkModel, rates: RateTable | None = None, *,
                 check: bool = True):
        if not model.is_normalized():
            raise ModelError("GS needs capacity levels capped at the demand; "
                             "apply normalize_levels first")
        if check:
            check_feasible(model)
        self.model = model
        self.rates = build_rates(model) if rates is None else rates
        self.net = FlowNetwork.from_model(model)
        m, k, n = self.rates.m, self.rates.kappa, model.nodes
        self._perm = np.empty(k, np.int64)
        self._order = np.empty(k, np.int64)
        self._caps = np.empty(m, np.int64)
        self._lev = np.empty(m, np.int64)
        self._res = np.empty(2 * m, np.int64)
        self._snap = np.empty(2 * m, np.int64)
        self._prev = np.empty(n, np.int64)
        self._queue = np.empty(n, np.int64)
        self._counters = np.zeros(2, np.int64)

    def _graph(self):
        rt, net, mo = self.rates, self.net, self.model
        return (rt.jump_ptr, rt.level_ptr, rt.levels, net.directed, net.head, net.adj_ptr,
                net.adj_arc, mo.source, mo.sink, mo.demand)

    def fresh(self, rng: np.random.Generator) -> GsState:
        y = np.empty(self.rates.kappa)
        draw_times(rng, self.rates.rates, y)
        return GsState(y, self.critical_time(y))

    def critical_time(self, y: np.ndarray) -> float:
        return float(critical_time(y, *self._graph(), self._order, self._caps, self._lev,
                                   self._res, self._prev, self._queue))

    def survives(self, y: np.ndarray, g: float) -> bool:
        return bool(survives(y, g, *self._graph(), self._caps, self._lev, self._res,
                             self._prev, self._queue))

    def gibbs(self, y: np.ndarray, g: float, rng: np.random.Generator) -> None:
        """In-place Gibbs pass at level ``g``."""
        gibbs_kernel(rng, y, g, self.rates.rates, *self._graph(), self._perm, self._caps,
                     self._lev, self._res, self._snap, self._prev, self._queue)

    def _stack(self, schedule: SplittingSchedule):
        # depth-first traversal holds at most s - 1 pending siblings per level
        depth = schedule.tau * (schedule.s - 1) + 2
        return np.empty((depth, self.rates.kappa)), np.empty(depth, np.int64)

    def replicate(self, schedule: SplittingSchedule, rng: np.random.Generator):
        """Returns ``(N, passes)`` for one replication."""
        stack_y, stack_t = self._stack(schedule)
        n = replicate_kernel(rng, np.asarray(schedule.levels), schedule.s, self.rates.rates,
                             *self._graph(), stack_y, stack_t, self._perm, self._caps,
                             self._lev, self._res, self._snap, self._prev, self._queue,
                             self._counters)
        return int(n), int(self._counters[0])

    def sample_block(self, schedule: SplittingSchedule, rng: np.random.Generator,
                     count: int) -> np.ndarray:
        """``count`` values of W from one generator."""
        stack_y, stack_t = self._stack(schedule)
        hits = np.empty(count, np.int64)
        passes = np.empty(count, np.int64)
        gs_block(rng, count, np.asarray(schedule.levels), schedule.s, self.rates.rates,
                 *self._graph(), stack_y, stack_t, self._perm, self._caps, self._lev,
                 self._res, self._snap, self._prev, self._queue, self._counters, hits, passes)
        return hits / float(schedule.s) ** (schedule.tau - 1)

    def sample(self, schedule: SplittingSchedule, rng: np.random.Generator) -> float:
        n, _ = self.replicate(schedule, rng)
        return n / float(schedule.s) ** (schedule.tau - 1)


def gibbs_pass(engine: GsEngine, state: GsState, level: float,
               rng: np.random.Generator) -> GsState:
    """New state from one Gibbs pass at ``level``; requires ``state.t_c > level``."""
    if not state.t_c > level:
        raise ValueError(f"state has T_C = {state.t_c} <= level {level}")
    y = state.y.copy()
    engine.gibbs(y, level, rng)
    t_c = engine.critical_time(y)
    assert t_c > level, "Gibbs pass left the conditional set"
    return GsState(y, t_c)


def pilot_levels(model: NetworkModel, rates: RateTable | None = None, s: int = 2,
                 n0: int = 500, rng: np.random.Generator | None = None, *,
                 seed: int | None = None, max_levels: int = 1000) -> SplittingSchedule:
    """Choose levels so that each stage is survived with probability about ``1/s``.

    Each level is the order statistic of the population's ``T_C`` values
    leaving ``ceil(n0/s)`` states above it.  Survivors are grown back to
    ``n0`` states by Gibbs chains at the new level, the chains sharing the
    ``n0`` draws as evenly as possible.  The final level is 1 once the
    order statistic reaches it.
    """
    if s < 2:
        raise ValueError("splitting factor must be at least 2")
    if n0 < 2 * s:
        raise ValueError(f"pilot size {n0} too small for s={s}")
    if rng is None:
        rng = np.random.default_rng(seed)
    engine = model if isinstance(model, GsEngine) else GsEngine(model, rates)
    pop = [engine.fresh(rng) for _ in range(n0)]
    keep = math.ceil(n0 / s)
    levels = [0.0]
    while True:
        tc = np.array([p.t_c for p in pop])
        gamma = float(np.sort(tc)[n0 - keep - 1])
        if gamma >= 1.0:
            levels.append(1.0)
            break
        if len(levels) > max_levels:
            raise ExtinctionError(f"more than {max_levels} levels; is the event this rare?")
        levels.append(gamma)
        elite = [p for p in pop if p.t_c > gamma]
        if not elite:
            raise ExtinctionError(
                f"no pilot state above level {gamma:.6g}; increase n0 (now {n0})")
        share = np.full(len(elite), n0 // len(elite))
        share[: n0 % len(elite)] += 1
        pop = []
        for p, c in zip(elite, share):
            cur = p
            for _ in range(c):
                cur = gibbs_pass(engine, cur, gamma, rng)
                pop.append(cur)
    return SplittingSchedule(tuple(levels), s, n0, seed)


def gs_sample(model: NetworkModel | GsEngine, rates: RateTable | None,
              schedule: SplittingSchedule, rng: np.random.Generator) -> float:
    """One GS replication, ``W = N / s**(tau - 1)``."""
    engine = model if isinstance(model, GsEngine) else GsEngine(model, rates)
    return engine.sample(schedule, rng)
