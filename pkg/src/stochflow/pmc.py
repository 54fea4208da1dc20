"""Permutation Monte Carlo (PMC) with optional jump filters.

One replication draws the jump clocks, executes the reduced jump list in time
order from the base capacities, and stops at the first jump after which the
max flow meets the demand.  Conditional on the order of the executed jumps,
the time of that jump is a sum of independent exponential stages, and the
replication returns its probability of exceeding 1.

A filter may cancel the future jumps of a link whose endpoints can already
exchange ``demand`` units, since such jumps cannot change whether the demand
is met.  Cancelled jumps are removed from the chain entirely: their rates
leave the running total and they contribute no stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .ctmc import JumpRealization, RateTable, build_rates, draw_times, realize, reduce_jumps
from .maxflow import (
    FlowNetwork,
    FlowState,
    all_pairs_max_flow,
    augment,
    flow_from_scratch,
    gusfield,
    max_flow,
    raise_link,
    tree_all_pairs,
)
from .network import ModelError, NetworkModel
from .phasetype import tail, tail_fast

__all__ = [
    "FilterConfig",
    "PmcRunRecord",
    "FunctionalSample",
    "PmcSampler",
    "pmc_sample",
    "filter_single",
    "filter_all",
    "functional_estimate",
    "check_feasible",
]

MODES = {"none": 0, "single": 1, "all": 2}


@dataclass(frozen=True)
class FilterConfig:
    mode: str = "none"
    nu: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"filter mode must be one of {sorted(MODES)}, got {self.mode!r}")
        if int(self.nu) != self.nu or self.nu < 1:
            raise ValueError(f"filter period must be a positive integer, got {self.nu}")


@dataclass
class PmcRunRecord:
    """Outcome of one PMC replication.

    ``stage_rates`` are the exponential rates in effect before each executed
    jump, so ``W = tail(stage_rates, 1)``.  ``critical_index`` counts
    positions of the reduced jump list consumed, including cancelled ones.
    """

    W: float
    stage_rates: np.ndarray
    critical_index: int
    executed: int
    deactivated: int
    flow_calls: int

    @property
    def stages(self) -> int:
        return self.stage_rates.shape[0]


def check_feasible(model: NetworkModel) -> None:
    top = max_flow(model, model.top_capacities(), limit=model.demand)
    if top.value < model.demand:
        raise ModelError(
            f"the demand {model.demand} exceeds the max flow {top.value} at top capacities"
        )


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True, nogil=True)
def _cancel_link(i, link_ptr, link_pos, active, j_rate):
    """Cancel every still-active jump of link ``i``; return (count, rate removed)."""
    n = 0
    removed = 0.0
    for p in range(link_ptr[i], link_ptr[i + 1]):
        q = link_pos[p]
        if active[q]:
            active[q] = False
            removed += j_rate[q]
            n += 1
    return n, removed


@njit(cache=True, nogil=True)
def _pair_flow(caps, directed, head, adj_ptr, adj_arc, v, w, d, res, prev, queue):
    return flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, v, w, d, prev, queue)


@njit(cache=True, nogil=True)
def execute(n, j_link, j_level, j_rate, level_ptr, levels, ends, directed,
            head, adj_ptr, adj_arc, s, t, d, mode, nu, stage_rates, counters):
    """Run the reduced jump list until the flow reaches ``d``.

    Fills ``stage_rates`` and ``counters`` = (critical index, executed,
    cancelled, max-flow calls); returns the number of stages, or -1 if the
    list runs out first.
    """
    m = level_ptr.shape[0] - 1
    nodes = adj_ptr.shape[0] - 1
    caps = np.empty(m, np.int64)
    for i in range(m):
        caps[i] = levels[level_ptr[i]]
    res = np.zeros(2 * m, np.int64)
    scratch = np.zeros(2 * m, np.int64)
    prev = np.empty(nodes, np.int64)
    queue = np.empty(nodes, np.int64)
    active = np.ones(n, np.bool_)
    # positions of each link's jumps, in time order
    link_ptr = np.zeros(m + 1, np.int64)
    for q in range(n):
        link_ptr[j_link[q] + 1] += 1
    for i in range(m):
        link_ptr[i + 1] += link_ptr[i]
    fill = link_ptr[:-1].copy()
    link_pos = np.empty(n, np.int64)
    for q in range(n):
        link_pos[fill[j_link[q]]] = q
        fill[j_link[q]] += 1
    parent = np.empty(nodes, np.int64)
    weight = np.empty(nodes, np.int64)
    mark = np.zeros(nodes, np.bool_)
    fmat = np.empty((nodes, nodes), np.int64)

    psi = flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, s, t, d, prev, queue)
    calls = 1
    stages = 0
    executed = 0
    cancelled = 0
    j = 0
    while psi < d:
        if j >= n:
            return -1
        q = j
        j += 1
        if not active[q]:
            continue
        # rate of the chain: all jumps from position q on that are still active
        lam = 0.0
        for r in range(q, n):
            if active[r]:
                lam += j_rate[r]
        stage_rates[stages] = lam
        stages += 1
        active[q] = False
        i = j_link[q]
        new = levels[level_ptr[i] + j_level[q]]
        raise_link(res, i, new - caps[i], directed)
        caps[i] = new
        psi += augment(res, head, adj_ptr, adj_arc, s, t, d - psi, prev, queue)
        executed += 1
        if psi >= d:
            break
        if mode == 1:
            calls += 1
            if _pair_flow(caps, directed, head, adj_ptr, adj_arc, ends[i, 0], ends[i, 1],
                          d, scratch, prev, queue) >= d:
                c, _ = _cancel_link(i, link_ptr, link_pos, active, j_rate)
                cancelled += c
        elif mode == 2 and j % nu == 0:
            if directed:
                for e in range(m):
                    calls += 1
                    if _pair_flow(caps, directed, head, adj_ptr, adj_arc, ends[e, 0],
                                  ends[e, 1], d, scratch, prev, queue) >= d:
                        c, _ = _cancel_link(e, link_ptr, link_pos, active, j_rate)
                        cancelled += c
            else:
                calls += gusfield(caps, head, adj_ptr, adj_arc, parent, weight, scratch,
                                  prev, queue, mark)
                tree_all_pairs(parent, weight, fmat)
                for e in range(m):
                    if fmat[ends[e, 0], ends[e, 1]] >= d:
                        c, _ = _cancel_link(e, link_ptr, link_pos, active, j_rate)
                        cancelled += c
    counters[0] = j
    counters[1] = executed
    counters[2] = cancelled
    counters[3] = calls
    return stages


@njit(cache=True, nogil=True)
def trajectory(n, j_link, j_level, j_rate, level_ptr, levels, directed,
               head, adj_ptr, adj_arc, s, t, d_hi, stage_rates, flows):
    """Execute jumps until the flow reaches ``d_hi``; record the flow after each one."""
    m = level_ptr.shape[0] - 1
    nodes = adj_ptr.shape[0] - 1
    caps = np.empty(m, np.int64)
    for i in range(m):
        caps[i] = levels[level_ptr[i]]
    res = np.zeros(2 * m, np.int64)
    prev = np.empty(nodes, np.int64)
    queue = np.empty(nodes, np.int64)
    psi = flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, s, t, d_hi, prev, queue)
    flows[0] = psi
    lam = 0.0
    for q in range(n):
        lam += j_rate[q]
    q = 0
    while psi < d_hi:
        if q >= n:
            return -1
        stage_rates[q] = lam
        lam -= j_rate[q]
        i = j_link[q]
        new = levels[level_ptr[i] + j_level[q]]
        raise_link(res, i, new - caps[i], directed)
        caps[i] = new
        psi += augment(res, head, adj_ptr, adj_arc, s, t, d_hi - psi, prev, queue)
        q += 1
        flows[q] = psi
    return q


@njit(cache=True, nogil=True)
def pmc_block(rng, count, rates, jump_ptr, level_ptr, levels, ends, directed, head, adj_ptr,
              adj_arc, s, t, d, mode, nu, rtol, w, nst, stage_buf, y, jl, jk, jt, jr, counters):
    """``count`` replications in a row.

    ``w[r]`` is -1 when the double-precision tail is not accurate enough; the
    stages are then left in ``stage_buf[r, :nst[r]]`` for the caller.
    Returns the number of replications done (short only on exhaustion).
    """
    for r in range(count):
        draw_times(rng, rates, y)
        n = reduce_jumps(jump_ptr, rates, y, jl, jk, jt, jr)
        c = execute(n, jl, jk, jr, level_ptr, levels, ends, directed, head, adj_ptr, adj_arc,
                    s, t, d, mode, nu, stage_buf[r], counters)
        nst[r] = c
        if c < 0:
            return r
        w[r] = tail_fast(stage_buf[r, :c], 1.0, rtol) if c > 0 else 0.0
    return count


# ---------------------------------------------------------------------------

class PmcSampler:
    """Reusable PMC replication engine for one model.

    Holds the rate table, graph arrays and scratch buffers, so repeated calls
    avoid per-replication setup.  ``sample(rng)`` returns a PmcRunRecord.
    """

    def __init__(self, model: NetworkModel, rates: RateTable | None = None,
                 filter: FilterConfig | None = None, *, check: bool = True):
        if not model.is_normalized():
            raise ModelError("PMC needs capacity levels capped at the demand; "
                             "apply normalize_levels first")
        if check:
            check_feasible(model)
        self.model = model
        self.rates = build_rates(model) if rates is None else rates
        self.filter = filter or FilterConfig()
        self.net = FlowNetwork.from_model(model)
        k = self.rates.kappa
        self._y = np.empty(k)
        self._jl = np.empty(k, np.int64)
        self._jk = np.empty(k, np.int64)
        self._jt = np.empty(k)
        self._jr = np.empty(k)
        self._stages = np.empty(k)
        self._counters = np.zeros(4, np.int64)

    def run_stages(self, rng: np.random.Generator):
        rt = self.rates
        draw_times(rng, rt.rates, self._y)
        n = reduce_jumps(rt.jump_ptr, rt.rates, self._y, self._jl, self._jk, self._jt, self._jr)
        return self._execute(n)

    def _execute(self, n):
        rt, net, model = self.rates, self.net, self.model
        c = execute(n, self._jl, self._jk, self._jr, rt.level_ptr, rt.levels, net.endpoints,
                    net.directed, net.head, net.adj_ptr, net.adj_arc, model.source,
                    model.sink, model.demand, MODES[self.filter.mode], self.filter.nu,
                    self._stages, self._counters)
        if c < 0:
            raise ModelError("jump list exhausted before the demand was met")
        return self._stages[:c].copy(), self._counters.copy()

    def record(self, stages, counters) -> PmcRunRecord:
        w = tail(stages, 1.0) if stages.shape[0] else 0.0
        return PmcRunRecord(w, stages, int(counters[0]), int(counters[1]),
                            int(counters[2]), int(counters[3]))

    def sample(self, rng: np.random.Generator) -> PmcRunRecord:
        return self.record(*self.run_stages(rng))

    def sample_block(self, rng: np.random.Generator, count: int, rtol: float = 1e-10) -> np.ndarray:
        """``count`` values of W from one generator, mostly inside compiled code."""
        rt, net, model = self.rates, self.net, self.model
        w = np.empty(count)
        nst = np.empty(count, np.int64)
        buf = np.empty((count, rt.kappa))
        done = pmc_block(rng, count, rt.rates, rt.jump_ptr, rt.level_ptr, rt.levels,
                         net.endpoints, net.directed, net.head, net.adj_ptr, net.adj_arc,
                         model.source, model.sink, model.demand, MODES[self.filter.mode],
                         self.filter.nu, rtol, w, nst, buf, self._y, self._jl, self._jk,
                         self._jt, self._jr, self._counters)
        if done < count:
            raise ModelError("jump list exhausted before the demand was met")
        for r in np.flatnonzero(w < 0.0):
            w[r] = tail(buf[r, :nst[r]], 1.0, rtol=rtol)
        return w

    def sample_realization(self, realization: JumpRealization) -> PmcRunRecord:
        """Replication on a given jump list (its ``active`` flags are ignored)."""
        n = realization.size
        self._jl[:n] = realization.link
        self._jk[:n] = realization.level
        self._jr[:n] = realization.rate
        return self.record(*self._execute(n))


def pmc_sample(model: NetworkModel, rates: RateTable | None, filter: FilterConfig | None,
               rng: np.random.Generator) -> PmcRunRecord:
    """One PMC replication; see :class:`PmcSampler` for repeated use."""
    return PmcSampler(model, rates, filter).sample(rng)


def _cancel(realization: JumpRealization, i: int) -> float:
    pos = realization.positions_of(i)
    pos = pos[realization.active[pos]]
    realization.active[pos] = False
    return float(realization.rate[pos].sum())


def filter_single(state: FlowState, link: int, realization: JumpRealization,
                  demand: int) -> float:
    """Cancel link ``link``'s remaining jumps if its endpoints can exchange ``demand``.

    The pair flow is computed from scratch on the state's capacities.  Returns
    the total rate removed from the chain (0 when nothing is cancelled).
    """
    v, w = state.network.endpoints[link]
    f = max_flow(state.network, state.capacities, int(v), int(w), limit=demand)
    if f.value >= demand:
        return _cancel(realization, link)
    return 0.0


def filter_all(state: FlowState, step: int, realization: JumpRealization, nu: int,
               demand: int) -> float:
    """Every ``nu`` steps, cancel the jumps of every link whose endpoints can exchange ``demand``."""
    if step % nu:
        return 0.0
    net = state.network
    removed = 0.0
    if net.directed:
        for i, (v, w) in enumerate(net.endpoints):
            if max_flow(net, state.capacities, int(v), int(w), limit=demand).value >= demand:
                removed += _cancel(realization, i)
        return removed
    f = all_pairs_max_flow(net, state.capacities).matrix()
    for i, (v, w) in enumerate(net.endpoints):
        if f[v, w] >= demand:
            removed += _cancel(realization, i)
    return removed


@dataclass
class FunctionalSample:
    """PMC sample of ``u(d)`` for every demand ``d`` up to ``d_hi`` from one draw.

    ``flows[j]`` is the max flow after ``j`` executed jumps; for a demand
    ``d`` the critical count is the first ``j`` with ``flows[j] >= d`` and
    ``W(d) = tail(stage_rates[:j], 1)`` (zero when ``j == 0``).
    """

    flows: np.ndarray
    stage_rates: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def critical(self, d: int) -> int:
        return int(np.searchsorted(self.flows, d, side="left"))

    def __call__(self, d: int) -> float:
        j = self.critical(d)
        if j >= self.flows.shape[0]:
            raise ValueError(f"demand {d} lies beyond the recorded trajectory")
        if j not in self._cache:
            self._cache[j] = tail(self.stage_rates[:j], 1.0) if j else 0.0
        return self._cache[j]

    def breakpoints(self) -> list[tuple[int, float]]:
        """``(flow, W)`` pairs: ``W(d)`` holds for ``flows[j-1] < d <= flows[j]``."""
        out = []
        for j in range(1, self.flows.shape[0]):
            if self.flows[j] > self.flows[j - 1]:
                out.append((int(self.flows[j]), self(int(self.flows[j]))))
        return out


def functional_estimate(model: NetworkModel, rates: RateTable | None,
                        rng: np.random.Generator, d_hi: int | None = None) -> FunctionalSample:
    """One trajectory giving PMC samples for all demands ``<= d_hi``.

    ``model`` must be normalized against ``d_hi`` (its own demand by
    default).  Filters are not applied since they depend on the demand.
    """
    d_hi = model.demand if d_hi is None else int(d_hi)
    if any(l.levels[-1] > d_hi for l in model.links):
        raise ModelError("capacity levels must be capped at d_hi")
    check_feasible(model.with_demand(d_hi))
    rt = build_rates(model) if rates is None else rates
    net = FlowNetwork.from_model(model)
    y = np.empty(rt.kappa)
    draw_times(rng, rt.rates, y)
    real = realize(rt, y)
    n = real.size
    stages = np.empty(n)
    flows = np.empty(n + 1, np.int64)
    c = trajectory(n, real.link, real.level, real.rate, rt.level_ptr, rt.levels, net.directed,
                   net.head, net.adj_ptr, net.adj_arc, model.source, model.sink, d_hi,
                   stages, flows)
    if c < 0:
        raise ModelError("jump list exhausted before d_hi was met")
    return FunctionalSample(flows[:c + 1].copy(), stages[:c].copy())
