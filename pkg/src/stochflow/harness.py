"""Replication driver: seeded streams, summary statistics, sweeps and result files.

Replications are processed in fixed blocks of ``block`` consecutive
indices.  Block ``k`` draws from its own Philox substream: the key comes from
the seed and the counter starts at ``k * 2**128``, so substreams never
overlap.  Whichever worker thread runs a block, it sees the same numbers, and
the statistics are reduced over the samples in replication order.  A run is
therefore reproducible bit for bit (timings aside) for any thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit

from .ctmc import build_rates, draw_times, levels_at
from .gs import GsEngine, SplittingSchedule, pilot_levels
from .maxflow import FlowNetwork, flow_from_scratch
from .network import NetworkModel, normalize_levels
from .pmc import FilterConfig, PmcSampler, check_feasible

__all__ = [
    "METHODS",
    "ExperimentConfig",
    "EstimateSummary",
    "substream",
    "run",
    "sweep",
    "write_csv",
    "write_json",
    "write_gnuplot",
    "CSV_COLUMNS",
]

METHODS = ("crude", "pmc", "pmc-single", "pmc-all", "gs")
CSV_COLUMNS = ("method", "epsilon", "n", "seed", "estimate", "re", "wnrv", "time_s")


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run.

    ``nu`` is the FilterAll period; ``s`` and ``n0`` drive the GS pilot
    unless a ``schedule`` is given.  ``epsilons`` is only read by
    :func:`sweep`.  ``threads`` affects speed, never results; ``block`` is
    the substream granularity and does affect them.
    """

    method: str = "pmc"
    n: int = 50_000
    seed: int = 0
    nu: int = 5
    s: int = 2
    n0: int = 500
    schedule: SplittingSchedule | None = None
    epsilons: tuple[float, ...] = ()
    threads: int = 1
    block: int = 256

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.block < 1:
            raise ValueError("block must be at least 1")
        FilterConfig("all", self.nu)
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))


@dataclass
class EstimateSummary:
    """Statistics of ``n`` replications.

    ``re = sqrt(variance / n) / estimate`` and ``wnrv = time_s * re**2``,
    where ``time_s`` sums the wall time spent producing the samples, block by
    block (no model setup, no GS pilot; the pilot is timed in
    ``pilot_time_s``).
    ``re`` and ``wnrv`` are NaN when the estimate is 0.
    """

    method: str
    n: int
    seed: int
    estimate: float
    variance: float
    re: float
    wnrv: float
    time_s: float
    model_digest: str
    epsilon: float | None = None
    pilot_time_s: float = 0.0
    levels: tuple[float, ...] | None = None
    extra: dict = field(default_factory=dict)

    TIMING = ("time_s", "wnrv", "pilot_time_s")

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.n)

    def to_dict(self, timing: bool = True) -> dict:
        doc = asdict(self)
        if doc["levels"] is not None:
            doc["levels"] = list(doc["levels"])
        for k, v in doc.items():
            if isinstance(v, float) and not math.isfinite(v):
                doc[k] = None
        if not timing:
            for k in self.TIMING:
                doc.pop(k)
        return doc

    def to_json(self, timing: bool = True, **kw) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, **kw)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


def substream(seed: int, k: int) -> np.random.Generator:
    """Generator for block ``k`` of a run seeded with ``seed``."""
    key = np.random.SeedSequence(seed).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, k, 0]))


def pilot_rng(seed: int) -> np.random.Generator:
    """Generator of the GS pilot, disjoint from every block substream."""
    key = np.random.SeedSequence(seed, spawn_key=(1,)).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# per-method samplers; each worker thread builds its own

@njit(cache=True, nogil=True)
def _crude_block(rng, count, rates, jump_ptr, level_ptr, levels, directed, head, adj_ptr,
                 adj_arc, s, t, d, y, lev, caps, res, prev, queue, out):
    for r in range(count):
        draw_times(rng, rates, y)
        levels_at(jump_ptr, y, 1.0, lev)
        for i in range(lev.shape[0]):
            caps[i] = levels[level_ptr[i] + lev[i]]
        psi = flow_from_scratch(res, caps, directed, head, adj_ptr, adj_arc, s, t, d,
                                prev, queue)
        out[r] = 1.0 if psi < d else 0.0


class _Crude:
    """Indicator of failure at time 1 of the capacity-raising chain."""

    def __init__(self, model, rates):
        net = FlowNetwork.from_model(model)
        m = model.m
        self.args = (rates.rates, rates.jump_ptr, rates.level_ptr, rates.levels, net.directed,
                     net.head, net.adj_ptr, net.adj_arc, model.source, model.sink, model.demand,
                     np.empty(rates.kappa), np.empty(m, np.int64), np.empty(m, np.int64),
                     np.empty(2 * m, np.int64), np.empty(model.nodes, np.int64),
                     np.empty(model.nodes, np.int64))

    def __call__(self, rng, count):
        out = np.empty(count)
        _crude_block(rng, count, *self.args, out)
        return out


class _Pmc:
    def __init__(self, model, rates, filt):
        self.s = PmcSampler(model, rates, filt, check=False)

    def __call__(self, rng, count):
        return self.s.sample_block(rng, count)


class _Gs:
    def __init__(self, model, rates, schedule):
        self.e = GsEngine(model, rates, check=False)
        self.schedule = schedule

    def __call__(self, rng, count):
        return self.e.sample_block(self.schedule, rng, count)


def _factory(config: ExperimentConfig, model: NetworkModel, rates, schedule):
    m = config.method
    if m == "crude":
        return lambda: _Crude(model, rates)
    if m == "gs":
        return lambda: _Gs(model, rates, schedule)
    filt = {"pmc": FilterConfig("none"), "pmc-single": FilterConfig("single"),
            "pmc-all": FilterConfig("all", config.nu)}[m]
    return lambda: _Pmc(model, rates, filt)


class _Worker:
    """Runs blocks with one sampler per thread; samplers are never shared."""

    def __init__(self, make, seed, w, dt):
        self.make, self.seed, self.w, self.dt = make, seed, w, dt
        self.local = threading.local()

    def __call__(self, k, lo, hi):
        sampler = getattr(self.local, "sampler", None)
        if sampler is None:
            sampler = self.local.sampler = self.make()
        rng = substream(self.seed, k)
        t0 = time.perf_counter()
        self.w[lo:hi] = sampler(rng, hi - lo)
        self.dt[k] = time.perf_counter() - t0


def run(config: ExperimentConfig, model: NetworkModel, *, epsilon: float | None = None,
        progress: Callable[[int, int], None] | None = None) -> EstimateSummary:
    """Run ``config.n`` replications of ``config.method`` on ``model``.

    The model is normalized first; models whose top capacities cannot carry
    the demand are rejected.  For GS without a schedule, a pilot run fixes
    the levels once, seeded independently of the replications.
    """
    model = normalize_levels(model)
    check_feasible(model)
    rates = build_rates(model)
    schedule = config.schedule
    pilot_time = 0.0
    if config.method == "gs" and schedule is None:
        t0 = time.perf_counter()
        schedule = pilot_levels(model, rates, config.s, config.n0, pilot_rng(config.seed),
                                seed=config.seed)
        pilot_time = time.perf_counter() - t0
    n = config.n
    w = np.empty(n)
    blocks = [(lo, min(lo + config.block, n)) for lo in range(0, n, config.block)]
    dt = np.empty(len(blocks))
    work = _Worker(_factory(config, model, rates, schedule), config.seed, w, dt)
    if config.threads == 1:
        for k, (lo, hi) in enumerate(blocks):
            work(k, lo, hi)
            if progress:
                progress(hi, n)
    else:
        with ThreadPoolExecutor(config.threads) as pool:
            futures = [pool.submit(work, k, lo, hi) for k, (lo, hi) in enumerate(blocks)]
            for f, (_, hi) in zip(futures, blocks):
                f.result()
                if progress:
                    progress(hi, n)
    return summarize(config.method, w, dt, config.seed, model.digest(), epsilon=epsilon,
                     pilot_time=pilot_time,
                     levels=schedule.levels if config.method == "gs" else None)


def summarize(method: str, w: np.ndarray, dt: np.ndarray, seed: int, digest: str, *,
              epsilon=None, pilot_time: float = 0.0, levels=None) -> EstimateSummary:
    n = w.shape[0]
    mean = float(np.mean(w))
    var = float(np.var(w, ddof=1)) if n > 1 else 0.0
    total = float(np.sum(dt))
    re = math.sqrt(var / n) / mean if mean > 0 else math.nan
    return EstimateSummary(method, n, seed, mean, var, re, total * re * re, total, digest,
                           epsilon, pilot_time, None if levels is None else tuple(levels))


def sweep(config: ExperimentConfig, family: Callable[[float], NetworkModel],
          epsilons: Sequence[float] | None = None, **kw) -> list[EstimateSummary]:
    """One :func:`run` per epsilon; ``family(eps)`` builds the model.

    A GS schedule in ``config`` would only fit one epsilon, so GS sweeps
    always run a fresh pilot per point.
    """
    eps_list = config.epsilons if epsilons is None else tuple(epsilons)
    if config.method == "gs" and config.schedule is not None and len(eps_list) > 1:
        raise ValueError("a fixed GS schedule cannot be shared across a sweep")
    return [run(config, family(eps), epsilon=eps, **kw) for eps in eps_list]


# ---------------------------------------------------------------------------
# output

def _sink(out):
    if out is None:
        return io.StringIO(), True
    if hasattr(out, "write"):
        return out, False
    return open(out, "w", newline=""), False


def _finish(fh, buffered, out):
    if buffered:
        return fh.getvalue()
    if not hasattr(out, "write"):
        fh.close()
    return None


def write_csv(summaries: Iterable[EstimateSummary], out=None):
    """CSV with :data:`CSV_COLUMNS`; returns the text when ``out`` is None."""
    fh, buffered = _sink(out)
    wr = csv.DictWriter(fh, CSV_COLUMNS, lineterminator="\n")
    wr.writeheader()
    for s in summaries:
        row = s.row()
        for k, v in row.items():
            if isinstance(v, float):
                row[k] = "" if not math.isfinite(v) else repr(v)
            elif v is None:
                row[k] = ""
        wr.writerow(row)
    return _finish(fh, buffered, out)


def write_json(summaries: Iterable[EstimateSummary], out=None, *, extra: dict | None = None,
               timing: bool = True):
    doc = dict(extra or {})
    doc["results"] = [s.to_dict(timing) for s in summaries]
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        return text
    if hasattr(out, "write"):
        out.write(text)
    else:
        Path(out).write_text(text)
    return None


def write_gnuplot(summaries: Iterable[EstimateSummary], out=None):
    """Whitespace-separated columns ``epsilon estimate re wnrv time_s``, one block per method."""
    fh, buffered = _sink(out)
    by_method: dict[str, list[EstimateSummary]] = {}
    for s in summaries:
        by_method.setdefault(s.method, []).append(s)
    for k, (method, rows) in enumerate(by_method.items()):
        if k:
            fh.write("\n\n")
        fh.write(f"# method {method}\n# epsilon estimate re wnrv time_s\n")
        for s in sorted(rows, key=lambda s: -(s.epsilon or 0.0)):
            vals = [s.epsilon if s.epsilon is not None else math.nan, s.estimate, s.re,
                    s.wnrv, s.time_s]
            fh.write(" ".join("nan" if not math.isfinite(v) else f"{v:.10g}" for v in vals))
            fh.write("\n")
    return _finish(fh, buffered, out)
