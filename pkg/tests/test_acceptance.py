"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import functools
import math
import time

import numpy as np
import pytest
from numba import njit
from scipy import stats

from stochflow import (
    FlowNetwork,
    Link,
    NetworkModel,
    ParametricFamily,
    all_pairs_max_flow,
    build_rates,
    dodecahedron,
    exact_unreliability,
    lattice,
    max_flow,
    tail,
)
from stochflow.ctmc import draw_times, levels_at
from stochflow.harness import ExperimentConfig, run
from stochflow.oracle import min_cut_by_enumeration, tail_by_convolution, tail_expm

from nets import SUITE, random_graph, within

pytestmark = pytest.mark.slow

SEED = 2026
N_TABLE = 50_000
DOD_EPS = (1e-4, 1e-5, 1e-6, 1e-7, 1e-8)


def lattice_model(eps):
    return lattice(4, ParametricFamily(0.6, eps, 8), 10)


def dodeca_model(eps):
    return dodecahedron(ParametricFamily(0.7, eps, 4), 5)


@functools.lru_cache(maxsize=None)
def table_run(net, method, eps):
    make = lattice_model if net == "lattice" else dodeca_model
    return run(ExperimentConfig(method, N_TABLE, SEED), make(eps), epsilon=eps)


def band(summary, target):
    """|estimate - target| <= 3 RE estimate, with the measured RE."""
    half = 3 * summary.re * summary.estimate
    return abs(summary.estimate - target) <= half, half


def test_criterion_1_oracle_equivalence(record_acceptance):
    methods = [("crude", 5), ("pmc", 5), ("pmc-single", 5), ("pmc-all", 1), ("pmc-all", 5),
               ("gs", 5)]
    t0 = time.perf_counter()
    bad = []
    for name, make in SUITE.items():
        m = make()
        u = exact_unreliability(m).u
        for method, nu in methods:
            r = run(ExperimentConfig(method, 100_000, SEED, nu=nu), m)
            z = (r.estimate - u) / r.std_error if r.std_error else 0.0
            if not within(r.estimate, u, r.std_error):
                bad.append(f"{name}/{method}/nu={nu}: z={z:+.2f}")
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 120
    detail = f"{len(SUITE)} networks x {len(methods)} methods at n=1e5 in {elapsed:.0f}s"
    if bad:
        detail += "; outside 3 SE: " + ", ".join(bad)
    assert record_acceptance(1, ok, detail), detail


def test_criterion_2_table1(record_acceptance):
    pmc = table_run("lattice", "pmc", 1e-4)
    gs = table_run("lattice", "gs", 1e-4)
    ok_p, half_p = band(pmc, 2.99e-5)
    ok_g, half_g = band(gs, 2.98e-5)
    ok_re = 0.02 <= pmc.re <= 0.05
    detail = (f"PMC {pmc.estimate:.4g} (+-{half_p:.2g}, RE {pmc.re:.3g}) vs 2.99e-5; "
              f"GS {gs.estimate:.4g} (+-{half_g:.2g}, RE {gs.re:.3g}) vs 2.98e-5")
    assert record_acceptance(2, ok_p and ok_g and ok_re, detail), detail


def test_criterion_3_table2(record_acceptance):
    pmc = table_run("dodecahedron", "pmc", 1e-4)
    gs = table_run("dodecahedron", "gs", 1e-8)
    ok_p, half_p = band(pmc, 7.08e-9)
    ok_g, half_g = band(gs, 7.05e-17)
    detail = (f"PMC eps=1e-4 {pmc.estimate:.4g} (+-{half_p:.2g}, RE {pmc.re:.3g}) vs 7.08e-9; "
              f"GS eps=1e-8 {gs.estimate:.4g} (+-{half_g:.2g}, RE {gs.re:.3g}, "
              f"tau {len(gs.levels) - 1}) vs 7.05e-17")
    assert record_acceptance(3, ok_p and ok_g, detail), detail


def test_criterion_4_re_trends(record_acceptance):
    lo, hi = table_run("lattice", "pmc", 1e-4), table_run("lattice", "pmc", 1e-8)
    ok_pmc = hi.re <= 1.5 * lo.re
    res = [table_run("dodecahedron", "gs", e).re for e in DOD_EPS]
    inversions = sum(b < a for a, b in zip(res, res[1:]))
    ok_gs = inversions <= 1
    detail = (f"PMC lattice RE {lo.re:.3g} -> {hi.re:.3g} (ratio {hi.re / lo.re:.2f}); "
              f"GS dodecahedron RE over eps 1e-4..1e-8: "
              + ", ".join(f"{r:.3g}" for r in res) + f" ({inversions} inversions)")
    assert record_acceptance(4, ok_pmc and ok_gs, detail), detail


def random_spec(rng):
    c = int(rng.integers(1, 13))
    rates = list(np.exp(rng.uniform(math.log(0.1), math.log(30.0), c)))
    if c >= 2 and rng.random() < 0.6:
        # a cluster of nearly equal rates with gaps down to 1e-9
        k = int(rng.integers(2, min(c, 5) + 1))
        base = rates[0]
        gaps = 10.0 ** rng.uniform(-9, -3, k - 1)
        rates[:k] = list(base + np.concatenate([[0.0], np.cumsum(gaps)]))
    rates = np.array(rates)
    if len(set(rates.tolist())) < rates.size:
        return random_spec(rng)
    gamma = float(rng.uniform(0.3, 1.5) * np.sum(1 / rates))
    return rates, gamma


def test_criterion_5_phase_type(record_acceptance):
    rng = np.random.default_rng(SEED)
    worst_conv = worst_expm = 0.0
    for _ in range(1000):
        rates, gamma = random_spec(rng)
        t = tail(rates, gamma)
        worst_conv = max(worst_conv, abs(t / tail_by_convolution(rates, gamma) - 1))
        worst_expm = max(worst_expm, abs(t / tail_expm(rates, gamma, bits=128) - 1))
    zero = all(tail(random_spec(rng)[0], 0.0) == 1.0 for _ in range(100))
    mono = True
    for _ in range(20):
        rates, gamma = random_spec(rng)
        vals = [tail(rates, g) for g in np.linspace(0, 3 * gamma, 100)]
        mono &= all(b < a for a, b in zip(vals, vals[1:]))
    ok = worst_conv <= 1e-10 and worst_expm <= 1e-10 and zero and mono
    detail = (f"1000 specs: max rel. error vs convolution {worst_conv:.2g}, "
              f"vs matrix exponential {worst_expm:.2g}; tail(0)=1: {zero}; monotone: {mono}")
    assert record_acceptance(5, ok, detail), detail


def test_criterion_6_maxflow(record_acceptance):
    rng = np.random.default_rng(SEED)
    dual = inc = gus = 0
    for _ in range(300):
        nodes = int(rng.integers(2, 8))
        ends, caps = random_graph(rng, nodes, int(rng.integers(nodes - 1, 11)))
        s, t = (int(x) for x in rng.choice(nodes, 2, replace=False))
        if max_flow(FlowNetwork(nodes, ends), caps, s, t).value != \
                min_cut_by_enumeration(nodes, ends, caps, s, t):
            dual += 1
    for _ in range(1000):
        nodes = int(rng.integers(2, 9))
        ends, caps = random_graph(rng, nodes, int(rng.integers(nodes - 1, 14)), cap_hi=3)
        net = FlowNetwork(nodes, ends)
        s, t = (int(x) for x in rng.choice(nodes, 2, replace=False))
        st = max_flow(net, caps, s, t)
        cur = caps.copy()
        for _ in range(int(rng.integers(1, 10))):
            i = int(rng.integers(net.m))
            cur[i] += int(rng.integers(0, 4))
            st.increase_capacity(i, cur[i])
            if st.value != max_flow(net, cur, s, t).value:
                inc += 1
    for _ in range(50):
        nodes = int(rng.integers(2, 13))
        ends, caps = random_graph(rng, nodes, int(rng.integers(nodes - 1, 2 * nodes + 2)))
        net = FlowNetwork(nodes, ends)
        mat = all_pairs_max_flow(net, caps).matrix()
        for v in range(nodes):
            for w in range(v + 1, nodes):
                if mat[v, w] != max_flow(net, caps, v, w).value:
                    gus += 1
    ok = dual == inc == gus == 0
    detail = (f"duality mismatches {dual}/300, incremental mismatches {inc} over 1000 "
              f"sequences, Gusfield mismatches {gus} over 50 graphs")
    assert record_acceptance(6, ok, detail), detail


@njit(cache=True)
def _time_one_levels(rng, rates, jump_ptr, n, counts):
    y = np.empty(rates.shape[0])
    lev = np.empty(jump_ptr.shape[0] - 1, np.int64)
    for _ in range(n):
        draw_times(rng, rates, y)
        levels_at(jump_ptr, y, 1.0, lev)
        for i in range(lev.shape[0]):
            counts[i, lev[i]] += 1


def test_criterion_7_time_one_law(record_acceptance):
    rng = np.random.default_rng(SEED)
    links = []
    for _ in range(20):
        b = int(rng.integers(1, 11))
        p = rng.dirichlet(np.ones(b + 1)) * 0.95 + 0.05 / (b + 1)
        links.append(Link(0, 1, tuple(range(b + 1)), tuple(p / p.sum())))
    m = NetworkModel(2, links, 0, 1, 1)
    rt = build_rates(m)
    n = 1_000_000
    counts = np.zeros((20, 11), np.int64)
    _time_one_levels(np.random.default_rng(SEED + 1), rt.rates, rt.jump_ptr, n, counts)
    pvals = []
    for i, l in enumerate(links):
        k = len(l.probs)
        pvals.append(stats.chisquare(counts[i, :k], n * np.array(l.probs)).pvalue)
    ok = min(pvals) > 0.001
    detail = f"20 links, 1e6 samples each: smallest chi-square p-value {min(pvals):.3g}"
    assert record_acceptance(7, ok, detail), detail


def test_criterion_8_determinism(record_acceptance):
    m = lattice_model(1e-4)
    same = {}
    for method in ("crude", "pmc", "pmc-single", "pmc-all", "gs"):
        docs = {run(ExperimentConfig(method, 4000, SEED, threads=t), m).to_json(timing=False)
                for t in (1, 4, 8)}
        same[method] = len(docs) == 1
    ok = all(same.values())
    detail = "summary JSON (timing fields excluded) identical for 1, 4, 8 threads: " + \
        ", ".join(f"{k}={v}" for k, v in same.items())
    assert record_acceptance(8, ok, detail), detail
