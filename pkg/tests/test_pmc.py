import math

import numpy as np
import pytest

from stochflow import (
    FilterConfig,
    FlowNetwork,
    Link,
    ModelError,
    NetworkModel,
    ParametricFamily,
    PmcSampler,
    build_rates,
    exact_unreliability,
    filter_all,
    filter_single,
    functional_estimate,
    lattice,
    max_flow,
    normalize_levels,
    pmc_sample,
    sample_jumps,
    tail,
)

from nets import SUITE, bridge, complete5, single_link, within

MODES = [FilterConfig("none"), FilterConfig("single"), FilterConfig("all", 1),
         FilterConfig("all", 5)]


def reference_run(model, real, filt, skipped_stages=False):
    """Plain-Python replication on a given jump list.

    With ``skipped_stages`` a cancelled list position still contributes a
    stage at the current rate; that variant exists only to show it is biased.
    """
    rt = real.rates
    net = FlowNetwork.from_model(model)
    st = max_flow(net, model.base_capacities(), model.source, model.sink, limit=model.demand)
    lam = math.fsum(real.rate)
    stages = []
    j = 0
    while st.value < model.demand:
        q = j
        j += 1
        if not real.active[q]:
            if skipped_stages:
                stages.append(lam)
            continue
        stages.append(lam)
        lam -= real.rate[q]
        real.active[q] = False
        i = int(real.link[q])
        st.increase_capacity(i, rt.link_levels(i)[real.level[q]])
        if st.value >= model.demand:
            break
        if filt.mode == "single":
            lam -= filter_single(st, i, real, model.demand)
        elif filt.mode == "all":
            lam -= filter_all(st, j, real, filt.nu, model.demand)
    return (tail(stages, 1.0) if stages else 0.0), stages


def test_single_link_is_exact():
    eps = 1e-6
    m = single_link(eps)
    rng = np.random.default_rng(0)
    for _ in range(20):
        rec = pmc_sample(m, None, None, rng)
        assert rec.critical_index == 1 and rec.stages == 1
        assert rec.W == pytest.approx(eps, rel=1e-12)


@pytest.mark.parametrize("filt", MODES, ids=lambda f: f"{f.mode}-{f.nu}")
def test_kernel_matches_reference(filt):
    m = normalize_levels(complete5())
    rt = build_rates(m)
    s = PmcSampler(m, rt, filt)
    rng = np.random.default_rng(1)
    fired = 0
    for _ in range(300):
        real = sample_jumps(rt, rng)
        rec = s.sample_realization(real)
        w, stages = reference_run(m, real, filt)
        assert rec.stages == len(stages)
        assert np.allclose(rec.stage_rates, stages, rtol=1e-12)
        assert rec.W == pytest.approx(w, rel=1e-9)
        fired += rec.deactivated
    if filt.mode == "none":
        assert fired == 0
    else:
        assert fired > 0


def test_stage_rates_decrease_and_start_at_total():
    m = normalize_levels(complete5())
    rt = build_rates(m)
    s = PmcSampler(m, rt, FilterConfig("all", 1))
    rng = np.random.default_rng(2)
    for _ in range(200):
        rec = s.sample(rng)
        assert rec.stage_rates[0] == pytest.approx(rt.total, rel=1e-12)
        assert np.all(np.diff(rec.stage_rates) < 0)
        assert 0.0 < rec.W <= 1.0
        assert rec.executed == rec.stages <= rec.critical_index


@pytest.mark.parametrize("filt", MODES, ids=lambda f: f"{f.mode}-{f.nu}")
def test_unbiased_on_bridge(filt):
    m = bridge()
    u = exact_unreliability(m).u
    s = PmcSampler(m, None, filt)
    w = s.sample_block(np.random.default_rng(3), 100_000)
    assert within(w.mean(), u, w.std(ddof=1) / math.sqrt(w.size))


@pytest.mark.parametrize("filt", MODES, ids=lambda f: f"{f.mode}-{f.nu}")
def test_unbiased_with_active_filters(filt):
    m = normalize_levels(complete5())
    u = exact_unreliability(m).u
    w = PmcSampler(m, None, filt).sample_block(np.random.default_rng(4), 100_000)
    assert within(w.mean(), u, w.std(ddof=1) / math.sqrt(w.size))


def test_repeating_rates_at_cancelled_positions_is_biased():
    m = normalize_levels(complete5())
    u = exact_unreliability(m).u
    rt = build_rates(m)
    rng = np.random.default_rng(5)
    w = np.array([reference_run(m, sample_jumps(rt, rng), FilterConfig("all", 1), True)[0]
                  for _ in range(4000)])
    se = w.std(ddof=1) / math.sqrt(w.size)
    assert (w.mean() - u) / se > 5


def test_filter_single_contract():
    # link 2 (1-2) is bypassed by 1-0-2 with 2 units each way
    m = NetworkModel(4, [Link(0, 1, (0, 2), (0.1, 0.9)), Link(0, 2, (0, 2), (0.1, 0.9)),
                         Link(1, 2, (0, 1, 2), (0.1, 0.1, 0.8)),
                         Link(2, 3, (0, 2), (0.1, 0.9))], 0, 3, 2)
    rt = build_rates(m)
    real = sample_jumps(rt, np.random.default_rng(6))
    st = max_flow(m, [2, 2, 1, 0])
    before = real.active.copy()
    removed = filter_single(st, 2, real, 2)
    pos = real.positions_of(2)
    assert not real.active[pos].any()
    assert removed == pytest.approx(real.rate[pos][before[pos]].sum())
    real2 = sample_jumps(rt, np.random.default_rng(6))
    st2 = max_flow(m, [1, 0, 1, 0])
    assert filter_single(st2, 2, real2, 2) == 0.0
    assert real2.active.all()


def test_filter_all_contract():
    tri = NetworkModel(3, [Link(0, 1, (0, 1, 2), (0.1, 0.1, 0.8)),
                           Link(1, 2, (0, 1, 2), (0.1, 0.1, 0.8)),
                           Link(0, 2, (0, 1, 2), (0.1, 0.1, 0.8))], 0, 2, 2)
    rt = build_rates(tri)
    real = sample_jumps(rt, np.random.default_rng(7))
    st = max_flow(tri, [2, 2, 2])
    assert filter_all(st, 3, real, 2, 2) == 0.0  # off-period step does nothing
    assert real.active.all()
    removed = filter_all(st, 4, real, 2, 2)
    assert not real.active.any()
    assert removed == pytest.approx(real.rate.sum())


def test_large_period_behaves_like_no_filter():
    m = normalize_levels(complete5())
    rng = np.random.default_rng(8)
    a = PmcSampler(m, None, FilterConfig("all", 1000)).sample_block(rng, 500)
    b = PmcSampler(m, None, FilterConfig("none")).sample_block(np.random.default_rng(8), 500)
    assert np.array_equal(a, b)


def test_pmc_beats_crude_variance():
    for name, make in SUITE.items():
        m = make()
        u = exact_unreliability(m).u
        w = PmcSampler(m).sample_block(np.random.default_rng(9), 20_000)
        assert w.var(ddof=1) < u * (1 - u), name


def test_infeasible_demand_rejected():
    m = NetworkModel(2, [Link(0, 1, (0, 1), (0.5, 0.5))], 0, 1, 1).with_demand(1)
    m2 = NetworkModel(3, [Link(0, 1, (0, 1), (0.5, 0.5)), Link(1, 2, (0, 1), (0.5, 0.5))],
                      0, 2, 1)
    PmcSampler(m)
    PmcSampler(m2)
    bad = NetworkModel(3, [Link(0, 1, (0, 1), (0.5, 0.5)), Link(0, 1, (0, 1), (0.5, 0.5))],
                       0, 2, 1)
    with pytest.raises(ModelError, match="exceeds"):
        PmcSampler(bad)
    with pytest.raises(ModelError, match="capped"):
        PmcSampler(NetworkModel(2, [Link(0, 1, (0, 3), (0.5, 0.5))], 0, 1, 1))


def test_demand_met_at_base_gives_zero():
    m = NetworkModel(2, [Link(0, 1, (1, 2), (0.5, 0.5))] * 2, 0, 1, 2)
    rec = pmc_sample(m, None, None, np.random.default_rng(0))
    assert rec.W == 0.0 and rec.stages == 0


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig("some")
    with pytest.raises(ValueError):
        FilterConfig("all", 0)


def test_functional_single_link_matches_pmc():
    m = single_link(0.05)
    f = functional_estimate(m, None, np.random.default_rng(1))
    assert f(1) == pytest.approx(0.05, rel=1e-12)
    assert f.breakpoints() == [(1, f(1))]


def test_functional_base_convention():
    m = NetworkModel(2, [Link(0, 1, (1, 2, 3), (0.2, 0.3, 0.5))], 0, 1, 3)
    f = functional_estimate(m, None, np.random.default_rng(2))
    assert f(1) == 0.0
    assert 0.0 < f(2) <= f(3) <= 1.0
    with pytest.raises(ValueError):
        f(4)


def test_functional_matches_pointwise_runs():
    lat = lattice(4, ParametricFamily(0.6, 1e-3, 8), 10)
    m10 = normalize_levels(lat)
    rng = np.random.default_rng(3)
    n = 4000
    curves = [functional_estimate(m10, None, rng) for _ in range(n)]
    for d in (9, 10):
        w_f = np.array([c(d) for c in curves])
        w_p = PmcSampler(normalize_levels(lat.with_demand(d))).sample_block(
            np.random.default_rng(10 + d), n)
        se = math.hypot(w_f.std(ddof=1), w_p.std(ddof=1)) / math.sqrt(n)
        assert within(w_f.mean(), w_p.mean(), se)
    # nondecreasing in the demand on every curve
    for c in curves[:200]:
        vals = [w for _, w in c.breakpoints()]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
