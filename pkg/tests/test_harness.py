import csv
import io
import json
import math

import numpy as np
import pytest

from stochflow import ParametricFamily, SplittingSchedule, lattice
from stochflow.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    run,
    substream,
    sweep,
    write_csv,
    write_gnuplot,
    write_json,
)

from nets import bridge, lattice2, single_link, within


def test_crude_bernoulli_mean():
    r = run(ExperimentConfig("crude", 100_000, 1), single_link(0.3))
    assert within(r.estimate, 0.3, math.sqrt(0.21 / 1e5))
    assert r.variance == pytest.approx(r.estimate * (1 - r.estimate), rel=1e-3)


def test_summary_identities():
    r = run(ExperimentConfig("pmc", 5000, 2), bridge())
    assert r.re == pytest.approx(math.sqrt(r.variance / r.n) / r.estimate, rel=1e-15)
    assert r.wnrv == r.time_s * r.re ** 2
    assert r.re >= 0 and r.wnrv >= 0 and r.time_s > 0
    assert r.std_error == pytest.approx(r.re * r.estimate)
    assert r.model_digest == bridge().digest()


@pytest.mark.parametrize("method", ["crude", "pmc", "pmc-single", "pmc-all", "gs"])
def test_thread_count_does_not_change_results(method):
    docs = {run(ExperimentConfig(method, 3000, 5, threads=t, block=100), lattice2())
            .to_json(timing=False) for t in (1, 3, 8)}
    assert len(docs) == 1


def test_seed_and_block_matter():
    a = run(ExperimentConfig("pmc", 2000, 1), bridge()).estimate
    assert a != run(ExperimentConfig("pmc", 2000, 2), bridge()).estimate
    assert a == run(ExperimentConfig("pmc", 2000, 1), bridge()).estimate
    assert a != run(ExperimentConfig("pmc", 2000, 1, block=7), bridge()).estimate


def test_substreams_differ():
    a = substream(3, 0).random(4)
    assert not np.array_equal(a, substream(3, 1).random(4))
    assert np.array_equal(a, substream(3, 0).random(4))


def test_gs_schedule_reuse_and_pilot_time():
    m = lattice2()
    r = run(ExperimentConfig("gs", 2000, 3), m)
    assert r.pilot_time_s > 0 and r.levels[0] == 0.0 and r.levels[-1] == 1.0
    sched = SplittingSchedule(r.levels, 2, 500, 3)
    r2 = run(ExperimentConfig("gs", 2000, 3, schedule=sched), m)
    assert r2.pilot_time_s == 0.0
    assert r2.estimate == r.estimate


def test_pmc_variance_below_crude():
    m = lattice2()
    crude = run(ExperimentConfig("crude", 50_000, 4), m)
    pmc = run(ExperimentConfig("pmc", 50_000, 4), m)
    assert pmc.variance < crude.variance


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("magic")
    with pytest.raises(ValueError):
        ExperimentConfig(n=0)
    with pytest.raises(ValueError):
        ExperimentConfig(nu=0)
    with pytest.raises(ValueError):
        ExperimentConfig(threads=0)


def family(eps):
    return lattice(2, ParametricFamily(0.6, eps, 2), 2)


def test_sweep_and_writers(tmp_path):
    cfg = ExperimentConfig("pmc", 2000, 1, epsilons=(1e-2, 1e-3))
    res = sweep(cfg, family)
    assert [r.epsilon for r in res] == [1e-2, 1e-3]
    assert res[1].estimate < res[0].estimate
    assert sweep(cfg, family, []) == []

    text = write_csv(res)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert float(rows[1]["estimate"]) == res[1].estimate
    write_csv(res, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text() == text

    doc = json.loads(write_json(res, extra={"tag": 1}))
    assert doc["tag"] == 1 and len(doc["results"]) == 2
    assert "time_s" not in json.loads(write_json(res, timing=False))["results"][0]

    gp = write_gnuplot(res)
    lines = [l for l in gp.splitlines() if l and not l.startswith("#")]
    assert len(lines) == 2
    assert [float(l.split()[0]) for l in lines] == [1e-2, 1e-3]


def test_sweep_rejects_shared_schedule():
    cfg = ExperimentConfig("gs", 100, 1, schedule=SplittingSchedule((0.0, 1.0)),
                           epsilons=(1e-2, 1e-3))
    with pytest.raises(ValueError):
        sweep(cfg, family)


def test_zero_estimate_has_null_re():
    m = lattice(2, ParametricFamily(0.6, 1e-9, 2), 2)
    r = run(ExperimentConfig("crude", 100, 0), m)
    assert r.estimate == 0.0 and math.isnan(r.re)
    assert json.loads(r.to_json())["re"] is None
    assert ",0.0,," in write_csv([r])
