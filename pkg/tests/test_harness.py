import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from mtcsched.harness import (
    LTE_POLICIES,
    MetricsReport,
    Scenario,
    deploy,
    lifetime_budget,
    lte_payload_grid,
    run_lifetime_experiment,
    run_lte_experiment,
    run_motivation_experiment,
    run_outage_experiment,
    trial_seed,
    worker_count,
)
from mtcsched.interference import UnderlayScenario, rayleigh_outage
from mtcsched.scheduler import tau_min

SMALL = Scenario(trials=6)


# -- deployment ------------------------------------------------------------------

def test_radial_distribution_passes_ks():
    sc = Scenario(node_count=10_000)
    d = np.array([n.distance for n in deploy(sc, 0)])
    cdf = lambda x: (x ** 2 - 50.0 ** 2) / (450.0 ** 2 - 50.0 ** 2)  # noqa: E731
    assert stats.kstest(d, cdf).pvalue > 0.01


def test_deployment_ranges_and_determinism():
    a = deploy(SMALL, 3)
    assert len(a) == 40
    assert all(50.0 <= n.distance <= 450.0 for n in a)
    assert all(0.0 < n.energy <= 250.0 for n in a)
    assert all(math.hypot(*n.position) == pytest.approx(n.distance) for n in a)
    assert a == deploy(SMALL, 3)
    assert a != deploy(SMALL, 4)
    assert deploy(SMALL, 3, payload=500.0)[0].payload == 500.0


def test_budget_rule():
    nodes = deploy(SMALL, 0)
    radio = lifetime_budget(nodes, SMALL.radio)
    want = 2.5 * 40 * max(tau_min(n, SMALL.radio) for n in nodes)
    assert radio.total_elements == math.floor(want / SMALL.radio.element_duration + 1e-9)


def test_seed_streams_are_independent():
    a = np.random.default_rng(trial_seed(1, 0, 0)).random(4)
    b = np.random.default_rng(trial_seed(1, 1, 0)).random(4)
    assert not np.array_equal(a, b)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("MTC_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("MTC_WORKERS", "many")
    with pytest.raises(ValueError):
        worker_count()


@pytest.mark.parametrize("kwargs", [dict(inner=500.0), dict(node_count=0), dict(trials=0), dict(payload=0.0)])
def test_scenario_validation(kwargs):
    with pytest.raises(ValueError):
        Scenario(**kwargs)


# -- lifetime experiment ---------------------------------------------------------

def test_single_trial_single_payload_rows():
    rep = run_lifetime_experiment(Scenario(trials=1), payloads=(1000.0,))
    assert rep.series() == ["era", "tra", "noncoop", "coop"]
    assert rep.xs() == [1000.0]
    assert {r[3] for r in rep.rows} == {"fed_mean", "fed_stderr", "factor", "included", "excluded",
                                        "infeasible", "total"}
    assert len([r for r in rep.rows if r[3] == "factor"]) == 4


def test_lifetime_report_accounting():
    rep = run_lifetime_experiment(SMALL, payloads=(400.0, 1000.0), listen_ratios=(0.5, 2.0))
    for x in rep.xs():
        assert rep.value("era", x, "factor") == 1.0
        for s in rep.series():
            assert rep.value(s, x, "included") + rep.value(s, x, "excluded") == rep.value(s, x, "total") == 6
    assert rep.value("coop(xi=2)", 1000.0, "factor") <= rep.value("coop(xi=0.5)", 1000.0, "factor")


def test_parallel_map_is_byte_identical(monkeypatch):
    monkeypatch.setenv("MTC_WORKERS", "1")
    serial = run_lifetime_experiment(SMALL)
    monkeypatch.setenv("MTC_WORKERS", "2")
    parallel = run_lifetime_experiment(SMALL)
    assert serial.to_csv() == parallel.to_csv()
    assert serial.to_json() == parallel.to_json()


def test_lifetime_needs_baseline():
    with pytest.raises(ValueError):
        run_lifetime_experiment(Scenario(trials=1, policies=("tra",)))


# -- LTE experiment --------------------------------------------------------------

def test_lte_grid_contains_the_block_edge():
    grid = lte_payload_grid()
    assert 712 in grid and 713 in grid
    assert grid == sorted(grid)


def test_lte_report_audits():
    sc = Scenario(trials=4, policies=LTE_POLICIES)
    rep = run_lte_experiment(sc, payloads=(700.0, 712.0, 713.0))
    for x in rep.xs():
        assert rep.value("lte-era", x, "factor") == 1.0
        assert 0 <= rep.value("all", x, "max_tbs_index") <= 26
    assert rep.value("lte-alg1", 712.0, "factor") > rep.value("lte-alg1", 713.0, "factor")


# -- outage and motivation ------------------------------------------------------

def test_outage_grid_structure_and_oracle():
    rep = run_outage_experiment(UnderlayScenario(), groups=range(0, 13, 4), distances=(150.0, 250.0),
                                thresholds_db=(2.0,), trials=40_000, seed=2)
    assert rep.series() == ["dcb=150m,gth=2dB", "dcb=250m,gth=2dB"]
    for label, d in zip(rep.series(), (150.0, 250.0)):
        p0, se = rep.value(label, 0.0, "outage"), rep.value(label, 0.0, "stderr")
        closed = rayleigh_outage(replace(UnderlayScenario(), pu_distance=d))
        assert rep.value(label, 0.0, "closed_form") == pytest.approx(closed)
        assert abs(p0 - closed) <= 3 * se
        curve = [rep.value(label, float(m), "outage") for m in (0, 4, 8, 12)]
        assert curve == sorted(curve)
    for m in (4.0, 8.0, 12.0):
        assert rep.value("dcb=250m,gth=2dB", m, "outage") > rep.value("dcb=150m,gth=2dB", m, "outage")


def test_outage_rejects_unknown_power_rule():
    with pytest.raises(ValueError):
        run_outage_experiment(UnderlayScenario(), groups=(0,), trials=10, power_rule="guess")


def test_motivation_curves_order_by_listening_cost():
    rep = run_motivation_experiment(Scenario(trials=20), betas=(0, 2, 10))
    assert rep.series() == ["xi=0.5", "xi=1", "xi=2"]
    for b in (0.0, 2.0, 10.0):
        means = [rep.value(s, b, "mean_clients") for s in rep.series()]
        assert means[0] >= means[1] >= means[2]
    assert rep.value("xi=0.5", 0.0, "mean_clients") == 0.0


# -- report serialization ---------------------------------------------------------

def test_report_formats():
    rep = MetricsReport("demo", [("a", "x", 1.0, "v", 0.1), ("a", "x", 2.5, "v", math.nan)], {"k": (1, 2)})
    assert rep.to_csv() == "series,axis,x,statistic,value\na,x,1,v,0.1\na,x,2.5,v,nan\n"
    doc = json.loads(rep.to_json())
    assert doc["results"]["a"]["1"]["v"] == 0.1
    assert doc["results"]["a"]["2.5"]["v"] == "nan"
    assert doc["config"] == {"k": [1, 2]}
    with pytest.raises(KeyError):
        rep.value("a", 3.0, "v")


def test_all_infeasible_flag():
    rows = [("p", "x", 1.0, "included", 0.0), ("p", "x", 2.0, "included", 0.0)]
    assert MetricsReport("e", rows, {}).all_infeasible()
    rows[1] = ("p", "x", 2.0, "included", 3.0)
    assert not MetricsReport("e", rows, {}).all_infeasible()
