"""Deployment, experiment pipelines and report writers.

Every trial derives its own random streams from ``(scenario.seed, trial)``
through :class:`numpy.random.SeedSequence`, so a trial's outcome does not
depend on which worker ran it or in which order. Results are reduced in
trial order, which keeps report bytes identical for any worker count
(``MTC_WORKERS`` environment variable, default 1).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import CELL_INNER_M, CELL_OUTER_M, NodeState, RadioConfig, pathloss_gain, default_radio
from .grouping import MEMBER, GroupingConfig, GroupingOutcome, fixed_size_groups, optimal_clients
from .interference import UnderlayScenario, intra_power_from_radius, rayleigh_outage, simulate_outage
from .lte import LteConfig, TbsTable, algorithm1, default_tbs_table, lte_era, lte_min_prbp, lte_tra
from .scheduler import (
    ScheduleProblem,
    ScheduleResult,
    schedule_era,
    schedule_maxmin,
    schedule_noncoop,
    schedule_tra,
    tau_min,
)

__all__ = [
    "Scenario",
    "MetricsReport",
    "deploy",
    "trial_seed",
    "worker_count",
    "member_lifetime",
    "lifetime_budget",
    "run_lifetime_experiment",
    "run_lte_experiment",
    "lte_trial_factors",
    "lte_payload_grid",
    "run_outage_experiment",
    "run_motivation_experiment",
    "LIFETIME_POLICIES",
    "LTE_POLICIES",
]

LIFETIME_POLICIES = ("era", "tra", "noncoop", "coop")
LTE_POLICIES = ("lte-era", "lte-tra", "lte-alg1")
RESOURCE_HEADROOM = 2.5


@dataclass(frozen=True)
class Scenario:
    """One experiment configuration; equal values give identical reports.

    Energies are drawn uniformly on ``(0, battery_capacity]``; every node
    carries ``payload`` bits per duty cycle of ``period`` seconds.
    """

    seed: int = 1
    node_count: int = 40
    inner: float = CELL_INNER_M
    outer: float = CELL_OUTER_M
    radio: RadioConfig = field(default_factory=default_radio)
    grouping: GroupingConfig = field(default_factory=lambda: GroupingConfig(beta=2.0, listen_ratio=0.5))
    lte: LteConfig = field(default_factory=LteConfig)
    battery_capacity: float = 250.0
    period: float = 60.0
    static_energy: float = 50e-6
    payload: float = 1000.0
    trials: int = 100
    policies: Tuple[str, ...] = LIFETIME_POLICIES

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("Scenario needs 0 < inner < outer")
        if self.node_count < 1:
            raise ValueError("Scenario.node_count must be >= 1")
        if self.trials < 1:
            raise ValueError("Scenario.trials must be >= 1")
        for name in ("battery_capacity", "period", "static_energy", "payload"):
            if not getattr(self, name) > 0:
                raise ValueError(f"Scenario.{name} must be positive")

    def echo(self) -> dict:
        out = asdict(self)
        out["policies"] = list(self.policies)
        return out


@dataclass
class MetricsReport:
    """Long-format metrics table plus a config echo.

    Each row is ``(series, axis, x, statistic, value)``; ``series`` is a
    policy name or an outage curve label.
    """

    experiment: str
    rows: List[Tuple[str, str, float, str, float]]
    config: dict

    COLUMNS = ("series", "axis", "x", "statistic", "value")

    def value(self, series: str, x: float, statistic: str) -> float:
        for s, _, xv, st, v in self.rows:
            if s == series and xv == x and st == statistic:
                return v
        raise KeyError((series, x, statistic))

    def series(self) -> List[str]:
        return list(dict.fromkeys(r[0] for r in self.rows))

    def xs(self) -> List[float]:
        return list(dict.fromkeys(r[2] for r in self.rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for s, axis, x, stat, v in self.rows:
            writer.writerow([s, axis, _fmt(x), stat, _fmt(v)])
        return buf.getvalue()

    def to_json(self) -> str:
        summary: Dict[str, Dict[str, Dict[str, float]]] = {}
        for s, _, x, stat, v in self.rows:
            summary.setdefault(s, {}).setdefault(_fmt(x), {})[stat] = _json_num(v)
        doc = {"experiment": self.experiment, "config": _jsonable(self.config), "results": summary}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def all_infeasible(self) -> bool:
        """True when no trial of any grid point was usable."""
        included = [v for _, _, _, st, v in self.rows if st == "included"]
        return bool(included) and all(v == 0 for v in included)


def _fmt(v) -> str:
    if isinstance(v, float):
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


def _json_num(v: float):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        return _json_num(obj)
    return obj


# -- seeding and parallel map ----------------------------------------------

def trial_seed(seed: int, *key: int) -> np.random.SeedSequence:
    """Counter-based child seed for ``(seed, key...)``."""
    return np.random.SeedSequence(seed, spawn_key=tuple(key))


def worker_count() -> int:
    raw = os.environ.get("MTC_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"MTC_WORKERS must be an integer, got {raw!r}") from None
    return max(1, n)


def _map(fn: Callable, items: Sequence, workers: Optional[int] = None) -> list:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# -- deployment ------------------------------------------------------------

def deploy(scenario: Scenario, trial: int = 0, payload: Optional[float] = None) -> List[NodeState]:
    """Uniform placement of ``node_count`` nodes on the cell ring.

    Radii follow ``F(d) = (d^2 - d_n^2) / (d_x^2 - d_n^2)``, i.e. uniform
    by area; the draw depends only on ``(scenario.seed, trial)``.
    """
    rng = np.random.default_rng(trial_seed(scenario.seed, trial, 0))
    n = scenario.node_count
    radius = np.sqrt(rng.uniform(scenario.inner ** 2, scenario.outer ** 2, n))
    angle = rng.uniform(0.0, 2.0 * math.pi, n)
    energy = scenario.battery_capacity * (1.0 - rng.random(n))
    d = scenario.payload if payload is None else payload
    nodes = []
    for i in range(n):
        r = float(radius[i])
        nodes.append(NodeState(
            node_id=i,
            energy=float(energy[i]),
            period=scenario.period,
            payload=d,
            static_energy=scenario.static_energy,
            pathloss=pathloss_gain(r, scenario.inner),
            distance=r,
            position=(r * math.cos(angle[i]), r * math.sin(angle[i])),
        ))
    return nodes


def member_lifetime(node: NodeState) -> float:
    """Lifetime of a group member, which only pays the static energy."""
    return node.energy * node.period / node.static_energy


def lifetime_budget(nodes: Sequence[NodeState], radio: RadioConfig) -> RadioConfig:
    """Radio whose element count covers ``2.5 * L * max tau_min`` seconds."""
    airtime = RESOURCE_HEADROOM * len(nodes) * max(tau_min(n, radio) for n in nodes)
    return radio.with_budget(airtime)


# -- lifetime experiment -----------------------------------------------------

def _fed_with_members(result: ScheduleResult, grouping: GroupingOutcome, nodes: Sequence[NodeState]) -> float:
    fed = result.min_lifetime
    for node in nodes:
        if grouping.roles[node.node_id][0] == MEMBER:
            fed = min(fed, member_lifetime(node))
    return fed


def _lifetime_trial(job, scenario: Scenario, group_size: int, listen_ratios: Tuple[float, ...]):
    trial, payload = job
    nodes = deploy(scenario, trial, payload)
    radio = lifetime_budget(nodes, scenario.radio)
    solo = ScheduleProblem(tuple(nodes), radio, beta=0.0, mean_payload=payload)
    out = []
    for slot, policy in enumerate(scenario.policies):
        rng = np.random.default_rng(trial_seed(scenario.seed, trial, 1, slot))
        if policy == "era":
            res = schedule_era(solo)
            out.append((policy, res.feasible, res.min_lifetime))
        elif policy == "tra":
            res = schedule_tra(solo)
            out.append((policy, res.feasible, res.min_lifetime))
        elif policy == "noncoop":
            res = schedule_noncoop(solo, rng=rng)
            out.append((policy, res.feasible, res.min_lifetime))
        elif policy == "coop":
            for xi in listen_ratios:
                cfg = replace(scenario.grouping, listen_ratio=xi)
                groups = fixed_size_groups(nodes, group_size, cfg)
                problem = ScheduleProblem(tuple(groups.reduced), radio, beta=cfg.beta, mean_payload=payload)
                res = schedule_maxmin(problem, rng=np.random.default_rng(trial_seed(scenario.seed, trial, 1, slot)))
                label = _coop_label(xi, listen_ratios)
                out.append((label, res.feasible, _fed_with_members(res, groups, nodes)))
        else:
            raise ValueError(f"unknown lifetime policy {policy!r}")
    return out


def _coop_label(xi: float, listen_ratios: Tuple[float, ...]) -> str:
    return "coop" if len(listen_ratios) == 1 else f"coop(xi={_fmt(float(xi))})"


def _reduce(experiment: str, axis: str, grid: Sequence[float], labels: Sequence[str],
            outcomes: Dict[float, List[list]], baseline: str, config: dict) -> MetricsReport:
    rows = []
    for x in grid:
        trials = outcomes[x]
        total = len(trials)
        usable = [t for t in trials if all(ok for _, ok, _ in t)]
        fed = {lab: [] for lab in labels}
        for t in usable:
            for lab, _, life in t:
                fed[lab].append(life)
        base = float(np.mean(fed[baseline])) if usable else math.nan
        for lab in labels:
            vals = fed[lab]
            infeasible = sum(1 for t in trials for l2, ok, _ in t if l2 == lab and not ok)
            mean = float(np.mean(vals)) if vals else math.nan
            se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
            factor = mean / base if usable and base > 0 else math.nan
            if lab == baseline and usable:
                factor = 1.0
            rows.extend([
                (lab, axis, float(x), "fed_mean", mean),
                (lab, axis, float(x), "fed_stderr", se),
                (lab, axis, float(x), "factor", factor),
                (lab, axis, float(x), "included", float(len(usable))),
                (lab, axis, float(x), "excluded", float(total - len(usable))),
                (lab, axis, float(x), "infeasible", float(infeasible)),
                (lab, axis, float(x), "total", float(total)),
            ])
    return MetricsReport(experiment, rows, config)


def run_lifetime_experiment(scenario: Scenario, group_size: int = 2,
                            payloads: Iterable[float] = (1000.0,),
                            listen_ratios: Optional[Iterable[float]] = None,
                            workers: Optional[int] = None) -> MetricsReport:
    """Mean FED lifetime per policy and payload, normalized to ERA.

    A trial counts only if every policy found a feasible schedule; the
    others are reported as excluded. The cooperative policy groups nodes
    into fixed groups of ``group_size`` clients and is evaluated once per
    listen ratio.
    """
    if "era" not in scenario.policies:
        raise ValueError("lifetime experiment needs the 'era' baseline")
    payloads = [float(d) for d in payloads]
    xis = tuple(float(x) for x in (listen_ratios or (scenario.grouping.listen_ratio,)))
    jobs = [(t, d) for d in payloads for t in range(scenario.trials)]
    results = _map(partial(_lifetime_trial, scenario=scenario, group_size=group_size, listen_ratios=xis),
                   jobs, workers)
    outcomes: Dict[float, List[list]] = {d: [] for d in payloads}
    for (_, d), res in zip(jobs, results):
        outcomes[d].append(res)
    labels = []
    for p in scenario.policies:
        labels.extend([_coop_label(x, xis) for x in xis] if p == "coop" else [p])
    config = {"scenario": scenario.echo(), "group_size": group_size, "payloads": payloads,
              "listen_ratios": list(xis)}
    return _reduce("lifetime", "payload_bits", payloads, labels, outcomes, "era", config)


# -- LTE experiment ----------------------------------------------------------

def lte_payload_grid() -> List[float]:
    """100..1300 bits in steps of 100 plus both sides of the 1-PRBP edge."""
    grid = set(range(100, 1301, 100)) | {712, 713}
    return [float(d) for d in sorted(grid)]


def _lte_trial(job, scenario: Scenario, table: TbsTable, prbp_per_min: int):
    trial, payload = job
    nodes = deploy(scenario, trial, payload)
    cmin = lte_min_prbp(payload, table)
    if cmin is None:
        raise ValueError(f"payload {payload} exceeds the TBS table")
    cfg = replace(scenario.lte, total_prbp=prbp_per_min * cmin)
    out = []
    for policy in scenario.policies:
        if policy == "lte-era":
            res = lte_era(nodes, cfg, table)
        elif policy == "lte-tra":
            res = lte_tra(nodes, cfg, table)
        elif policy == "lte-alg1":
            res = algorithm1(nodes, 0, cfg, table)
        else:
            raise ValueError(f"unknown LTE policy {policy!r}")
        out.append((policy, res.feasible, res.min_lifetime, res.tbs_indices))
    return out


def run_lte_experiment(scenario: Scenario, payloads: Optional[Iterable[float]] = None,
                       table: Optional[TbsTable] = None, prbp_per_min: int = 60,
                       workers: Optional[int] = None) -> MetricsReport:
    """PRBP-level lifetime comparison over a payload sweep.

    The pool holds ``prbp_per_min`` times the single-node PRBP minimum for
    the payload, so every payload sees the same relative load.
    """
    if "lte-era" not in scenario.policies:
        raise ValueError("LTE experiment needs the 'lte-era' baseline")
    table = table or default_tbs_table()
    grid = [float(d) for d in (payloads if payloads is not None else lte_payload_grid())]
    jobs = [(t, d) for d in grid for t in range(scenario.trials)]
    results = _map(partial(_lte_trial, scenario=scenario, table=table, prbp_per_min=prbp_per_min), jobs, workers)
    outcomes: Dict[float, List[list]] = {d: [] for d in grid}
    max_index: Dict[float, int] = {d: -1 for d in grid}
    for (_, d), res in zip(jobs, results):
        outcomes[d].append([r[:3] for r in res])
        for r in res:
            max_index[d] = max([max_index[d]] + [i for i in (r[3] or []) if i is not None])
    config = {"scenario": scenario.echo(), "payloads": grid, "prbp_per_min": prbp_per_min}
    report = _reduce("lte-lifetime", "payload_bits", grid, list(scenario.policies), outcomes, "lte-era", config)
    for d in grid:
        report.rows.append(("all", "payload_bits", d, "max_tbs_index", float(max_index[d])))
    return report


def lte_trial_factors(scenario: Scenario, payload: float, trials: Iterable[int],
                      table: Optional[TbsTable] = None, prbp_per_min: int = 60) -> List[float]:
    """Per-trial min-lifetime ratio of ``lte-alg1`` to ``lte-era`` (NaN if infeasible)."""
    table = table or default_tbs_table()
    sc = replace(scenario, policies=("lte-era", "lte-alg1"))
    out = []
    for t in trials:
        (_, ok_e, life_e, _), (_, ok_a, life_a, _) = _lte_trial((t, float(payload)), sc, table, prbp_per_min)
        out.append(life_a / life_e if ok_e and ok_a and life_e > 0 else math.nan)
    return out


# -- outage experiment -------------------------------------------------------

def _outage_job(job, base: UnderlayScenario, trials: int, seed: int, power_rule: str):
    gth, dcb, m = job
    s = replace(base, pu_distance=dcb, sinr_threshold=10.0 ** (gth / 10.0))
    power = intra_power_from_radius(s) if power_rule == "radius" else None
    est = simulate_outage(s, trials, seed, groups=m, intra_power=power)
    return est, rayleigh_outage(s)


def run_outage_experiment(base: UnderlayScenario, groups: Iterable[int] = range(13),
                          distances: Iterable[float] = (150.0, 250.0),
                          thresholds_db: Iterable[float] = (0.0, 2.0), trials: int = 100_000,
                          seed: int = 1, power_rule: str = "budget",
                          workers: Optional[int] = None) -> MetricsReport:
    """Primary-user outage over a (threshold, distance, group count) grid.

    ``power_rule`` picks the intra-group power: ``"budget"`` spends the mean
    interference budget across the active groups, ``"radius"`` uses the
    group-edge rule for every group. All grid points share one seed, so
    neighbouring points are driven by common random numbers.
    """
    if power_rule not in ("budget", "radius"):
        raise ValueError("power_rule must be 'budget' or 'radius'")
    groups = [int(m) for m in groups]
    distances = [float(d) for d in distances]
    thresholds = [float(g) for g in thresholds_db]
    jobs = [(g, d, m) for g in thresholds for d in distances for m in groups]
    results = _map(partial(_outage_job, base=base, trials=trials, seed=seed, power_rule=power_rule), jobs, workers)
    rows = []
    for (g, d, m), (est, closed) in zip(jobs, results):
        label = f"dcb={_fmt(d)}m,gth={_fmt(g)}dB"
        rows.extend([
            (label, "groups", float(m), "outage", est.outage),
            (label, "groups", float(m), "stderr", est.stderr),
            (label, "groups", float(m), "mean_interference", est.mean_interference),
            (label, "groups", float(m), "intra_power", est.intra_power),
        ])
        if m == 0:
            rows.append((label, "groups", 0.0, "closed_form", closed))
    config = {"underlay": asdict(base), "groups": groups, "distances": distances,
              "thresholds_db": thresholds, "trials": trials, "seed": seed, "power_rule": power_rule}
    return MetricsReport("outage", rows, config)


# -- motivation (client count) experiment -------------------------------------

def _motivation_trial(trial: int, scenario: Scenario, betas: Tuple[float, ...],
                      listen_ratios: Tuple[float, ...], n_max: int):
    nodes = deploy(scenario, trial)
    out = []
    for xi in listen_ratios:
        for beta in betas:
            cfg = replace(scenario.grouping, beta=beta, listen_ratio=xi, n_max=n_max)
            out.append(sum(optimal_clients(n, scenario.radio, cfg, scenario.payload) for n in nodes))
    return out


def run_motivation_experiment(scenario: Scenario, betas: Iterable[float] = (0, 1, 2, 4, 6, 8, 10),
                              listen_ratios: Iterable[float] = (0.5, 1.0, 2.0), n_max: int = 5,
                              workers: Optional[int] = None) -> MetricsReport:
    """Mean optimal client count per node over deployments, per (xi, beta)."""
    betas = tuple(float(b) for b in betas)
    xis = tuple(float(x) for x in listen_ratios)
    results = _map(partial(_motivation_trial, scenario=scenario, betas=betas, listen_ratios=xis, n_max=n_max),
                   list(range(scenario.trials)), workers)
    per_trial = np.array(results, dtype=float) / scenario.node_count
    means = per_trial.mean(axis=0)
    rows = []
    k = 0
    for xi in xis:
        for beta in betas:
            rows.append((f"xi={_fmt(xi)}", "beta", beta, "mean_clients", float(means[k])))
            k += 1
    config = {"scenario": scenario.echo(), "betas": list(betas), "listen_ratios": list(xis), "n_max": n_max}
    return MetricsReport("motivation", rows, config)
