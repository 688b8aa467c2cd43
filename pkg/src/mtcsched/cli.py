"""Command-line front end.

Exit codes: 0 success, 1 usage or scenario error, 2 when every trial of
the requested run is infeasible.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import ConfigError, ScenarioFile, load_scenario
from .grouping import fixed_size_groups, form_groups
from .harness import (
    LIFETIME_POLICIES,
    LTE_POLICIES,
    MetricsReport,
    deploy,
    lifetime_budget,
    lte_payload_grid,
    run_lifetime_experiment,
    run_lte_experiment,
    run_motivation_experiment,
    run_outage_experiment,
)
from .lte import algorithm1, default_tbs_table, lte_era, lte_min_prbp, lte_tra
from .scheduler import ScheduleProblem, ScheduleResult, schedule_era, schedule_maxmin, schedule_noncoop, schedule_tra

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2

FIGURES = ("motivation", "lifetime", "lte-lifetime", "outage")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_range(text: str) -> List[int]:
    """``0..12`` or ``0,3,6`` or a single integer."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N..M or a comma list of integers, got {text!r}") from None


def _float_list(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mtcsched", description="Lifetime-aware MTC uplink scheduling experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario_required: bool):
        sp.add_argument("--scenario", required=scenario_required, help="scenario file")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--output", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("schedule", help="schedule one deployment")
    common(sp, True)
    sp.add_argument("--policy", choices=LIFETIME_POLICIES, default="coop")
    sp.add_argument("--trial", type=int, default=0)

    sp = sub.add_parser("group", help="run distributed grouping on one deployment")
    common(sp, True)
    sp.add_argument("--trial", type=int, default=0)

    sp = sub.add_parser("lte", help="PRBP scheduling of one deployment")
    common(sp, True)
    sp.add_argument("--policy", choices=LTE_POLICIES, default="lte-alg1")
    sp.add_argument("--beta", type=int, default=0)
    sp.add_argument("--prbp-per-min", type=int, default=60,
                    help="pool size as a multiple of the payload's minimum PRBP count")
    sp.add_argument("--trial", type=int, default=0)

    sp = sub.add_parser("interference", help="primary-user outage grid")
    common(sp, False)
    sp.add_argument("--M", dest="groups", type=_int_range, default=list(range(13)))
    sp.add_argument("--dcb", type=_float_list, default=[150.0, 250.0])
    sp.add_argument("--gth", type=_float_list, default=[0.0, 2.0], help="SINR thresholds in dB")
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--power-rule", choices=("budget", "radius"), default="budget")

    sp = sub.add_parser("reproduce", help="run a figure preset")
    common(sp, False)
    sp.add_argument("--figure", choices=FIGURES, required=True)
    sp.add_argument("--trials", type=int, help="override the preset trial count")
    sp.add_argument("--summary", help="also write the JSON summary to this path")
    return p


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_report(report: MetricsReport, args) -> int:
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.output)
    if getattr(args, "summary", None):
        Path(args.summary).write_text(report.to_json())
    return EXIT_INFEASIBLE if report.all_infeasible() else EXIT_OK


def _table(header: Sequence[str], rows: List[Sequence], fmt: str, meta: dict) -> str:
    if fmt == "json":
        doc = dict(meta, rows=[dict(zip(header, r)) for r in rows])
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load(args) -> ScenarioFile:
    cfg = load_scenario(args.scenario) if args.scenario else ScenarioFile()
    if args.seed is not None:
        cfg = replace(cfg, scenario=replace(cfg.scenario, seed=args.seed))
    return cfg


def _allocation_rows(res: ScheduleResult):
    deltas = res.tbs_indices or [None] * len(res.allocations)
    return [(a.node_id, repr(a.tau), a.elements, repr(a.power), repr(life), "" if d is None else d)
            for a, life, d in zip(res.allocations, res.lifetimes, deltas)]


def cmd_schedule(args, cfg: ScenarioFile) -> int:
    sc = cfg.scenario
    nodes = deploy(sc, args.trial)
    radio = lifetime_budget(nodes, sc.radio)
    rng = np.random.default_rng(np.random.SeedSequence(sc.seed, spawn_key=(args.trial, 1)))
    if args.policy == "coop":
        groups = fixed_size_groups(nodes, cfg.group_size, sc.grouping)
        res = schedule_maxmin(ScheduleProblem(tuple(groups.reduced), radio, beta=sc.grouping.beta), rng=rng)
    else:
        problem = ScheduleProblem(tuple(nodes), radio)
        res = {"era": lambda: schedule_era(problem), "tra": lambda: schedule_tra(problem),
               "noncoop": lambda: schedule_noncoop(problem, rng=rng)}[args.policy]()
    meta = {"policy": res.policy, "feasible": res.feasible, "min_lifetime": res.min_lifetime,
            "total_elements": radio.total_elements}
    header = ("node", "airtime_s", "elements", "power_w", "lifetime_s", "tbs_index")
    _emit(_table(header, _allocation_rows(res), args.format, meta), args.output)
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def cmd_group(args, cfg: ScenarioFile) -> int:
    sc = cfg.scenario
    nodes = deploy(sc, args.trial)
    out = form_groups(nodes, sc.radio, sc.grouping)
    rows = [(n.node_id, out.roles[n.node_id][0],
             "" if out.roles[n.node_id][1] is None else out.roles[n.node_id][1],
             out.clients.get(n.node_id, 0)) for n in nodes]
    meta = {"representatives": out.count("representative"), "members": out.count("member"),
            "solo": out.count("solo")}
    _emit(_table(("node", "role", "representative", "clients"), rows, args.format, meta), args.output)
    return EXIT_OK


def cmd_lte(args, cfg: ScenarioFile) -> int:
    sc = cfg.scenario
    table = default_tbs_table()
    nodes = deploy(sc, args.trial)
    cmin = lte_min_prbp(sc.payload, table)
    if cmin is None:
        raise ConfigError(f"scenario.payload_bits: {sc.payload} exceeds the transport block table")
    if args.prbp_per_min < 1:
        raise ConfigError("--prbp-per-min must be >= 1")
    lte = replace(sc.lte, total_prbp=args.prbp_per_min * cmin)
    if args.policy == "lte-alg1":
        res = algorithm1(nodes, args.beta, lte, table)
    elif args.policy == "lte-era":
        res = lte_era(nodes, lte, table)
    else:
        res = lte_tra(nodes, lte, table)
    meta = {"policy": res.policy, "feasible": res.feasible, "min_lifetime": res.min_lifetime,
            "total_prbp": lte.total_prbp}
    header = ("node", "airtime_s", "prbp", "power_w", "lifetime_s", "tbs_index")
    _emit(_table(header, _allocation_rows(res), args.format, meta), args.output)
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def cmd_interference(args, cfg: ScenarioFile) -> int:
    if any(m < 0 for m in args.groups):
        raise ConfigError("--M: group counts must be >= 0")
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    seed = cfg.scenario.seed
    report = run_outage_experiment(cfg.underlay, args.groups, args.dcb, args.gth, args.trials, seed,
                                   power_rule=args.power_rule)
    return _emit_report(report, args)


def cmd_reproduce(args, cfg: ScenarioFile) -> int:
    sc = cfg.scenario
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        sc = replace(sc, trials=args.trials)
    fig = args.figure
    if fig == "motivation":
        sc = sc if args.trials is not None else replace(sc, trials=200)
        report = run_motivation_experiment(sc)
    elif fig == "lifetime":
        payloads = [200.0 * k for k in range(1, 8)]
        report = run_lifetime_experiment(sc, cfg.group_size, payloads, listen_ratios=(0.5, 1.0, 2.0))
    elif fig == "lte-lifetime":
        sc = replace(sc, policies=LTE_POLICIES)
        sc = sc if args.trials is not None else replace(sc, trials=50)
        report = run_lte_experiment(sc, lte_payload_grid())
    else:
        trials = args.trials if args.trials is not None else 100_000
        report = run_outage_experiment(cfg.underlay, range(13), (150.0, 250.0), (0.0, 2.0), trials, sc.seed)
    return _emit_report(report, args)


COMMANDS = {
    "schedule": cmd_schedule,
    "group": cmd_group,
    "lte": cmd_lte,
    "interference": cmd_interference,
    "reproduce": cmd_reproduce,
}


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"mtcsched: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"mtcsched: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
