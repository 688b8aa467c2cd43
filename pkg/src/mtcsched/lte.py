"""LTE-discretized cooperation-incentive scheduling.

Resources are whole physical resource block pairs (PRBPs) within one TTI,
and a transmission must fit a tabulated transport block size (TBS). The
scheduler first grants every node its minimum PRBP count scaled by its
cooperation reward, lets each node pick the count in that range that
maximizes its lifetime, then hands leftover PRBPs one at a time to the
weakest node while that raises its lifetime.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

from .core import Allocation, NodeState, db_to_linear
from .scheduler import ScheduleResult

__all__ = [
    "TbsTable",
    "LteConfig",
    "load_tbs_table",
    "default_tbs_table",
    "lte_min_prbp",
    "min_tbs_index",
    "lte_power",
    "lte_lifetime",
    "lte_gamma",
    "algorithm1",
    "lte_era",
    "lte_tra",
]

MAX_TBS_INDEX = 26


class TbsTable:
    """Transport block sizes keyed by (PRBP count, TBS index)."""

    def __init__(self, values: Dict[Tuple[int, int], int]):
        if not values:
            raise ValueError("empty TBS table")
        self._values = dict(values)
        self.max_prbp = max(c for c, _ in values)
        for c in range(1, self.max_prbp + 1):
            for d in range(MAX_TBS_INDEX + 1):
                if (c, d) not in values:
                    raise ValueError(f"TBS table missing entry prbp={c} index={d}")
        for c in range(1, self.max_prbp + 1):
            for d in range(MAX_TBS_INDEX + 1):
                v = values[(c, d)]
                if d and v < values[(c, d - 1)]:
                    raise ValueError(f"TBS table not monotone in index at prbp={c} index={d}")
                if c > 1 and v < values[(c - 1, d)]:
                    raise ValueError(f"TBS table not monotone in prbp at prbp={c} index={d}")

    def __call__(self, c: int, delta: int) -> int:
        return self.lookup(c, delta)

    def lookup(self, c: int, delta: int) -> int:
        if not (1 <= c <= self.max_prbp) or not (0 <= delta <= MAX_TBS_INDEX):
            raise ValueError(f"TBS lookup out of range: prbp={c}, index={delta}")
        return self._values[(c, delta)]


def load_tbs_table(text: str) -> TbsTable:
    """Parse ``prbp,index,tbs_bits`` CSV text; duplicates are rejected."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["prbp", "index", "tbs_bits"]:
        raise ValueError("TBS table header must be 'prbp,index,tbs_bits'")
    values: Dict[Tuple[int, int], int] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 3:
            raise ValueError(f"TBS table line {lineno}: expected 3 fields")
        try:
            c, d, bits = (int(x) for x in row)
        except ValueError:
            raise ValueError(f"TBS table line {lineno}: non-integer field") from None
        if (c, d) in values:
            raise ValueError(f"TBS table line {lineno}: duplicate entry prbp={c} index={d}")
        if c < 1 or not 0 <= d <= MAX_TBS_INDEX or bits <= 0:
            raise ValueError(f"TBS table line {lineno}: value out of range")
        values[(c, d)] = bits
    return TbsTable(values)


def default_tbs_table() -> TbsTable:
    """Bundled table for 1..10 PRBPs and TBS indices 0..26."""
    text = resources.files("mtcsched").joinpath("data/tbs_table.csv").read_text()
    return load_tbs_table(text)


@dataclass(frozen=True)
class LteConfig:
    """LTE uplink constants; all powers in watts, SNR linear.

    ``compensation`` is the downlink pathloss compensation factor and
    ``noise_per_block`` the noise power in one resource block.
    """

    compensation: float = 0.91
    symbols_per_prbp: int = 12
    noise_per_block: float = db_to_linear(-151.4)
    target_snr: float = db_to_linear(-5.0)
    tti: float = 1e-3
    p_max: float = db_to_linear(-6.0)
    total_prbp: int = 60
    circuit_power: float = 1e-3
    pa_inefficiency: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.compensation <= 1.0:
            raise ValueError("LteConfig.compensation must lie in [0, 1]")
        if self.symbols_per_prbp <= 0:
            raise ValueError("LteConfig.symbols_per_prbp must be positive")
        for name in ("noise_per_block", "target_snr", "tti", "p_max", "circuit_power"):
            if not getattr(self, name) > 0:
                raise ValueError(f"LteConfig.{name} must be positive")
        if self.total_prbp < 1:
            raise ValueError("LteConfig.total_prbp must be >= 1")
        if self.pa_inefficiency < 1:
            raise ValueError("LteConfig.pa_inefficiency must be >= 1")


def lte_min_prbp(bits: float, table: TbsTable) -> Optional[int]:
    """Fewest PRBPs whose largest TBS carries ``bits``; None beyond the table."""
    for c in range(1, table.max_prbp + 1):
        if table(c, MAX_TBS_INDEX) >= bits:
            return c
    return None


def min_tbs_index(c: int, bits: float, table: TbsTable) -> Optional[int]:
    """Lowest TBS index whose block at ``c`` PRBPs holds ``bits``."""
    for delta in range(MAX_TBS_INDEX + 1):
        if table(c, delta) >= bits:
            return delta
    return None


def lte_power(c: int, delta: int, cfg: LteConfig, gamma: float, table: TbsTable) -> float:
    """Open-loop uplink power for ``c`` PRBPs at TBS index ``delta``.

    Evaluated as printed::

        c * (b*(g0 + pn) + (1 - b*Pmax)) * b * gamma * (2**(1.25*TBS / (12*c*Ns)) - 1)

    with ``b`` the compensation factor. The mixed units are kept on purpose;
    absolute powers only have meaning inside this model.
    """
    if c < 1:
        raise ValueError("PRBP count must be >= 1")
    b = cfg.compensation
    tbs = table(c, delta)
    spectral = math.expm1(math.log(2.0) * 1.25 * tbs / (12.0 * c * cfg.symbols_per_prbp))
    return c * (b * (cfg.target_snr + cfg.noise_per_block) + (1.0 - b * cfg.p_max)) * b * gamma * spectral


def lte_lifetime(node: NodeState, cfg: LteConfig, power: float) -> float:
    """Lifetime with one TTI of airtime per duty cycle."""
    per_cycle = (node.static_energy + node.clients * node.listen_energy
                 + cfg.tti * (cfg.circuit_power + cfg.pa_inefficiency * power))
    return node.energy * node.period / per_cycle


def lte_gamma(node: NodeState, cfg: LteConfig) -> float:
    """Noise-referred pathloss: power that yields unit SNR at the base station."""
    return node.pathloss * cfg.noise_per_block


def _option(node: NodeState, bits: float, c: int, cfg: LteConfig, table: TbsTable):
    """(lifetime, index, power) for exactly ``c`` PRBPs; lifetime 0 if infeasible."""
    if c < 1 or c > table.max_prbp:
        return 0.0, None, math.inf
    delta = min_tbs_index(c, bits, table)
    if delta is None:
        return 0.0, None, math.inf
    power = lte_power(c, delta, cfg, lte_gamma(node, cfg), table)
    if power > cfg.p_max:
        return 0.0, delta, power
    return lte_lifetime(node, cfg, power), delta, power


def _result(nodes: Sequence[NodeState], counts: Sequence[int], bits: Sequence[float], cfg: LteConfig,
            table: TbsTable, policy: str) -> ScheduleResult:
    allocs, lifes, deltas = [], [], []
    feasible = True
    for node, c, b in zip(nodes, counts, bits):
        life, delta, power = _option(node, b, c, cfg, table) if c > 0 else (0.0, None, math.inf)
        if life <= 0.0:
            feasible = False
        allocs.append(Allocation(node.node_id, cfg.tti if c > 0 else 0.0, int(c), float(power)))
        lifes.append(life)
        deltas.append(delta)
    return ScheduleResult(allocs, min(lifes), lifes, policy, feasible, integral=True, tbs_indices=deltas)


def _bits(nodes: Sequence[NodeState], mean_payload: Optional[float]) -> List[float]:
    dhat = mean_payload if mean_payload is not None else sum(n.payload for n in nodes) / len(nodes)
    return [(n.clients + 1) * dhat for n in nodes]


def algorithm1(nodes: Sequence[NodeState], beta: int, cfg: LteConfig, table: TbsTable,
               mean_payload: Optional[float] = None) -> ScheduleResult:
    """Cooperation-incentive PRBP scheduler.

    1. ``c_in = c_min * (1 + beta * n)`` per node;
    2. per node, the count in ``1..c_in`` with the highest lifetime (a count
       needing more than ``p_max`` scores zero; ties take fewer PRBPs);
    3. leftover PRBPs go one grant at a time to the minimum-lifetime node
       (lowest id on ties) while a grant strictly raises its lifetime. A
       grant may span several PRBPs when the next single one does not help
       but a larger step within the leftover does.
    """
    if beta < 0 or int(beta) != beta:
        raise ValueError("LTE incentive beta must be a non-negative integer")
    beta = int(beta)
    bits = _bits(nodes, mean_payload)
    counts, lifes = [], []
    total_in = 0
    for node, b in zip(nodes, bits):
        cmin = lte_min_prbp(node.payload, table)
        if cmin is None:
            cmin = table.max_prbp
        c_in = min(cmin * (1 + beta * node.clients), table.max_prbp)
        total_in += c_in
        best_c, best_life = 1, -1.0
        for j in range(1, c_in + 1):
            life = _option(node, b, j, cfg, table)[0]
            if life > best_life:
                best_c, best_life = j, life
        counts.append(best_c)
        lifes.append(best_life)
    if total_in > cfg.total_prbp:
        res = _result(nodes, counts, bits, cfg, table, "lte-alg1")
        res.feasible = False
        return res

    left = cfg.total_prbp - sum(counts)
    while left > 0:
        k = min(range(len(nodes)), key=lambda i: (lifes[i], nodes[i].node_id))
        granted = False
        for step in range(1, left + 1):
            c_new = counts[k] + step
            if c_new > table.max_prbp:
                break
            life = _option(nodes[k], bits[k], c_new, cfg, table)[0]
            if life > lifes[k]:
                counts[k], lifes[k] = c_new, life
                left -= step
                granted = True
                break
        if not granted:
            break
    return _result(nodes, counts, bits, cfg, table, "lte-alg1")


def lte_era(nodes: Sequence[NodeState], cfg: LteConfig, table: TbsTable,
            mean_payload: Optional[float] = None) -> ScheduleResult:
    """Equal PRBP split; remainder to the lowest ids."""
    n = len(nodes)
    share, rem = divmod(cfg.total_prbp, n)
    order = sorted(range(n), key=lambda k: nodes[k].node_id)
    counts = [share] * n
    for k in order[:rem]:
        counts[k] += 1
    counts = [min(c, table.max_prbp) for c in counts]
    return _result(nodes, counts, _bits(nodes, mean_payload), cfg, table, "lte-era")


def lte_tra(nodes: Sequence[NodeState], cfg: LteConfig, table: TbsTable,
            mean_payload: Optional[float] = None) -> ScheduleResult:
    """Nearest-first PRBP allocation.

    Each node in distance order takes the count maximizing its own lifetime
    while the minimum counts of the remaining nodes stay reserved.
    """
    bits = _bits(nodes, mean_payload)
    n = len(nodes)
    mins = []
    for b in bits:
        c = lte_min_prbp(b, table)
        mins.append(c if c is not None else table.max_prbp)
    order = sorted(range(n), key=lambda k: (nodes[k].distance, nodes[k].node_id))
    counts = [0] * n
    left = cfg.total_prbp
    for pos, k in enumerate(order):
        avail = min(left - sum(mins[j] for j in order[pos + 1:]), table.max_prbp)
        if avail < mins[k]:
            counts[k] = mins[k] if left >= mins[k] else 0
        else:
            counts[k] = max(range(mins[k], avail + 1),
                            key=lambda c: (_option(nodes[k], bits[k], c, cfg, table)[0], -c))
        left -= counts[k]
    return _result(nodes, counts, bits, cfg, table, "lte-tra")
