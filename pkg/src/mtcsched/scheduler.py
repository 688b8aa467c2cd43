"""Lifetime-maximizing uplink schedulers.

Four policies share one problem description:

* ``era`` -- equal split of resource elements,
* ``tra`` -- nearest-first greedy, each node takes its preferred airtime,
* ``noncoop`` -- max-min lifetime over the relaxed airtime simplex,
* ``coop`` -- the same max-min solve with cooperation rewards as lower bounds.

The max-min solve bisects on the common target lifetime ``z``. For a given
``z`` each node needs the shortest airtime whose per-cycle energy keeps its
lifetime at ``z``; the budget is feasible iff those airtimes fit. At the
optimum every node strictly above its lower bound sits at exactly ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import (
    LN2,
    Allocation,
    NodeState,
    RadioConfig,
    lambert_w0_plus_one,
    lifetime,
    min_elements,
    transmit_power,
)

__all__ = [
    "ScheduleProblem",
    "ScheduleResult",
    "tau_min",
    "tau_lower_bound_m",
    "tau_reward_r",
    "interior_minimizer",
    "tau_unconstrained_opt_x",
    "cycle_energy",
    "lower_bounds",
    "upper_caps",
    "schedule_maxmin",
    "schedule_noncoop",
    "randomized_round",
    "schedule_era",
    "schedule_tra",
    "brute_force_oracle",
]

MAX_BISECT = 200


@dataclass(frozen=True)
class ScheduleProblem:
    """Nodes of the reduced set plus the shared radio and reward parameter.

    ``mean_payload`` defaults to the arithmetic mean of the node payloads.
    """

    nodes: tuple
    radio: RadioConfig
    beta: float = 0.0
    mean_payload: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.beta < 0:
            raise ValueError("incentive beta must be >= 0")
        if not self.nodes:
            raise ValueError("problem needs at least one node")
        if self.mean_payload is None:
            dhat = sum(n.payload for n in self.nodes) / len(self.nodes)
            object.__setattr__(self, "mean_payload", dhat)

    def bits(self, node: NodeState) -> float:
        """Bits the node must deliver per cycle, ``(n + 1) * Dhat``."""
        return (node.clients + 1) * self.mean_payload

    def min_elements(self, node: NodeState) -> int:
        """``c_i^min`` from the node's own payload."""
        r = self.radio
        return min_elements(node.payload, node.channel_constant(r), r.p_max, r.element_duration, r.bandwidth)

    def precondition_holds(self) -> bool:
        """Reward feasibility ``sum((beta*n + 1) * c_min) <= c_t``."""
        need = sum((self.beta * n.clients + 1) * self.min_elements(n) for n in self.nodes)
        return need <= self.radio.total_elements


@dataclass
class ScheduleResult:
    allocations: List[Allocation]
    min_lifetime: float
    lifetimes: List[float]
    policy: str
    feasible: bool
    integral: bool = False
    target: Optional[float] = field(default=None, repr=False)
    tbs_indices: Optional[List[Optional[int]]] = field(default=None, repr=False)

    @property
    def taus(self) -> np.ndarray:
        return np.array([a.tau for a in self.allocations])

    @property
    def elements(self) -> np.ndarray:
        return np.array([a.elements for a in self.allocations])


# -- per-node airtime quantities -----------------------------------------

def _log_capacity(node: NodeState, radio: RadioConfig) -> float:
    return radio.bandwidth * math.log2(1.0 + radio.p_max / node.channel_constant(radio))


def tau_min(node: NodeState, radio: RadioConfig) -> float:
    """Shortest airtime for the node's own payload at ``p_max``."""
    return node.payload / _log_capacity(node, radio)


def tau_lower_bound_m(node: NodeState, radio: RadioConfig, mean_payload: float) -> float:
    """Shortest airtime for ``(n + 1) * Dhat`` bits at ``p_max``."""
    return (node.clients + 1) * mean_payload / _log_capacity(node, radio)


def tau_reward_r(node: NodeState, radio: RadioConfig, beta: float) -> float:
    """Guaranteed airtime ``(beta * n + 1) * tau_min`` for serving ``n`` clients."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return (beta * node.clients + 1.0) * tau_min(node, radio)


def interior_minimizer(bits: float, channel: float, radio: RadioConfig) -> float:
    """Airtime minimizing ``tau * (Pc + alpha * P(tau))`` with no bounds.

    The Lambert W argument ``(Pc - alpha*G) / (e*alpha*G)`` is passed as its
    offset ``Pc / (alpha*G)`` from the branch point, so nodes with large
    ``G`` keep full precision.
    """
    offset = radio.circuit_power / (radio.pa_inefficiency * channel)
    denom = lambert_w0_plus_one(offset)
    if denom == 0.0:
        return math.inf
    return LN2 * bits / radio.bandwidth / denom


def tau_unconstrained_opt_x(node: NodeState, radio: RadioConfig, beta: float, mean_payload: float) -> float:
    """Interior minimizer clamped below by ``tau_m`` and above by ``tau_r``."""
    bits = (node.clients + 1) * mean_payload
    t_m = tau_lower_bound_m(node, radio, mean_payload)
    t_r = tau_reward_r(node, radio, beta)
    return min(max(t_m, interior_minimizer(bits, node.channel_constant(radio), radio)), t_r)


def cycle_energy(tau: float, bits: float, channel: float, radio: RadioConfig) -> float:
    """Dynamic energy per duty cycle, ``tau * (Pc + alpha * P(tau))``."""
    return tau * (radio.circuit_power + radio.pa_inefficiency * transmit_power(bits, tau, channel, radio.bandwidth))


def _cycle_energy_slope(tau: float, bits: float, channel: float, radio: RadioConfig) -> float:
    u = bits * LN2 / (radio.bandwidth * tau)
    return radio.circuit_power + radio.pa_inefficiency * channel * (math.expm1(u) - u * math.exp(u))


def _airtime_for_energy(target: float, bits: float, channel: float, radio: RadioConfig,
                        lo: float, hi: float) -> float:
    """Smallest tau in [lo, hi] with cycle_energy(tau) <= target.

    The energy is convex and decreasing on [lo, hi], so Newton started at
    the left end never overshoots the root; a bracket guards the slow case
    where the root sits near the minimizer.
    """
    f_lo = cycle_energy(lo, bits, channel, radio) - target
    if f_lo <= 0.0:
        return lo
    if not math.isfinite(hi):
        hi = lo * 2.0
        while cycle_energy(hi, bits, channel, radio) > target:
            hi *= 2.0
            if hi > 1e12:
                return math.inf
    elif cycle_energy(hi, bits, channel, radio) > target:
        return hi
    a, b = lo, hi
    tau = lo
    for _ in range(200):
        f = cycle_energy(tau, bits, channel, radio) - target
        if f > 0.0:
            a = tau
        else:
            b = tau
            if f == 0.0:
                break
        slope = _cycle_energy_slope(tau, bits, channel, radio)
        cand = tau - f / slope if slope < 0.0 else math.nan
        if not (a < cand < b):
            cand = 0.5 * (a + b)
        if abs(cand - tau) <= 2e-16 * cand or b - a <= 4e-16 * b:
            tau = cand
            break
        tau = cand
    return tau


def lower_bounds(problem: ScheduleProblem, cooperative: Optional[bool] = None) -> np.ndarray:
    """Per-node airtime lower bounds.

    ``tau_m`` without incentive; with ``beta > 0`` the reward-clamped optimum
    ``tau_x`` raised to at least ``tau_m`` so power never exceeds ``p_max``.
    """
    if cooperative is None:
        cooperative = problem.beta > 0
    r, dhat = problem.radio, problem.mean_payload
    out = []
    for node in problem.nodes:
        t_m = tau_lower_bound_m(node, r, dhat)
        if cooperative:
            out.append(max(tau_unconstrained_opt_x(node, r, problem.beta, dhat), t_m))
        else:
            out.append(t_m)
    return np.array(out)


def upper_caps(problem: ScheduleProblem) -> np.ndarray:
    """Airtime beyond which more time only costs energy, ``max(tau_m, interior)``."""
    r, dhat = problem.radio, problem.mean_payload
    return np.array([
        max(tau_lower_bound_m(n, r, dhat), interior_minimizer(problem.bits(n), n.channel_constant(r), r))
        for n in problem.nodes
    ])


# -- result assembly -----------------------------------------------------

def _evaluate(problem: ScheduleProblem, taus: Sequence[float], policy: str, *, feasible: bool = True,
              integral: bool = False, elements: Optional[Sequence[float]] = None,
              target: Optional[float] = None) -> ScheduleResult:
    r = problem.radio
    allocs, lifes = [], []
    for k, (node, tau) in enumerate(zip(problem.nodes, taus)):
        tau = float(tau)
        elem = elements[k] if elements is not None else tau / r.element_duration
        if tau > 0:
            power = transmit_power(problem.bits(node), tau, node.channel_constant(r), r.bandwidth)
        else:
            power = math.inf
        if power > r.p_max * (1.0 + 1e-9):
            feasible = False
            life = 0.0
        else:
            life = lifetime(node, r, tau, power)
        allocs.append(Allocation(node.node_id, float(tau), elem, float(power)))
        lifes.append(life)
    return ScheduleResult(allocs, min(lifes), lifes, policy, feasible, integral, target)


# -- max-min solve -------------------------------------------------------

def _solve_maxmin(problem: ScheduleProblem, lbs: np.ndarray, policy: str) -> ScheduleResult:
    r = problem.radio
    nodes = problem.nodes
    budget = r.budget
    caps = np.maximum(upper_caps(problem), lbs)
    if lbs.sum() > budget * (1.0 + 1e-12):
        return _evaluate(problem, lbs, policy, feasible=False)

    bits = [problem.bits(n) for n in nodes]
    chans = [n.channel_constant(r) for n in nodes]
    fixed = [n.static_energy + n.clients * n.listen_energy for n in nodes]
    energy_t = [n.energy * n.period for n in nodes]

    def life_at(k, tau):
        return energy_t[k] / (fixed[k] + cycle_energy(tau, bits[k], chans[k], r))

    def airtimes(z):
        out = np.empty(len(nodes))
        for k in range(len(nodes)):
            target = energy_t[k] / z - fixed[k]
            if target <= 0:
                out[k] = math.inf
            else:
                out[k] = _airtime_for_energy(target, bits[k], chans[k], r, lbs[k], caps[k])
        return out

    cap_lifes = [life_at(k, caps[k]) for k in range(len(nodes))]
    z_hi = min(cap_lifes)
    if z_hi <= 0.0:
        return _evaluate(problem, lbs, policy)
    taus_hi = airtimes(z_hi)
    # The defining nodes sit at the flat bottom of their energy curve, where
    # the inversion is ill-conditioned; pin them to the exact minimizer.
    for k, life in enumerate(cap_lifes):
        if life == z_hi:
            taus_hi[k] = caps[k]
    if taus_hi.sum() <= budget:
        return _evaluate(problem, taus_hi, policy, target=z_hi)

    z_lo = min(life_at(k, lbs[k]) for k in range(len(nodes)))
    taus_lo = airtimes(z_lo)
    for _ in range(MAX_BISECT):
        if z_hi - z_lo <= 1e-15 * z_hi:
            break
        z_mid = 0.5 * (z_lo + z_hi)
        taus_mid = airtimes(z_mid)
        if taus_mid.sum() <= budget:
            z_lo, taus_lo = z_mid, taus_mid
        else:
            z_hi = z_mid

    # Hand residual slack to nodes between their bounds; lifetimes only rise.
    slack = budget - taus_lo.sum()
    free = (taus_lo > lbs + 1e-9 * budget) & (taus_lo < caps)
    if slack > 0 and free.any():
        room = np.where(free, np.minimum(caps, budget) - taus_lo, 0.0)
        if room.sum() > 0:
            taus_lo = taus_lo + room * min(1.0, slack / room.sum())
    return _evaluate(problem, taus_lo, policy, target=z_lo)


def _round_result(problem: ScheduleProblem, frac: ScheduleResult, lbs: np.ndarray,
                  rng: np.random.Generator) -> ScheduleResult:
    r = problem.radio
    tau_r = r.element_duration
    lower = [max(1, _ceil_snap(lb / tau_r)) for lb in lbs]

    def life_at(k, c):
        node = problem.nodes[k]
        tau = c * tau_r
        p = transmit_power(problem.bits(node), tau, node.channel_constant(r), r.bandwidth)
        return lifetime(node, r, tau, p) if p <= r.p_max * (1 + 1e-9) else 0.0

    counts = randomized_round(frac.taus, tau_r, r.total_elements, lower, rng, lifetime_at=life_at)
    feasible = frac.feasible and counts.sum() <= r.total_elements and all(
        c >= lo for c, lo in zip(counts, lower))
    res = _evaluate(problem, counts * tau_r, frac.policy, feasible=feasible, integral=True,
                    elements=[int(c) for c in counts], target=frac.target)
    return res


def schedule_maxmin(problem: ScheduleProblem, rng: Optional[np.random.Generator] = None) -> ScheduleResult:
    """Max-min lifetime schedule, cooperation-aware when ``beta > 0``.

    Solves the relaxed problem over airtimes. With ``rng`` the airtimes are
    rounded to whole resource elements afterwards.
    """
    lbs = lower_bounds(problem)
    frac = _solve_maxmin(problem, lbs, "coop" if problem.beta > 0 else "noncoop")
    if rng is None:
        return frac
    return _round_result(problem, frac, lbs, rng)


def schedule_noncoop(problem: ScheduleProblem, rng: Optional[np.random.Generator] = None) -> ScheduleResult:
    """Max-min lifetime schedule ignoring cooperation rewards."""
    lbs = lower_bounds(problem, cooperative=False)
    frac = _solve_maxmin(problem, lbs, "noncoop")
    if rng is None:
        return frac
    return _round_result(problem, frac, lbs, rng)


# -- rounding ------------------------------------------------------------

def _ceil_snap(x: float) -> int:
    k = round(x)
    if abs(x - k) <= 1e-9 * max(1.0, abs(x)):
        return int(k)
    return int(math.ceil(x))


def randomized_round(taus: Sequence[float], tau_r: float, total_elements: int,
                     lower_elements: Sequence[int], rng: np.random.Generator,
                     lifetime_at: Optional[Callable[[int, int], float]] = None) -> np.ndarray:
    """Round fractional airtimes to element counts.

    Each count rounds up with probability equal to its fractional part, is
    lifted to the node's integer lower bound, and, if the total exceeds
    ``total_elements``, counts are taken back one at a time from the node
    that keeps the highest lifetime after losing an element (lowest index
    on ties). Without ``lifetime_at`` the node rounded up the most loses
    first.
    """
    x = np.asarray(taus, dtype=float) / tau_r
    snapped = np.round(x)
    x = np.where(np.abs(x - snapped) <= 1e-9 * np.maximum(1.0, np.abs(x)), snapped, x)
    base = np.floor(x)
    frac = x - base
    draws = rng.random(len(x))
    counts = (base + (draws < frac)).astype(np.int64)
    lower = np.asarray(lower_elements, dtype=np.int64)
    counts = np.maximum(counts, lower)
    while counts.sum() > total_elements:
        best, best_score = -1, -math.inf
        for k in range(len(counts)):
            if counts[k] <= lower[k]:
                continue
            score = lifetime_at(k, int(counts[k]) - 1) if lifetime_at else counts[k] - x[k]
            if score > best_score:
                best, best_score = k, score
        if best < 0:
            break
        counts[best] -= 1
    return counts


# -- baselines -----------------------------------------------------------

def schedule_era(problem: ScheduleProblem) -> ScheduleResult:
    """Equal resource allocation; remainder elements go to the lowest ids."""
    r = problem.radio
    n = len(problem.nodes)
    share, rem = divmod(int(r.total_elements), n)
    order = sorted(range(n), key=lambda k: problem.nodes[k].node_id)
    counts = [share] * n
    for k in order[:rem]:
        counts[k] += 1
    taus = [c * r.element_duration for c in counts]
    return _evaluate(problem, taus, "era", integral=True, elements=counts)


def schedule_tra(problem: ScheduleProblem) -> ScheduleResult:
    """Nearest-first allocation.

    In order of distance each node takes the whole-element airtime that
    maximizes its own lifetime, keeping back the minimum counts of every
    node still waiting.
    """
    r = problem.radio
    tau_r = r.element_duration
    nodes = problem.nodes
    n = len(nodes)
    lbs = lower_bounds(problem, cooperative=False)
    caps = upper_caps(problem)
    mins = [max(1, _ceil_snap(lb / tau_r)) for lb in lbs]
    order = sorted(range(n), key=lambda k: (nodes[k].distance, nodes[k].node_id))
    counts = [0] * n
    left = int(r.total_elements)
    feasible = True
    for pos, k in enumerate(order):
        reserve = sum(mins[j] for j in order[pos + 1:])
        avail = left - reserve
        if avail < mins[k]:
            if left >= mins[k]:
                counts[k] = mins[k]
            else:
                feasible = False
            left -= counts[k]
            continue
        node = nodes[k]
        want = caps[k] / tau_r
        if want >= avail:
            choice = avail
        else:
            cands = {max(mins[k], int(math.floor(want))), max(mins[k], int(math.ceil(want)))}
            choice = max(sorted(cands), key=lambda c: cycle_energy_neg(problem, node, c * tau_r))
            choice = min(choice, avail)
        counts[k] = choice
        left -= choice
    taus = [c * tau_r for c in counts]
    res = _evaluate(problem, taus, "tra", integral=True, elements=counts)
    res.feasible = res.feasible and feasible
    return res


def cycle_energy_neg(problem: ScheduleProblem, node: NodeState, tau: float) -> float:
    r = problem.radio
    return -cycle_energy(tau, problem.bits(node), node.channel_constant(r), r)


# -- validation oracle ---------------------------------------------------

def brute_force_oracle(problem: ScheduleProblem, grid_resolution: float = 1e-4,
                       lbs: Optional[np.ndarray] = None) -> ScheduleResult:
    """Exhaustive max-min search over airtimes on a uniform budget grid.

    Only for up to four nodes. The last node always takes its best airtime
    within what remains, which is the same as scanning every grid point.
    """
    nodes = problem.nodes
    if len(nodes) > 4:
        raise ValueError("brute-force oracle refuses more than 4 nodes")
    r = problem.radio
    if lbs is None:
        lbs = lower_bounds(problem)
    steps = int(round(1.0 / grid_resolution))
    h = r.budget / steps
    grid = np.arange(steps + 1) * h

    tables = []
    for node, lb in zip(nodes, lbs):
        G = node.channel_constant(r)
        bits = problem.bits(node)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            power = G * np.expm1(bits * np.log(2.0) / (r.bandwidth * grid))
            per_cycle = (node.static_energy + node.clients * node.listen_energy
                         + grid * (r.circuit_power + r.pa_inefficiency * power))
            life = node.energy * node.period / per_cycle
        ok = (grid >= lb * (1 - 1e-12)) & (power <= r.p_max * (1 + 1e-12)) & (grid > 0)
        tables.append(np.where(ok, life, -np.inf))

    last = np.maximum.accumulate(tables[-1])
    last_arg = _running_argmax(tables[-1])
    n = len(nodes)
    best_val, best_idx = -np.inf, None
    if n == 1:
        best_val, best_idx = last[steps], (int(last_arg[steps]),)
    elif n == 2:
        vals = np.minimum(tables[0], last[::-1])
        k1 = int(np.argmax(vals))
        best_val, best_idx = vals[k1], (k1, int(last_arg[steps - k1]))
    else:
        def search(prefix, floor_val, used):
            nonlocal best_val, best_idx
            depth = len(prefix)
            if depth == n - 2:
                rem = steps - used
                k = np.arange(rem + 1)
                vals = np.minimum(np.minimum(floor_val, tables[depth][:rem + 1]), last[rem - k])
                j = int(np.argmax(vals))
                if vals[j] > best_val:
                    best_val = vals[j]
                    best_idx = prefix + (j, int(last_arg[rem - j]))
                return
            for k in range(steps - used + 1):
                v = min(floor_val, tables[depth][k])
                if v <= best_val:
                    continue
                search(prefix + (k,), v, used + k)
        search((), np.inf, 0)
    if best_idx is None or not np.isfinite(best_val):
        return _evaluate(problem, lbs, "oracle", feasible=False)
    taus = [k * h for k in best_idx]
    return _evaluate(problem, taus, "oracle")


def _running_argmax(values: np.ndarray) -> np.ndarray:
    best = np.maximum.accumulate(values)
    idx = np.arange(len(values))
    hit = np.where(values == best, idx, 0)
    return np.maximum.accumulate(hit)
