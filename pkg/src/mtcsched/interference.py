"""Underlay admission budgets and primary-user outage simulation.

M machine groups reuse the primary user's uplink resource. Averaging the
SINR constraint over fading and uniformly placed interferers turns it into
a budget on ``M * P_t^m``; the Monte Carlo side draws the actual geometry
and Rayleigh fading to measure the primary user's outage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CELL_INNER_M, CELL_OUTER_M, PATHLOSS_INTERCEPT_DB, PATHLOSS_SLOPE_DB, db_to_linear

# 37.6 dB per decade of distance
PATHLOSS_EXPONENT = 3.76

__all__ = [
    "UnderlayScenario",
    "OutageEstimate",
    "default_pathloss_const",
    "interference_threshold",
    "mean_inverse_distance_moment",
    "intra_power_from_radius",
    "max_group_count",
    "radius_count_frontier",
    "admissible_groups",
    "budget_intra_power",
    "simulate_outage",
    "outage_probability",
    "rayleigh_outage",
]

CHUNK = 1 << 15


def default_pathloss_const() -> float:
    """``c`` in ``g = c / d**delta`` matching the log-distance model (d in m)."""
    return 10.0 ** (-(PATHLOSS_INTERCEPT_DB - PATHLOSS_SLOPE_DB * 3.0) / 10.0)


@dataclass(frozen=True)
class UnderlayScenario:
    """Primary link, interferer ring and intra-group link parameters.

    Powers in watts, distances in metres, ``sinr_threshold`` linear.
    ``intra_power`` of None means "derive from the group radius".
    """

    pu_distance: float = 250.0
    pu_power: float = 1.0
    sinr_threshold: float = db_to_linear(2.0)
    noise: float = db_to_linear(-121.0)
    pathloss_const: float = default_pathloss_const()
    exponent: float = PATHLOSS_EXPONENT
    inner: float = CELL_INNER_M
    outer: float = CELL_OUTER_M
    groups: int = 0
    intra_power: Optional[float] = None
    group_radius: float = 30.0
    intra_exponent: float = PATHLOSS_EXPONENT
    intra_const: float = default_pathloss_const()
    edge_rx_power: float = db_to_linear(-90.0)

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("UnderlayScenario needs 0 < inner < outer")
        if not self.sinr_threshold > 0:
            raise ValueError("UnderlayScenario.sinr_threshold must be positive")
        if self.groups < 0 or int(self.groups) != self.groups:
            raise ValueError("UnderlayScenario.groups must be a non-negative integer")
        for name in ("pu_distance", "pu_power", "pathloss_const", "exponent", "group_radius",
                     "intra_exponent", "intra_const", "edge_rx_power"):
            if not getattr(self, name) > 0:
                raise ValueError(f"UnderlayScenario.{name} must be positive")
        if self.noise < 0:
            raise ValueError("UnderlayScenario.noise must be >= 0")
        if self.intra_power is not None and self.intra_power < 0:
            raise ValueError("UnderlayScenario.intra_power must be >= 0")


def interference_threshold(s: UnderlayScenario) -> float:
    """Largest mean aggregate interference the primary user tolerates.

    Negative when even an interference-free link misses the SINR target on
    average, i.e. no underlay reuse is admissible.
    """
    return s.pu_power * s.pathloss_const / (s.sinr_threshold * s.pu_distance ** s.exponent) - s.noise


def mean_inverse_distance_moment(inner: float, outer: float, exponent: float) -> float:
    """Integral of ``d**-delta * 2d / d_x**2`` over ``[d_n, d_x]``."""
    if not 0 < inner < outer:
        raise ValueError("need 0 < inner < outer")
    if exponent == 2.0:
        return 2.0 / outer ** 2 * math.log(outer / inner)
    a = 2.0 - exponent
    # (x**a - y**a) / a via expm1 stays accurate when a is near zero.
    ln_o, ln_i = math.log(outer), math.log(inner)
    diff = math.exp(a * ln_i) * math.expm1(a * (ln_o - ln_i)) / a
    return 2.0 * diff / outer ** 2


def intra_power_from_radius(s: UnderlayScenario, radius: Optional[float] = None) -> float:
    """Group-edge transmit power ``P_r^m * Delta**delta_m / c_m``."""
    radius = s.group_radius if radius is None else radius
    return s.edge_rx_power * radius ** s.intra_exponent / s.intra_const


def _intra_power(s: UnderlayScenario) -> float:
    return s.intra_power if s.intra_power is not None else intra_power_from_radius(s)


def max_group_count(s: UnderlayScenario) -> int:
    """Most concurrently active groups allowed by the mean interference budget."""
    i_th = interference_threshold(s)
    power = _intra_power(s)
    if i_th <= 0:
        return 0
    if power == 0:
        raise ValueError("intra-group power must be positive")
    moment = mean_inverse_distance_moment(s.inner, s.outer, s.exponent)
    return max(0, int(math.floor(i_th / (s.pathloss_const * power * moment))))


def radius_count_frontier(s: UnderlayScenario) -> float:
    """Right-hand side ``K`` of ``Delta**delta_m * M <= K``.

    Only defined for pathloss exponents above 2.
    """
    if not s.exponent > 2.0:
        raise ValueError("radius/count frontier needs exponent > 2; use the delta = 2 moment directly")
    k = s.exponent - 2.0
    geometry = s.outer ** 2 * k / (s.inner ** -k - s.outer ** -k)
    return geometry * s.intra_const * interference_threshold(s) / (2.0 * s.pathloss_const * s.edge_rx_power)


def admissible_groups(s: UnderlayScenario, radius: float) -> float:
    """Pre-floor group count on the frontier for a given group radius."""
    return radius_count_frontier(s) / radius ** s.intra_exponent


def budget_intra_power(s: UnderlayScenario, groups: int) -> float:
    """Intra-group power that spends the whole budget on ``groups`` groups."""
    if groups <= 0:
        return 0.0
    i_th = interference_threshold(s)
    if i_th <= 0:
        return 0.0
    moment = mean_inverse_distance_moment(s.inner, s.outer, s.exponent)
    return i_th / (s.pathloss_const * groups * moment)


def rayleigh_outage(s: UnderlayScenario) -> float:
    """Interference-free outage under Rayleigh fading on the primary link."""
    mean_snr = s.pu_power * s.pathloss_const / (s.pu_distance ** s.exponent * s.noise)
    return -math.expm1(-s.sinr_threshold / mean_snr)


@dataclass(frozen=True)
class OutageEstimate:
    outage: float
    stderr: float
    trials: int
    mean_interference: float
    intra_power: float


def _chunk(s: UnderlayScenario, n: int, groups: int, power: float, seed: int, index: int):
    # One stream for the primary link and one per interferer slot, so runs
    # with different group counts share their common draws.
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, 0)))
    h0 = rng.standard_exponential(n)
    interference = np.zeros(n)
    for slot in range(groups):
        g = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, slot + 1)))
        d = np.sqrt(g.uniform(s.inner ** 2, s.outer ** 2, n))
        h = g.standard_exponential(n)
        interference += power * s.pathloss_const * d ** -s.exponent * h
    signal = s.pu_power * s.pathloss_const * s.pu_distance ** -s.exponent * h0
    outages = int(np.count_nonzero(signal < s.sinr_threshold * (interference + s.noise)))
    return outages, float(interference.sum())


def simulate_outage(s: UnderlayScenario, trials: int, seed: int, groups: Optional[int] = None,
                    intra_power: Optional[float] = None) -> OutageEstimate:
    """Monte Carlo outage of the primary user with ``groups`` active groups.

    Interferers sit uniformly on the ring; every link, the primary one
    included, sees unit-mean Rayleigh power fading. Unless given, the
    intra-group power is the one that exhausts the mean interference budget
    for that many groups. Trials run in fixed-size chunks with their own
    derived seeds and are reduced in chunk order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    groups = s.groups if groups is None else groups
    power = budget_intra_power(s, groups) if intra_power is None else intra_power
    outages, interference = 0, 0.0
    done, index = 0, 0
    while done < trials:
        n = min(CHUNK, trials - done)
        o, i = _chunk(s, n, groups, power, seed, index)
        outages += o
        interference += i
        done += n
        index += 1
    p = outages / trials
    return OutageEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / trials), trials, interference / trials, power)


def outage_probability(s: UnderlayScenario, trials: int, seed: int, groups: Optional[int] = None) -> float:
    """Estimated probability that the primary user's SINR falls below target."""
    return simulate_outage(s, trials, seed, groups).outage
