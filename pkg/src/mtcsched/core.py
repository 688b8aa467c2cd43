"""Shared domain types, energy/lifetime model, pathloss and Lambert W.

All quantities are SI: joules, watts, seconds, hertz and bits. Decibel
values are converted once by the caller (see :func:`db_to_linear`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

__all__ = [
    "RadioConfig",
    "NodeState",
    "Allocation",
    "db_to_linear",
    "transmit_power",
    "min_elements",
    "lifetime",
    "lambert_w0",
    "pathloss_db",
    "pathloss_gain",
    "default_radio",
]

INV_E = math.exp(-1.0)
LN2 = math.log(2.0)

# Urban-macro log-distance model, distance in km.
PATHLOSS_INTERCEPT_DB = 128.1
PATHLOSS_SLOPE_DB = 37.6
CELL_INNER_M = 50.0
CELL_OUTER_M = 450.0


def db_to_linear(value_db: float) -> float:
    """Convert a decibel ratio (or dBW power) to linear scale."""
    return 10.0 ** (value_db / 10.0)


@dataclass(frozen=True)
class RadioConfig:
    """Air-interface constants shared by every node in the cell.

    Attributes
    ----------
    bandwidth : float
        Uplink bandwidth ``w`` in Hz.
    element_duration : float
        Length of one resource element ``tau_r`` in seconds.
    total_elements : int
        Number of resource elements ``c_t`` available per scheduling round.
    snr_gap : float
        Linear SNR gap between capacity and practical coding, >= 1.
    noise_psd : float
        Receiver noise spectral density ``N0`` in W/Hz.
    p_max : float
        Maximum transmit power in W.
    pa_inefficiency : float
        Inverse power-amplifier efficiency ``alpha``, >= 1.
    circuit_power : float
        Circuit power in transmit mode ``P_c`` in W.
    """

    bandwidth: float
    element_duration: float
    total_elements: int
    snr_gap: float
    noise_psd: float
    p_max: float
    pa_inefficiency: float
    circuit_power: float

    def __post_init__(self):
        for name in ("bandwidth", "element_duration", "total_elements", "snr_gap",
                     "noise_psd", "p_max", "pa_inefficiency", "circuit_power"):
            value = getattr(self, name)
            if not value > 0 or not math.isfinite(value):
                raise ValueError(f"RadioConfig.{name} must be positive and finite, got {value!r}")
        if self.snr_gap < 1.0:
            raise ValueError(f"RadioConfig.snr_gap must be >= 1, got {self.snr_gap!r}")
        if self.pa_inefficiency < 1.0:
            raise ValueError(f"RadioConfig.pa_inefficiency must be >= 1, got {self.pa_inefficiency!r}")
        if int(self.total_elements) != self.total_elements:
            raise ValueError("RadioConfig.total_elements must be an integer")

    @property
    def budget(self) -> float:
        """Total schedulable airtime ``c_t * tau_r`` in seconds."""
        return self.total_elements * self.element_duration

    def with_budget(self, airtime: float) -> "RadioConfig":
        """Copy with ``total_elements`` set to floor(airtime / tau_r)."""
        return replace(self, total_elements=max(1, int(math.floor(airtime / self.element_duration + 1e-9))))


def default_radio(**overrides) -> RadioConfig:
    """Radio defaults for the single-cell evaluation setting.

    Noise is -121 dBW over one 180 kHz resource block, P_max is 1 W and
    circuit power 1 mW. The remaining constants are not tabulated by the
    model and are fixed here: 1 us elements, unit SNR gap, alpha = 2.
    """
    bandwidth = overrides.pop("bandwidth", 180e3)
    if not bandwidth > 0:
        raise ValueError(f"RadioConfig.bandwidth must be positive and finite, got {bandwidth!r}")
    params = dict(
        bandwidth=bandwidth,
        element_duration=1e-6,
        total_elements=1000,
        snr_gap=1.0,
        noise_psd=db_to_linear(-121.0) / bandwidth,
        p_max=1.0,
        pa_inefficiency=2.0,
        circuit_power=1e-3,
    )
    params.update(overrides)
    return RadioConfig(**params)


@dataclass(frozen=True)
class NodeState:
    """Per-device energy, traffic and channel state at the scheduling instant.

    ``pathloss`` is the linear attenuation (>= 1) towards the base station,
    ``listen_energy`` the energy spent per client per duty cycle.
    """

    node_id: int
    energy: float
    period: float
    payload: float
    static_energy: float
    pathloss: float
    listen_energy: float = 0.0
    clients: int = 0
    distance: float = 0.0
    position: Optional[Tuple[float, float]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.energy < 0:
            raise ValueError(f"node {self.node_id}: energy must be >= 0")
        if not self.payload > 0:
            raise ValueError(f"node {self.node_id}: payload must be > 0")
        if not self.static_energy > 0:
            raise ValueError(f"node {self.node_id}: static energy must be > 0")
        if not self.period > 0:
            raise ValueError(f"node {self.node_id}: period must be > 0")
        if not self.pathloss > 0:
            raise ValueError(f"node {self.node_id}: pathloss must be > 0")
        if self.listen_energy < 0:
            raise ValueError(f"node {self.node_id}: listen energy must be >= 0")
        if int(self.clients) != self.clients or self.clients < 0:
            raise ValueError(f"node {self.node_id}: clients must be a non-negative integer")

    def channel_constant(self, radio: RadioConfig) -> float:
        """Composite constant ``G = g * Gamma * N0 * w`` in watts."""
        return self.pathloss * radio.snr_gap * radio.noise_psd * radio.bandwidth


@dataclass(frozen=True)
class Allocation:
    node_id: int
    tau: float
    elements: float
    power: float


def transmit_power(bits: float, tau: float, channel: float, bandwidth: float) -> float:
    """Power needed to push ``bits`` through ``tau`` seconds of airtime.

    Shannon inversion ``G * (2**(D / (tau * w)) - 1)``. Returns ``inf`` when
    the exponent overflows.
    """
    if not tau > 0:
        raise ValueError(f"airtime must be positive, got {tau!r}")
    if not bits > 0:
        raise ValueError(f"payload must be positive, got {bits!r}")
    exponent = bits / (tau * bandwidth) * LN2
    if exponent > 700.0:
        return math.inf
    return channel * math.expm1(exponent)


def min_elements(bits: float, channel: float, p_max: float, tau_r: float, bandwidth: float) -> int:
    """Smallest element count whose power stays within ``p_max``."""
    capacity = tau_r * bandwidth * math.log2(1.0 + p_max / channel)
    ratio = bits / capacity
    # Absorb float noise on exact multiples before taking the ceiling.
    return max(1, math.ceil(ratio * (1.0 - 1e-12)))


def lifetime(node: NodeState, radio: RadioConfig, tau: float, power: float) -> float:
    """Expected lifetime ``E*T / (Es + tau*(Pc + alpha*P) + n*Eh)``."""
    if tau < 0 or power < 0:
        raise ValueError("tau and power must be non-negative")
    per_cycle = (node.static_energy
                 + tau * (radio.circuit_power + radio.pa_inefficiency * power)
                 + node.clients * node.listen_energy)
    return node.energy * node.period / per_cycle


# -- Lambert W -------------------------------------------------------------

def _branch_series(y: float) -> float:
    # (y - 1) * e**y + 1 without cancellation for small y.
    if abs(y) < 0.1:
        total, term = 0.0, y
        for k in range(2, 20):
            term *= y / k
            total += (k - 1) * term
        return total
    return (y - 1.0) * math.exp(y) + 1.0


def _shifted_near_branch(p: float) -> float:
    """Solve (y-1)e^y + 1 = p for y = W + 1 >= 0, with 0 <= p <= 1."""
    if p == 0.0:
        return 0.0
    y = math.sqrt(2.0 * p) * (1.0 - math.sqrt(2.0 * p) / 3.0)
    y = max(y, 1e-300)
    for _ in range(60):
        ey = math.exp(y)
        f = _branch_series(y) - p
        d1 = y * ey
        d2 = (y + 1.0) * ey
        step = f / (d1 - 0.5 * f * d2 / d1)
        y_new = y - step
        if y_new <= 0.0:
            y_new = 0.5 * y
        done = abs(y_new - y) <= 4e-16 * y_new
        y = y_new
        if done:
            break
    return y


def _halley(x: float) -> float:
    if x > 1e10:
        # Newton on w + ln w = ln x avoids overflow in e**w.
        lx = math.log(x)
        w = lx - math.log(lx)
        for _ in range(60):
            step = (w + math.log(w) - lx) / (1.0 + 1.0 / w)
            w -= step
            if abs(step) <= 4e-16 * abs(w):
                break
        return w
    if x < 1.0:
        w = x * (1.0 - x) if x > -0.25 else x
    else:
        lx = math.log(x)
        w = lx - math.log(lx) if x > math.e else math.log1p(x) * 0.75
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 4e-16 * max(abs(w), 1e-300):
            break
    return w


def lambert_w0_plus_one(offset: float) -> float:
    """Return ``W0(x) + 1`` where ``offset = e*x + 1 >= 0``.

    Working with the offset from the branch point keeps full relative
    precision when ``x`` sits just above ``-1/e``.
    """
    if offset < 0:
        raise ValueError(f"argument below the branch point -1/e (offset {offset!r})")
    if offset <= 0.3:
        return _shifted_near_branch(offset)
    return 1.0 + _halley((offset - 1.0) * INV_E)


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function for real ``x >= -1/e``.

    Halley iteration from a branch-aware starting point; near ``-1/e`` the
    iteration runs on ``W + 1`` instead.

    >>> round(lambert_w0(math.e), 12)
    1.0
    """
    x = float(x)
    if math.isnan(x):
        raise ValueError("lambert_w0 of NaN")
    offset = math.e * x + 1.0
    if offset < 0:
        if offset > -4e-16:
            return -1.0
        raise ValueError(f"lambert_w0 undefined for x < -1/e, got {x!r}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf
    if offset <= 0.3:
        return _shifted_near_branch(offset) - 1.0
    return _halley(x)


# -- Pathloss --------------------------------------------------------------

def pathloss_db(distance: float) -> float:
    """Log-distance urban-macro pathloss ``128.1 + 37.6 log10(d / 1 km)``."""
    return PATHLOSS_INTERCEPT_DB + PATHLOSS_SLOPE_DB * math.log10(distance / 1000.0)


def pathloss_gain(distance: float, inner_radius: float = CELL_INNER_M) -> float:
    """Linear attenuation (>= 1 at cellular distances) at ``distance`` metres."""
    if distance < inner_radius:
        raise ValueError(f"distance {distance!r} m is inside the cell inner radius {inner_radius} m")
    return db_to_linear(pathloss_db(distance))
