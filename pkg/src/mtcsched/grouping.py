"""Rewarding-based distributed grouping.

Each node evaluates its own lifetime for every client count it could
serve, given the broadcast incentive ``beta``. Nodes that gain from serving
at least one client announce themselves as representatives; the others
ask the nearest representative within range to take them on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .core import NodeState, RadioConfig, lifetime, transmit_power
from .scheduler import tau_lower_bound_m, tau_unconstrained_opt_x

__all__ = [
    "GroupingConfig",
    "GroupingOutcome",
    "REPRESENTATIVE",
    "MEMBER",
    "SOLO",
    "predicted_lifetime",
    "optimal_clients",
    "form_groups",
    "fixed_size_groups",
]

REPRESENTATIVE = "representative"
MEMBER = "member"
SOLO = "solo"


@dataclass(frozen=True)
class GroupingConfig:
    """Incentive and grouping limits.

    ``listen_ratio`` is ``xi = E_h / E_s``; ``attach_range`` is the group
    radius in metres within which members may attach.
    """

    beta: float = 0.0
    n_max: int = 5
    listen_ratio: float = 1.0
    attach_range: float = 30.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("GroupingConfig.beta must be >= 0")
        if self.n_max < 0 or int(self.n_max) != self.n_max:
            raise ValueError("GroupingConfig.n_max must be a non-negative integer")
        if self.listen_ratio < 0:
            raise ValueError("GroupingConfig.listen_ratio must be >= 0")
        if not self.attach_range > 0:
            raise ValueError("GroupingConfig.attach_range must be positive")


@dataclass
class GroupingOutcome:
    roles: Dict[int, Tuple[str, Optional[int]]]
    clients: Dict[int, int]
    reduced: List[NodeState]
    members: Dict[int, List[int]] = field(default_factory=dict)

    def count(self, role: str) -> int:
        return sum(1 for r, _ in self.roles.values() if r == role)


def _with_clients(node: NodeState, n: int, config: GroupingConfig) -> NodeState:
    return replace(node, clients=n, listen_energy=config.listen_ratio * node.static_energy)


def predicted_lifetime(node: NodeState, radio: RadioConfig, config: GroupingConfig, n: int,
                       mean_payload: Optional[float] = None) -> float:
    """Lifetime a node expects when serving ``n`` clients at its best airtime.

    Zero when the guaranteed airtime cannot carry ``(n + 1)`` payloads
    within ``p_max``.
    """
    dhat = node.payload if mean_payload is None else mean_payload
    cand = _with_clients(node, n, config)
    tau = tau_unconstrained_opt_x(cand, radio, config.beta, dhat)
    if tau < tau_lower_bound_m(cand, radio, dhat) * (1.0 - 1e-12):
        return 0.0
    power = transmit_power((n + 1) * dhat, tau, cand.channel_constant(radio), radio.bandwidth)
    if power > radio.p_max * (1.0 + 1e-9):
        return 0.0
    return lifetime(cand, radio, tau, power)


def optimal_clients(node: NodeState, radio: RadioConfig, config: GroupingConfig,
                    mean_payload: Optional[float] = None, n_max: Optional[int] = None) -> int:
    """Client count in ``0..n_max`` maximizing the node's own lifetime.

    Exhaustive scan; ties go to the smaller count.
    """
    top = config.n_max if n_max is None else n_max
    best_n, best_life = 0, -math.inf
    for n in range(top + 1):
        life = predicted_lifetime(node, radio, config, n, mean_payload)
        if life > best_life:
            best_n, best_life = n, life
    return best_n


def _distance(a: NodeState, b: NodeState) -> float:
    if a.position is None or b.position is None:
        raise ValueError("grouping needs node positions")
    return math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])


def _finalize(nodes: Sequence[NodeState], config: GroupingConfig, accepted: Dict[int, List[int]]) -> GroupingOutcome:
    roles: Dict[int, Tuple[str, Optional[int]]] = {}
    clients: Dict[int, int] = {}
    reduced: List[NodeState] = []
    members = {rep: list(ms) for rep, ms in accepted.items() if ms}
    for rep, ms in members.items():
        for m in ms:
            roles[m] = (MEMBER, rep)
    for node in nodes:
        nid = node.node_id
        if nid in roles:
            continue
        if nid in members:
            roles[nid] = (REPRESENTATIVE, None)
            clients[nid] = len(members[nid])
            reduced.append(_with_clients(node, clients[nid], config))
        else:
            roles[nid] = (SOLO, None)
            reduced.append(replace(node, clients=0))
    return GroupingOutcome(roles, clients, reduced, members)


def form_groups(nodes: Sequence[NodeState], radio: RadioConfig, config: GroupingConfig,
                mean_payload: Optional[float] = None) -> GroupingOutcome:
    """One-shot distributed grouping of a deployment snapshot.

    1. every node computes its optimal client count ``n*``;
    2. nodes with ``n* > 0`` announce themselves as representatives;
    3. every other node asks its nearest representative within
       ``attach_range`` (lower id on equal distance);
    4. a representative with fewer requests than ``n*`` re-solves with that
       many as the ceiling, then accepts its nearest requesters up to the
       new optimum; rejected requesters stay solo.
    """
    if mean_payload is None:
        mean_payload = sum(n.payload for n in nodes) / len(nodes)
    by_id = {n.node_id: n for n in nodes}
    wanted = {n.node_id: optimal_clients(n, radio, config, mean_payload) for n in nodes}
    reps = [n for n in nodes if wanted[n.node_id] > 0]

    requests: Dict[int, List[int]] = {r.node_id: [] for r in reps}
    for node in nodes:
        if wanted[node.node_id] > 0 or not reps:
            continue
        best = min(reps, key=lambda r: (_distance(node, r), r.node_id))
        if _distance(node, best) <= config.attach_range:
            requests[best.node_id].append(node.node_id)

    accepted: Dict[int, List[int]] = {}
    for rep in reps:
        rid = rep.node_id
        asks = sorted(requests[rid], key=lambda m: (_distance(by_id[m], rep), m))
        cap = wanted[rid]
        if len(asks) < cap:
            cap = optimal_clients(rep, radio, config, mean_payload, n_max=len(asks))
        accepted[rid] = asks[:cap]
    return _finalize(nodes, config, accepted)


def fixed_size_groups(nodes: Sequence[NodeState], clients: int, config: GroupingConfig) -> GroupingOutcome:
    """Partition nodes into groups of ``clients + 1``.

    Representatives are picked by remaining energy (highest first, lower id
    on ties); each takes its ``clients`` nearest unassigned nodes. The last
    group may be smaller.
    """
    if clients <= 0:
        return _finalize(nodes, config, {})
    free = sorted(nodes, key=lambda n: (-n.energy, n.node_id))
    taken = set()
    accepted: Dict[int, List[int]] = {}
    for rep in free:
        if rep.node_id in taken:
            continue
        taken.add(rep.node_id)
        rest = [n for n in nodes if n.node_id not in taken]
        rest.sort(key=lambda n: (_distance(n, rep), n.node_id))
        chosen = [n.node_id for n in rest[:clients]]
        taken.update(chosen)
        accepted[rep.node_id] = chosen
    return _finalize(nodes, config, accepted)
