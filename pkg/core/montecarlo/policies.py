"""
Deterministic feedback policies for the abstract network.

A policy is an immutable description; ``session(batch)`` returns a callable
``(xhat, k) -> nuhat`` that carries per-trial state (the active waypoint)
for one batch of trials.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from core.dynamics.systems import Network, network_step
from core.exceptions import DimensionMismatch, EmptyWaypointList
from core.linalg.matlib import as_matrix, block_diag

logger = logging.getLogger(__name__)

DEFAULT_SATURATION = 4.0
DEFAULT_TOLERANCE = 0.5

Session = Callable[[np.ndarray, int], np.ndarray]


class PolicyKind(str, Enum):
    CONSTANT = 'constant'
    WAYPOINT = 'waypoint'
    LOOKUP_TABLE = 'lookup-table'


@dataclass(frozen=True, eq=False)
class AbstractPolicy:
    """
    constant:     nuhat = value
    lookup-table: nuhat = table[min(k, len(table) - 1)]
    waypoint:     deadbeat step toward the active waypoint, clamped to
                  +-saturation, advancing once ||xhat - c||_inf <= tolerance
    """
    kind: PolicyKind
    saturation: float = DEFAULT_SATURATION
    value: Optional[np.ndarray] = None
    table: Optional[np.ndarray] = None
    waypoints: Optional[np.ndarray] = None
    tolerance: float = DEFAULT_TOLERANCE
    network: Optional[Network] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'kind', PolicyKind(self.kind))
        object.__setattr__(self, 'saturation', float(self.saturation))
        if self.saturation < 0:
            raise ValueError(f"Saturation must be non-negative, got {self.saturation}")
        if self.kind == PolicyKind.CONSTANT:
            if self.value is None:
                raise ValueError("constant policy needs a value")
            object.__setattr__(self, 'value', np.asarray(self.value, dtype=float).reshape(-1))
        elif self.kind == PolicyKind.LOOKUP_TABLE:
            if self.table is None or len(self.table) == 0:
                raise ValueError("lookup-table policy needs at least one row")
            object.__setattr__(self, 'table', as_matrix(self.table, 'policy.table'))
        else:
            if self.waypoints is None or len(self.waypoints) == 0:
                raise EmptyWaypointList("waypoint policy needs at least one waypoint")
            if self.network is None:
                raise ValueError("waypoint policy needs the abstract network")
            waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
            if waypoints.shape[1] != self.network.n:
                raise DimensionMismatch(
                    f"Waypoints have dimension {waypoints.shape[1]}, abstract state has {self.network.n}"
                )
            object.__setattr__(self, 'waypoints', waypoints)

    def session(self, batch: int) -> Session:
        if self.kind == PolicyKind.CONSTANT:
            return lambda xhat, k: np.broadcast_to(self.value, (len(xhat), self.value.size)).copy()
        if self.kind == PolicyKind.LOOKUP_TABLE:
            table = self.table
            return lambda xhat, k: np.broadcast_to(table[min(k, len(table) - 1)], (len(xhat), table.shape[1])).copy()
        return _WaypointSession(self, batch)


class _WaypointSession:
    def __init__(self, policy: AbstractPolicy, batch: int):
        self.policy = policy
        self.active = np.zeros(batch, dtype=int)
        net = policy.network
        self.B_pinv = np.linalg.pinv(block_diag(*[s.B for s in net.subsystems]))

    def __call__(self, xhat: np.ndarray, k: int) -> np.ndarray:
        policy = self.policy
        net = policy.network
        last = len(policy.waypoints) - 1
        reached = np.max(np.abs(xhat - policy.waypoints[self.active]), axis=-1) <= policy.tolerance
        self.active = np.where(reached & (self.active < last), self.active + 1, self.active)

        target = policy.waypoints[self.active]
        drift = network_step(net, xhat, np.zeros((len(xhat), net.m)), np.zeros((len(xhat), net.r)))
        nuhat = (target - drift) @ self.B_pinv.T
        return np.clip(nuhat, -policy.saturation, policy.saturation)


def waypoint_policy(waypoints, saturation: float, abst_net: Network,
                    tolerance: float = DEFAULT_TOLERANCE) -> AbstractPolicy:
    """
    Waypoint-following policy: nuhat = clamp(B^+ (c - drift(xhat)), +-sat) with
    drift the noise-free abstract step at zero input, internal inputs
    included.

    Raises:
        EmptyWaypointList
    """
    if waypoints is None or len(waypoints) == 0:
        raise EmptyWaypointList("waypoint policy needs at least one waypoint")
    return AbstractPolicy(kind=PolicyKind.WAYPOINT, saturation=saturation, waypoints=waypoints,
                          tolerance=tolerance, network=abst_net)


def constant_policy(value, saturation: float = DEFAULT_SATURATION) -> AbstractPolicy:
    return AbstractPolicy(kind=PolicyKind.CONSTANT, saturation=saturation, value=value)
