"""
Discrete-time stochastic control subsystems with a slope-restricted scalar
nonlinearity, and their interconnection through a coupling matrix.

    x+ = A x + E phi(F x) + B nu + D w + R zeta
    y1 = C1 x,  y2 = C2 x

All vector arguments may carry leading batch axes; the last axis is the
state/input dimension. Rows of a 2-D ``x`` are independent samples.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from core.exceptions import DimensionMismatch, TooSmall
from core.linalg.matlib import as_matrix, block_diag

logger = logging.getLogger(__name__)

SLOPE_SAMPLES = 10_000


class NonlinearityKind(str, Enum):
    ZERO = 'zero'
    SINE = 'sine'
    TABLE = 'custom-table'


@dataclass(frozen=True)
class Nonlinearity:
    """
    Scalar nonlinearity phi with sector slope bound b and coordinate shift a.

    ``raw`` is the modelled function; calling the object evaluates the
    shifted phi~(r) = phi(r) - a*r, which is the function the slope bound
    applies to. ``slope_bound`` may be ``inf``.
    """
    kind: NonlinearityKind = NonlinearityKind.ZERO
    slope_bound: float = 1.0
    shift: float = 0.0
    table_x: Tuple[float, ...] = ()
    table_y: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'kind', NonlinearityKind(self.kind))
        object.__setattr__(self, 'table_x', tuple(float(v) for v in self.table_x))
        object.__setattr__(self, 'table_y', tuple(float(v) for v in self.table_y))
        if not self.slope_bound > 0:
            raise ValueError(f"Slope bound must be positive, got {self.slope_bound}")
        if self.kind == NonlinearityKind.TABLE:
            if len(self.table_x) < 2 or len(self.table_x) != len(self.table_y):
                raise ValueError("custom-table nonlinearity needs matching table_x/table_y of length >= 2")
            if np.any(np.diff(self.table_x) <= 0):
                raise ValueError("custom-table breakpoints must be strictly increasing")

    def raw(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == NonlinearityKind.SINE:
            return np.sin(v)
        if self.kind == NonlinearityKind.TABLE:
            return np.interp(v, self.table_x, self.table_y)
        return np.zeros_like(v)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return self.raw(v) - self.shift * v

    def check_slope(self, samples: int = SLOPE_SAMPLES, seed: int = 0, spread: float = 20.0) -> bool:
        """Sampled check that 0 <= (phi~(v) - phi~(w)) / (v - w) <= b."""
        rng = np.random.default_rng(seed)
        v = rng.uniform(-spread, spread, samples)
        w = rng.uniform(-spread, spread, samples)
        keep = np.abs(v - w) > 1e-9
        slopes = (self(v[keep]) - self(w[keep])) / (v[keep] - w[keep])
        tol = 1e-9
        return bool(np.all(slopes >= -tol) and np.all(slopes <= self.slope_bound + tol))


def _dim_check(name: str, value: np.ndarray, expected: int):
    if value.shape[-1] != expected:
        raise DimensionMismatch(f"{name} has dimension {value.shape[-1]}, expected {expected}")


@dataclass(frozen=True, eq=False)
class SystemModel:
    """One subsystem (A, B, C1, C2, D, E, F, R, phi)."""
    A: np.ndarray
    B: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    R: np.ndarray
    phi: Nonlinearity = field(default_factory=Nonlinearity)
    name: str = ''

    def __post_init__(self):
        for attr in ('A', 'B', 'C1', 'C2', 'D', 'E', 'F', 'R'):
            object.__setattr__(self, attr, as_matrix(getattr(self, attr), f"{self.name or 'system'}.{attr}"))

        n = self.A.shape[0]
        label = self.name or 'system'
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"{label}: A must be square, got {self.A.shape}")
        for attr in ('B', 'D', 'E', 'R'):
            rows = getattr(self, attr).shape[0]
            if rows != n:
                raise DimensionMismatch(f"{label}: {attr} has {rows} rows, expected {n}")
        for attr in ('C1', 'C2', 'F'):
            cols = getattr(self, attr).shape[1]
            if cols != n:
                raise DimensionMismatch(f"{label}: {attr} has {cols} columns, expected {n}")
        if self.F.shape[0] != 1:
            raise DimensionMismatch(f"{label}: F must have exactly one row (scalar nonlinearity), got {self.F.shape[0]}")
        if self.E.shape[1] != 1:
            raise DimensionMismatch(f"{label}: E must have exactly one column, got {self.E.shape[1]}")

    @classmethod
    def linear(cls, A, B, C1, C2, D, R, name: str = ''):
        """Linear subsystem: zero nonlinearity with E = 0 and F = 0."""
        A = as_matrix(A)
        n = A.shape[0]
        return cls(A=A, B=B, C1=C1, C2=C2, D=D, E=np.zeros((n, 1)), F=np.zeros((1, n)), R=R,
                   phi=Nonlinearity(NonlinearityKind.ZERO), name=name)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[1]

    @property
    def q1(self) -> int:
        return self.C1.shape[0]

    @property
    def q2(self) -> int:
        return self.C2.shape[0]

    @property
    def r(self) -> int:
        return self.R.shape[1]

    @property
    def A_eff(self) -> np.ndarray:
        """A + a E F, the state matrix seen by the shifted nonlinearity."""
        return self.A + self.phi.shift * (self.E @ self.F)

    @property
    def is_noiseless(self) -> bool:
        return not np.any(self.R)


def step(model: SystemModel, x, nu, w, zeta) -> np.ndarray:
    """
    One transition A x + E phi(F x) + B nu + D w + R zeta.

    ``zeta`` is a standard-normal draw of dimension ``model.r``.

    Raises:
        DimensionMismatch
    """
    x, nu, w, zeta = (np.asarray(v, dtype=float) for v in (x, nu, w, zeta))
    _dim_check('x', x, model.n)
    _dim_check('nu', nu, model.m)
    _dim_check('w', w, model.p)
    _dim_check('zeta', zeta, model.r)
    nonlinear = model.phi.raw(x @ model.F.T) @ model.E.T
    return x @ model.A.T + nonlinear + nu @ model.B.T + w @ model.D.T + zeta @ model.R.T


def outputs(model: SystemModel, x) -> Tuple[np.ndarray, np.ndarray]:
    """External and internal outputs (C1 x, C2 x)."""
    x = np.asarray(x, dtype=float)
    _dim_check('x', x, model.n)
    return x @ model.C1.T, x @ model.C2.T


@dataclass(frozen=True, eq=False)
class Network:
    """Subsystems closed through w = M [C2_1 x_1; ...; C2_N x_N]."""
    subsystems: Tuple[SystemModel, ...]
    M: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'subsystems', tuple(self.subsystems))
        object.__setattr__(self, 'M', as_matrix(self.M, 'M'))
        if not self.subsystems:
            raise DimensionMismatch("A network needs at least one subsystem")
        rows = sum(s.p for s in self.subsystems)
        cols = sum(s.q2 for s in self.subsystems)
        if self.M.shape != (rows, cols):
            raise DimensionMismatch(f"Coupling M must be {rows}x{cols}, got {self.M.shape[0]}x{self.M.shape[1]}")

    @staticmethod
    def _offsets(dims: Sequence[int]) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(dims)]).astype(int)

    @property
    def state_offsets(self) -> np.ndarray:
        return self._offsets([s.n for s in self.subsystems])

    @property
    def input_offsets(self) -> np.ndarray:
        return self._offsets([s.m for s in self.subsystems])

    @property
    def internal_offsets(self) -> np.ndarray:
        return self._offsets([s.p for s in self.subsystems])

    @property
    def noise_offsets(self) -> np.ndarray:
        return self._offsets([s.r for s in self.subsystems])

    @property
    def output_offsets(self) -> np.ndarray:
        return self._offsets([s.q1 for s in self.subsystems])

    @property
    def n(self) -> int:
        return int(self.state_offsets[-1])

    @property
    def m(self) -> int:
        return int(self.input_offsets[-1])

    @property
    def r(self) -> int:
        return int(self.noise_offsets[-1])

    @property
    def q1(self) -> int:
        return int(self.output_offsets[-1])

    @property
    def is_noiseless(self) -> bool:
        return all(s.is_noiseless for s in self.subsystems)

    def blocks(self, v, offsets):
        v = np.asarray(v, dtype=float)
        return [v[..., offsets[i]:offsets[i + 1]] for i in range(len(self.subsystems))]

    def internal_inputs(self, x) -> np.ndarray:
        """w = M [h2_1(x_1); ...; h2_N(x_N)]."""
        x = np.asarray(x, dtype=float)
        _dim_check('x', x, self.n)
        h2 = [xi @ s.C2.T for s, xi in zip(self.subsystems, self.blocks(x, self.state_offsets))]
        return np.concatenate(h2, axis=-1) @ self.M.T

    def closed_loop_matrix(self) -> np.ndarray:
        """Monolithic state matrix blkdiag(A_i) + blkdiag(D_i) M blkdiag(C2_i)."""
        A = block_diag(*[s.A for s in self.subsystems])
        D = block_diag(*[s.D for s in self.subsystems])
        C2 = block_diag(*[s.C2 for s in self.subsystems])
        return A + D @ self.M @ C2


def network_step(net: Network, x, nu, zeta) -> np.ndarray:
    """
    Step every subsystem with internal inputs computed from the current state.

    Raises:
        DimensionMismatch
    """
    x, nu, zeta = (np.asarray(v, dtype=float) for v in (x, nu, zeta))
    _dim_check('x', x, net.n)
    _dim_check('nu', nu, net.m)
    _dim_check('zeta', zeta, net.r)
    w = net.internal_inputs(x)
    parts = zip(
        net.subsystems,
        net.blocks(x, net.state_offsets),
        net.blocks(nu, net.input_offsets),
        net.blocks(w, net.internal_offsets),
        net.blocks(zeta, net.noise_offsets),
    )
    return np.concatenate([step(s, xi, nui, wi, zi) for s, xi, nui, wi, zi in parts], axis=-1)


def stacked_outputs(net: Network, x) -> np.ndarray:
    """External outputs [C1_1 x_1; ...; C1_N x_N]."""
    x = np.asarray(x, dtype=float)
    _dim_check('x', x, net.n)
    return np.concatenate(
        [xi @ s.C1.T for s, xi in zip(net.subsystems, net.blocks(x, net.state_offsets))], axis=-1
    )


def graph_laplacian(graph: nx.Graph) -> np.ndarray:
    nodes = sorted(graph.nodes())
    return nx.laplacian_matrix(graph, nodelist=nodes).toarray().astype(float)


def complete_graph_laplacian(n: int) -> np.ndarray:
    """
    L = n I - J for the complete graph on n nodes.

    Raises:
        TooSmall: n < 2
    """
    if n < 2:
        raise TooSmall(f"Complete graph Laplacian needs n >= 2, got {n}")
    return graph_laplacian(nx.complete_graph(n))


def path_graph_laplacian(n: int) -> np.ndarray:
    if n < 2:
        raise TooSmall(f"Path graph Laplacian needs n >= 2, got {n}")
    return graph_laplacian(nx.path_graph(n))


def max_degree(L: np.ndarray) -> float:
    return float(np.max(np.diag(L)))


def consensus_coupling(L: np.ndarray, tau: Optional[float] = None, tau_gain: Optional[float] = None) -> np.ndarray:
    """
    M = -tau L. With ``tau_gain`` the step is tau_gain / max_degree, so a gain
    below one keeps 0 < tau < 1/Delta.
    """
    if tau is None:
        if tau_gain is None:
            raise ValueError("consensus coupling needs tau or tau_gain")
        tau = tau_gain / max_degree(L)
    return -float(tau) * L
