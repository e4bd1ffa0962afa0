"""
Closeness-in-probability bounds between a concrete network and its
abstraction, given the (alpha, kappa, rho_ext, psi) parameters of a
stochastic simulation function.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional

from core.certificates.storage import SsfParams
from core.exceptions import InvalidKappa, NonPositiveAlphaEps, NonzeroPsi

logger = logging.getLogger(__name__)


class Branch(str, Enum):
    HIGH = 'high-threshold'
    LOW = 'low-threshold'
    INFINITE = 'infinite'


@dataclass(frozen=True)
class BoundQuery:
    """
    V0 = V(x0, xhat0), epsilon the output distance, Td the horizon and
    nuhat_sup the sup-norm bound on abstract inputs.
    """
    V0: float
    epsilon: float
    Td: int
    nuhat_sup: float
    params: SsfParams

    def __post_init__(self):
        for name in ('V0', 'epsilon', 'nuhat_sup'):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.V0 < 0:
            raise ValueError(f"V0 must be non-negative, got {self.V0}")
        if self.nuhat_sup < 0:
            raise ValueError(f"nuhat_sup must be non-negative, got {self.nuhat_sup}")
        if int(self.Td) != self.Td or self.Td < 0:
            raise ValueError(f"Td must be a non-negative integer, got {self.Td}")
        object.__setattr__(self, 'Td', int(self.Td))

    @property
    def psi_hat(self) -> float:
        return self.params.rho_coeff * self.nuhat_sup ** 2 + self.params.psi


@dataclass(frozen=True)
class ProbabilityBound:
    delta: float
    raw_delta: float
    branch: Branch
    psi_hat: float


def finite_horizon_delta(q: BoundQuery) -> ProbabilityBound:
    """
    Upper bound on P(sup_{k <= Td} ||y(k) - yhat(k)|| >= epsilon).

    With a = alpha * eps^2 and k = kappa:
        a >= psi_hat / k:  1 - (1 - V0/a) (1 - psi_hat/a)^Td
        otherwise:         (V0/a) (1-k)^Td + psi_hat/(k a) (1 - (1-k)^Td)
    The result is clamped to [0, 1]; the unclamped value is kept as raw_delta.

    Raises:
        InvalidKappa: kappa outside (0, 1)
        NonPositiveAlphaEps: alpha * eps^2 <= 0
    """
    kappa = q.params.kappa_lin
    if not 0 < kappa < 1:
        raise InvalidKappa(f"kappa must lie in (0, 1), got {kappa}")
    alpha_eps = q.params.alpha_coeff * q.epsilon ** 2
    if not alpha_eps > 0:
        raise NonPositiveAlphaEps(f"alpha(epsilon) must be positive, got {alpha_eps}")

    psi_hat = q.psi_hat
    if alpha_eps >= psi_hat / kappa:
        branch = Branch.HIGH
        raw = 1.0 - (1.0 - q.V0 / alpha_eps) * (1.0 - psi_hat / alpha_eps) ** q.Td
    else:
        branch = Branch.LOW
        decay = (1.0 - kappa) ** q.Td
        raw = (q.V0 / alpha_eps) * decay + psi_hat / (kappa * alpha_eps) * (1.0 - decay)

    delta = min(1.0, max(0.0, raw))
    if raw > 1.0:
        logger.warning("Bound is vacuous at epsilon=%g, Td=%d (raw delta %.6g clamped to 1)", q.epsilon, q.Td, raw)
    return ProbabilityBound(delta=delta, raw_delta=raw, branch=branch, psi_hat=psi_hat)


def infinite_horizon_delta(V0: float, epsilon: float, alpha_coeff: float, *,
                           rho_coeff: float = 0.0, psi: float = 0.0) -> float:
    """
    min(1, V0 / (alpha eps^2)), valid over the infinite horizon when
    rho_ext vanishes and psi = 0.

    Raises:
        NonzeroPsi: rho_coeff or psi is non-zero
        NonPositiveAlphaEps: alpha * eps^2 <= 0
    """
    if rho_coeff != 0 or psi != 0:
        raise NonzeroPsi(f"Infinite-horizon bound needs rho_ext = 0 and psi = 0, got rho={rho_coeff}, psi={psi}")
    alpha_eps = alpha_coeff * epsilon ** 2
    if not alpha_eps > 0:
        raise NonPositiveAlphaEps(f"alpha(epsilon) must be positive, got {alpha_eps}")
    if V0 < 0:
        raise ValueError(f"V0 must be non-negative, got {V0}")
    return min(1.0, V0 / alpha_eps)


@dataclass(frozen=True)
class DeltaRow:
    epsilon: float
    Td: int
    bound: ProbabilityBound
    infinite: Optional[float] = None


def delta_table(params: SsfParams, V0: float, epsilons: Iterable[float], horizons: Iterable[int],
                nuhat_sup: float = 0.0) -> List[DeltaRow]:
    """Finite-horizon bounds for every (epsilon, Td) pair, epsilon-major."""
    horizons = list(horizons)
    noiseless = params.rho_coeff == 0 and params.psi == 0
    rows = []
    for eps in epsilons:
        infinite = infinite_horizon_delta(V0, eps, params.alpha_coeff) if noiseless else None
        for Td in horizons:
            bound = finite_horizon_delta(BoundQuery(V0=V0, epsilon=eps, Td=Td, nuhat_sup=nuhat_sup, params=params))
            rows.append(DeltaRow(epsilon=float(eps), Td=int(Td), bound=bound, infinite=infinite))
    return rows
