"""
Compositional construction of a network-level stochastic simulation function
from per-subsystem storage certificates.

The network certificate is V = sum_i mu_i V_i. It is valid when the
dissipativity form [G M; I]^T Xcmp [G M; I] is negative semidefinite and the
abstract coupling Mhat solves Ghat Mhat = G M H.
"""

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.certificates.storage import (
    ConditionRecord,
    SsfParams,
    StorageCertificate,
    eval_V,
    interface,
)
from core.dynamics.systems import Network, SystemModel
from core.exceptions import (
    DimensionMismatch,
    ModeUnavailable,
    NotEquitable,
    NotVerified,
    RankDeficientWarning,
)
from core.linalg.matlib import (
    DEFAULT_TOL,
    block_diag,
    least_squares,
    max_abs,
    sym_eig_bounds,
)

logger = logging.getLogger(__name__)


class AlphaMode(str, Enum):
    GENERIC = 'generic'
    QUADRATIC = 'quadratic'


@dataclass(frozen=True)
class LmiResult:
    ok: bool
    lambda_max: float
    form: np.ndarray = field(repr=False, compare=False, default=None)


@dataclass(frozen=True)
class CouplingResult:
    Mhat: np.ndarray
    residual: float
    threshold: float
    rank_deficient: bool = False

    @property
    def ok(self) -> bool:
        return self.residual <= self.threshold


@dataclass(frozen=True)
class ComposedSsf:
    params: SsfParams
    mu: Tuple[float, ...]
    mode: AlphaMode


@dataclass
class CompositionReport:
    lmi: LmiResult
    coupling: CouplingResult
    generic: Optional[ComposedSsf] = None
    quadratic: Optional[ComposedSsf] = None
    records: List[ConditionRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.lmi.ok and self.coupling.ok

    def preferred(self) -> ComposedSsf:
        """Quadratic-specialized parameters when available, generic otherwise."""
        return self.quadratic or self.generic


def _check_mu(certs: Sequence[StorageCertificate], mu: Sequence[float]) -> Tuple[float, ...]:
    if not certs:
        raise DimensionMismatch("Composition needs at least one certificate")
    if len(mu) != len(certs):
        raise DimensionMismatch(f"Got {len(mu)} weights for {len(certs)} certificates")
    mu = tuple(float(v) for v in mu)
    if any(v <= 0 for v in mu):
        raise ValueError(f"Composition weights must be positive, got {mu}")
    return mu


def build_xcmp(certs: Sequence[StorageCertificate], mu: Sequence[float]) -> np.ndarray:
    """
    Network dissipativity matrix

        [[blkdiag(mu_i X11_i), blkdiag(mu_i X12_i)],
         [blkdiag(mu_i X21_i), blkdiag(mu_i X22_i)]]

    Raises:
        DimensionMismatch: weights and certificates disagree, or a block of
            X is not conformal
    """
    mu = _check_mu(certs, mu)
    for cert in certs:
        s, q2 = cert.Xbar11.shape[0], cert.Xbar22.shape[0]
        if cert.Xbar12.shape != (s, q2) or cert.Xbar21.shape != (q2, s):
            raise DimensionMismatch(f"Xbar blocks of certificate '{cert.name}' are not conformal")
    top = np.hstack([
        block_diag(*[w * c.Xbar11 for w, c in zip(mu, certs)]),
        block_diag(*[w * c.Xbar12 for w, c in zip(mu, certs)]),
    ])
    bottom = np.hstack([
        block_diag(*[w * c.Xbar21 for w, c in zip(mu, certs)]),
        block_diag(*[w * c.Xbar22 for w, c in zip(mu, certs)]),
    ])
    return np.vstack([top, bottom])


def dissipativity_form(M: np.ndarray, certs: Sequence[StorageCertificate], mu: Sequence[float]) -> np.ndarray:
    """[G M; I]^T Xcmp [G M; I] with G = blkdiag(G_i)."""
    G = block_diag(*[c.G for c in certs])
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or G.shape[1] != M.shape[0]:
        raise DimensionMismatch(f"Coupling M must have {G.shape[1]} rows, got shape {M.shape}")
    q_til = sum(c.Xbar22.shape[0] for c in certs)
    if M.shape[1] != q_til:
        raise DimensionMismatch(f"Coupling M must have {q_til} columns, got {M.shape[1]}")
    lift = np.vstack([G @ M, np.eye(q_til)])
    form = lift.T @ build_xcmp(certs, mu) @ lift
    return 0.5 * (form + form.T)


def check_lmi(M: np.ndarray, certs: Sequence[StorageCertificate], mu: Sequence[float],
              tol: float = DEFAULT_TOL, method: str = 'lapack') -> LmiResult:
    """
    Negative-semidefiniteness test of the network dissipativity form.

    Returns:
        LmiResult with ``ok`` iff lambda_max <= tol
    """
    form = dissipativity_form(M, certs, mu)
    lam = sym_eig_bounds(form, tol, method).lambda_max
    logger.debug("Dissipativity form %dx%d: lambda_max=%.3e", form.shape[0], form.shape[1], lam)
    return LmiResult(ok=lam <= tol, lambda_max=lam, form=form)


def solve_abstract_coupling(M: np.ndarray, certs: Sequence[StorageCertificate],
                            tol: float = DEFAULT_TOL, strict: bool = False) -> CouplingResult:
    """
    Least-squares solution of Ghat Mhat = G M H.

    Args:
        M: concrete coupling
        certs: certificates supplying G_i, Ghat_i, H_i
        tol: relative residual tolerance
        strict: raise instead of returning an inexact solution

    Returns:
        CouplingResult

    Raises:
        DimensionMismatch
        NotEquitable: strict and the residual exceeds the threshold
    """
    G = block_diag(*[c.G for c in certs])
    Ghat = block_diag(*[c.Ghat for c in certs])
    H = block_diag(*[c.H for c in certs])
    M = np.asarray(M, dtype=float)
    if M.shape != (G.shape[1], H.shape[0]):
        raise DimensionMismatch(
            f"Coupling M must be {G.shape[1]}x{H.shape[0]}, got {M.shape[0]}x{M.shape[1]}"
        )
    target = G @ M @ H
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', RankDeficientWarning)
        solution = least_squares(Ghat, target)
    for warning in caught:
        logger.warning("%s", warning.message)

    result = CouplingResult(
        Mhat=solution.X,
        residual=solution.residual,
        threshold=tol * max(1.0, max_abs(target)),
        rank_deficient=solution.rank_deficient,
    )
    if not result.ok:
        message = (
            f"Abstract coupling is not exactly solvable: residual {result.residual:.3e} "
            f"exceeds {result.threshold:.1e}"
        )
        if strict:
            raise NotEquitable(message)
        logger.warning(message)
    return result


def compose(certs: Sequence[StorageCertificate], params: Sequence[SsfParams], mu: Sequence[float],
            mode: AlphaMode = AlphaMode.GENERIC, *, lmi: Optional[LmiResult] = None,
            coupling: Optional[CouplingResult] = None,
            concs: Optional[Sequence[SystemModel]] = None, tol: float = DEFAULT_TOL) -> ComposedSsf:
    """
    Network-level (alpha, kappa, rho_ext, psi) for V = sum_i mu_i V_i.

    kappa, rho and psi are shared by both modes:
        kappa = min_i kappa_i, rho = max_i mu_i rho_i, psi = sum_i mu_i psi_i.
    Generic alpha is 1 / sum_i 1/(alpha_i mu_i). Quadratic alpha is
    lambda_min(blkdiag(mu_i Mtil_i)) / lambda_max(C1^T C1) for the stacked C1
    and needs the concrete subsystems.

    Raises:
        NotVerified: a supplied LMI or coupling result did not pass
        ModeUnavailable: quadratic mode without concrete subsystems
    """
    mu = _check_mu(certs, mu)
    if len(params) != len(certs):
        raise DimensionMismatch(f"Got {len(params)} parameter sets for {len(certs)} certificates")
    if lmi is not None and not lmi.ok:
        raise NotVerified(f"Dissipativity condition fails (lambda_max {lmi.lambda_max:.3e})")
    if coupling is not None and not coupling.ok:
        raise NotVerified(f"Coupling condition fails (residual {coupling.residual:.3e})")
    mode = AlphaMode(mode)

    kappa = min(p.kappa_lin for p in params)
    rho = max(w * p.rho_coeff for w, p in zip(mu, params))
    psi = float(sum(w * p.psi for w, p in zip(mu, params)))

    if mode == AlphaMode.GENERIC:
        alpha = 1.0 / sum(1.0 / (p.alpha_coeff * w) for w, p in zip(mu, params))
    else:
        if concs is None:
            raise ModeUnavailable("Quadratic-specialized composition needs the concrete subsystems")
        if len(concs) != len(certs):
            raise DimensionMismatch(f"Got {len(concs)} subsystems for {len(certs)} certificates")
        Mtil = block_diag(*[w * c.Mtil for w, c in zip(mu, certs)])
        C1 = block_diag(*[s.C1 for s in concs])
        gram = sym_eig_bounds(C1.T @ C1, tol).lambda_max
        if gram <= 0:
            raise ModeUnavailable("Stacked C1 is zero")
        alpha = sym_eig_bounds(Mtil, tol).lambda_min / gram

    composed = ComposedSsf(
        params=SsfParams(alpha_coeff=alpha, kappa_lin=kappa, rho_coeff=rho, psi=psi),
        mu=mu,
        mode=mode,
    )
    logger.info("Composed %s simulation function: alpha=%.6g kappa=%.6g rho=%.6g psi=%.6g",
                mode.value, alpha, kappa, rho, psi)
    return composed


def assess_composition(concs: Sequence[SystemModel], certs: Sequence[StorageCertificate],
                       params: Sequence[SsfParams], mu: Sequence[float], M: np.ndarray,
                       tol: float = DEFAULT_TOL, method: str = 'lapack') -> CompositionReport:
    """
    Run both composition conditions and, when they pass, compose in both modes.
    """
    lmi = check_lmi(M, certs, mu, tol, method)
    coupling = solve_abstract_coupling(M, certs, tol)
    report = CompositionReport(lmi=lmi, coupling=coupling)
    report.records.append(ConditionRecord('dissipativity form is NSD', max(0.0, lmi.lambda_max), tol))
    report.records.append(ConditionRecord('Ghat Mhat = G M H', coupling.residual, coupling.threshold))
    if report.passed:
        report.generic = compose(certs, params, mu, AlphaMode.GENERIC, lmi=lmi, coupling=coupling)
        report.quadratic = compose(certs, params, mu, AlphaMode.QUADRATIC, lmi=lmi, coupling=coupling,
                                   concs=concs, tol=tol)
    return report


@dataclass(frozen=True, eq=False)
class AbstractionPair:
    """
    A concrete network, its abstraction and the certificates relating each
    subsystem pair. The abstract network carries the coupling Mhat.
    """
    concrete: Network
    abstract: Network
    certs: Tuple[StorageCertificate, ...]
    mu: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'certs', tuple(self.certs))
        object.__setattr__(self, 'mu', _check_mu(self.certs, self.mu))
        count = len(self.certs)
        if len(self.concrete.subsystems) != count or len(self.abstract.subsystems) != count:
            raise DimensionMismatch(
                f"Pair has {len(self.concrete.subsystems)} concrete and {len(self.abstract.subsystems)} "
                f"abstract subsystems for {count} certificates"
            )
        for cert, conc, abst in zip(self.certs, self.concrete.subsystems, self.abstract.subsystems):
            if cert.P.shape != (conc.n, abst.n) or cert.Rtil.shape != (conc.m, abst.m):
                raise DimensionMismatch(f"Certificate '{cert.name}' does not match its subsystem pair")

    @property
    def P(self) -> np.ndarray:
        return block_diag(*[c.P for c in self.certs])

    @property
    def Mtil(self) -> np.ndarray:
        return block_diag(*[w * c.Mtil for w, c in zip(self.mu, self.certs)])

    def interface(self, x, xhat, nuhat) -> np.ndarray:
        """Blockwise concrete input for the whole network."""
        conc, abst = self.concrete, self.abstract
        parts = zip(
            self.certs,
            conc.subsystems,
            conc.blocks(x, conc.state_offsets),
            abst.blocks(xhat, abst.state_offsets),
            abst.blocks(nuhat, abst.input_offsets),
        )
        return np.concatenate(
            [interface(cert, model, xi, xhi, nui) for cert, model, xi, xhi, nui in parts], axis=-1
        )

    def eval_V(self, x, xhat) -> np.ndarray:
        """sum_i mu_i V_i(x_i, xhat_i)."""
        conc, abst = self.concrete, self.abstract
        parts = zip(
            self.mu,
            self.certs,
            conc.blocks(x, conc.state_offsets),
            abst.blocks(xhat, abst.state_offsets),
        )
        return sum(w * eval_V(cert, xi, xhi) for w, cert, xi, xhi in parts)

    def lift(self, xhat) -> np.ndarray:
        """P xhat, the concrete state matching an abstract one."""
        return np.asarray(xhat, dtype=float) @ self.P.T
