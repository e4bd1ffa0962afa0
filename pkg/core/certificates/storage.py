"""
Quadratic stochastic storage certificates V(x, xh) = (x - P xh)^T Mtil (x - P xh).

A certificate relates a concrete subsystem to its reduced-order abstraction.
``verify_storage`` checks the sufficient matrix conditions, ``derive_params``
turns a verified certificate into the (alpha, kappa, rho_ext, psi) quadruple,
and ``interface`` refines abstract inputs into concrete ones.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from core.dynamics.systems import SystemModel, step
from core.exceptions import (
    DimensionMismatch,
    InvalidKappa,
    MtilNotPD,
    NonSymmetricXbar,
    NotVerified,
    SingularGram,
)
from core.linalg.matlib import (
    DEFAULT_TOL,
    as_matrix,
    equality_residual,
    max_abs,
    sym_eig_bounds,
    weighted_gram_norm_sq,
)

logger = logging.getLogger(__name__)

MATRIX_FIELDS = (
    'Mtil', 'K', 'Q', 'L1', 'L2', 'Z', 'G', 'Ghat', 'H', 'P', 'Rtil',
    'Xbar11', 'Xbar12', 'Xbar21', 'Xbar22',
)


@dataclass(frozen=True, eq=False)
class StorageCertificate:
    Mtil: np.ndarray
    K: np.ndarray
    Q: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    Z: np.ndarray
    G: np.ndarray
    Ghat: np.ndarray
    H: np.ndarray
    P: np.ndarray
    Rtil: np.ndarray
    Xbar11: np.ndarray
    Xbar12: np.ndarray
    Xbar21: np.ndarray
    Xbar22: np.ndarray
    kappa_hat: float
    k_til: float
    name: str = ''

    def __post_init__(self):
        for attr in MATRIX_FIELDS:
            object.__setattr__(self, attr, as_matrix(getattr(self, attr), f"certificate.{attr}"))
        object.__setattr__(self, 'kappa_hat', float(self.kappa_hat))
        object.__setattr__(self, 'k_til', float(self.k_til))

    @property
    def Xbar(self) -> np.ndarray:
        return np.block([[self.Xbar11, self.Xbar12], [self.Xbar21, self.Xbar22]])


@dataclass(frozen=True)
class SsfParams:
    """alpha(s) = alpha_coeff s^2, kappa(s) = kappa_lin s, rho_ext(s) = rho_coeff s^2, psi."""
    alpha_coeff: float
    kappa_lin: float
    rho_coeff: float
    psi: float

    def __post_init__(self):
        if not self.alpha_coeff > 0:
            raise ValueError(f"alpha_coeff must be positive, got {self.alpha_coeff}")
        if not 0 < self.kappa_lin < 1:
            raise InvalidKappa(f"kappa_lin must lie in (0, 1), got {self.kappa_lin}")
        if self.rho_coeff < 0:
            raise ValueError(f"rho_coeff must be non-negative, got {self.rho_coeff}")
        if self.psi < 0:
            raise ValueError(f"psi must be non-negative, got {self.psi}")


@dataclass(frozen=True)
class ConditionRecord:
    name: str
    residual: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.threshold


@dataclass
class CheckReport:
    records: List[ConditionRecord] = field(default_factory=list)
    subject: str = ''

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def failures(self) -> List[ConditionRecord]:
        return [r for r in self.records if not r.passed]

    def add(self, name: str, residual: float, threshold: float):
        self.records.append(ConditionRecord(name, float(residual), float(threshold)))


def _expect(label: str, matrix: np.ndarray, shape: Tuple[int, int]):
    if matrix.shape != shape:
        raise DimensionMismatch(f"{label} must be {shape[0]}x{shape[1]}, got {matrix.shape[0]}x{matrix.shape[1]}")


def check_dimensions(conc: SystemModel, abst: SystemModel, cert: StorageCertificate):
    """
    Raise DimensionMismatch unless every certificate block is conformal.
    """
    if conc.q1 != abst.q1:
        raise DimensionMismatch(
            f"Concrete and abstract external outputs differ: {conc.q1} vs {abst.q1}"
        )
    n, m, p, q2 = conc.n, conc.m, conc.p, conc.q2
    nh, mh, ph, q2h = abst.n, abst.m, abst.p, abst.q2
    s = cert.Z.shape[1]
    expected = {
        'Mtil': (n, n), 'K': (m, n), 'Q': (m, nh), 'Rtil': (m, mh),
        'L1': (m, 1), 'L2': (m, 1), 'Z': (n, s), 'G': (s, p), 'Ghat': (s, ph),
        'H': (q2, q2h), 'P': (n, nh), 'Xbar11': (s, s), 'Xbar12': (s, q2),
        'Xbar21': (q2, s), 'Xbar22': (q2, q2),
    }
    for attr, shape in expected.items():
        _expect(f"certificate.{attr}", getattr(cert, attr), shape)


def dissipativity_matrices(conc: SystemModel, abst: SystemModel, cert: StorageCertificate):
    """
    Both sides of the block matrix inequality LHS <= RHS over the stacked
    vector [x - P xh; G w - Ghat wh; delta F (x - P xh); nuhat].

    Returns:
        (LHS, RHS) symmetric matrices of size n + s + 1 + abst.m
    """
    Mt = cert.Mtil
    closed = conc.A_eff + conc.B @ cert.K
    nonlinear = conc.B @ cert.L1 + conc.E
    mismatch = conc.B @ cert.Rtil - cert.P @ abst.B
    T = np.hstack([closed, cert.Z, nonlinear, mismatch])
    lhs = T.T @ Mt @ T

    n, s, mh = conc.n, cert.Z.shape[1], abst.m
    b = conc.phi.slope_bound
    sector = 0.0 if np.isinf(b) else 2.0 / b
    C2, F = conc.C2, conc.F
    zeros = np.zeros
    rhs = np.block([
        [cert.kappa_hat * Mt + C2.T @ cert.Xbar22 @ C2, C2.T @ cert.Xbar21, -F.T, zeros((n, mh))],
        [cert.Xbar12 @ C2, cert.Xbar11, zeros((s, 1)), zeros((s, mh))],
        [-F, zeros((1, s)), np.array([[sector]]), zeros((1, mh))],
        [zeros((mh, n)), zeros((mh, s)), zeros((mh, 1)), cert.k_til * mismatch.T @ Mt @ mismatch],
    ])
    return lhs, rhs


def verify_storage(conc: SystemModel, abst: SystemModel, cert: StorageCertificate,
                   tol: float = DEFAULT_TOL, method: str = 'lapack') -> CheckReport:
    """
    Check that ``cert`` certifies ``abst`` as an abstraction of ``conc``.

    Every condition becomes a record {name, residual, threshold}; matrix
    equalities use max-entry residuals, the block inequality uses the negative
    part of the smallest eigenvalue of RHS - LHS.

    Args:
        conc: concrete subsystem
        abst: abstract subsystem
        cert: candidate certificate
        tol: absolute eigenvalue tolerance, relative entry-wise tolerance
        method: eigenvalue backend ('lapack' or 'jacobi')

    Returns:
        CheckReport

    Raises:
        DimensionMismatch: blocks are not conformal
        NonSymmetricXbar: Xbar21 != Xbar12^T or a diagonal block is asymmetric
        MtilNotPD: Mtil is not symmetric positive definite
    """
    check_dimensions(conc, abst, cert)

    xbar_asym = max(
        max_abs(cert.Xbar21 - cert.Xbar12.T),
        max_abs(cert.Xbar11 - cert.Xbar11.T),
        max_abs(cert.Xbar22 - cert.Xbar22.T),
    )
    if xbar_asym > tol * max(1.0, max_abs(cert.Xbar)):
        raise NonSymmetricXbar(f"Xbar is not symmetric (asymmetry {xbar_asym:.3e})")

    if max_abs(cert.Mtil - cert.Mtil.T) > tol * max(1.0, max_abs(cert.Mtil)):
        raise MtilNotPD("Mtil is not symmetric")
    if sym_eig_bounds(cert.Mtil, tol, method).lambda_min <= 0:
        raise MtilNotPD("Mtil is not positive definite")

    report = CheckReport(subject=cert.name or conc.name)

    report.add('scalars: 0 < kappa_hat < 1, k_til > 0',
               0.0 if (0 < cert.kappa_hat < 1 and cert.k_til > 0) else 1.0, 0.0)
    report.add('(i) D = Z G', *equality_residual(conc.D, cert.Z @ cert.G, tol))

    lhs, rhs = dissipativity_matrices(conc, abst, cert)
    lam_min = sym_eig_bounds(rhs - lhs, tol, method).lambda_min
    report.add('(ii) RHS - LHS is PSD', max(0.0, -lam_min), tol)

    P = cert.P
    report.add('(iii) A P = P Ahat - B Q',
               *equality_residual(conc.A_eff @ P, P @ abst.A_eff - conc.B @ cert.Q, tol))
    report.add('(iv) C1 P = C1hat', *equality_residual(conc.C1 @ P, abst.C1, tol))
    report.add('(v) X12 C2 P = X12 H C2hat',
               *equality_residual(cert.Xbar12 @ conc.C2 @ P, cert.Xbar12 @ cert.H @ abst.C2, tol))
    report.add('(vi) X22 C2 P = X22 H C2hat',
               *equality_residual(cert.Xbar22 @ conc.C2 @ P, cert.Xbar22 @ cert.H @ abst.C2, tol))
    report.add('(vii) F P = Fhat', *equality_residual(conc.F @ P, abst.F, tol))
    report.add('(viii) E = P Ehat - B (L1 - L2)',
               *equality_residual(conc.E, P @ abst.E - conc.B @ (cert.L1 - cert.L2), tol))
    report.add('(ix) P Dhat = Z Ghat', *equality_residual(P @ abst.D, cert.Z @ cert.Ghat, tol))

    for record in report.records:
        logger.debug("%s: residual %.3e (threshold %.1e)", record.name, record.residual, record.threshold)
    if report.passed:
        logger.info("Certificate %s verified", report.subject or '<unnamed>')
    else:
        logger.info("Certificate %s failed: %s", report.subject or '<unnamed>',
                    ', '.join(r.name for r in report.failures()))
    return report


def derive_params(conc: SystemModel, abst: SystemModel, cert: StorageCertificate,
                  report: Optional[CheckReport] = None, tol: float = DEFAULT_TOL) -> SsfParams:
    """
    Comparison-function parameters of a verified certificate.

    Raises:
        NotVerified: the certificate does not pass verify_storage
    """
    if report is None:
        report = verify_storage(conc, abst, cert, tol)
    if not report.passed:
        failed = ', '.join(r.name for r in report.failures())
        raise NotVerified(f"Certificate is not verified: {failed}")

    c1_gram = sym_eig_bounds(conc.C1.T @ conc.C1, tol).lambda_max
    if c1_gram <= 0:
        raise NotVerified("C1 is zero, no output bound can be derived")
    alpha = sym_eig_bounds(cert.Mtil, tol).lambda_min / c1_gram

    mismatch = conc.B @ cert.Rtil - cert.P @ abst.B
    rho = cert.k_til * weighted_gram_norm_sq(mismatch, cert.Mtil, tol)
    return SsfParams(
        alpha_coeff=alpha,
        kappa_lin=1.0 - cert.kappa_hat,
        rho_coeff=rho,
        psi=noise_trace(conc, abst, cert),
    )


def noise_trace(conc: SystemModel, abst: SystemModel, cert: StorageCertificate) -> float:
    """Tr(R^T Mtil R + Rhat^T P^T Mtil P Rhat)."""
    Mt = cert.Mtil
    lifted = cert.P @ abst.R
    return float(np.trace(conc.R.T @ Mt @ conc.R) + np.trace(lifted.T @ Mt @ lifted))


def interface(cert: StorageCertificate, conc: SystemModel, x, xhat, nuhat) -> np.ndarray:
    """
    Concrete input refining an abstract one:
    nu = K (x - P xh) + Q xh + Rtil nuhat + L1 phi(F x) - L2 phi(F P xh).
    """
    x, xhat, nuhat = (np.asarray(v, dtype=float) for v in (x, xhat, nuhat))
    P = cert.P
    if x.shape[-1] != P.shape[0] or xhat.shape[-1] != P.shape[1] or nuhat.shape[-1] != cert.Rtil.shape[1]:
        raise DimensionMismatch(
            f"interface expects x:{P.shape[0]}, xhat:{P.shape[1]}, nuhat:{cert.Rtil.shape[1]}; "
            f"got {x.shape[-1]}, {xhat.shape[-1]}, {nuhat.shape[-1]}"
        )
    phi = conc.phi
    err = x - xhat @ P.T
    return (
        err @ cert.K.T
        + xhat @ cert.Q.T
        + nuhat @ cert.Rtil.T
        + phi(x @ conc.F.T) @ cert.L1.T
        - phi(xhat @ (conc.F @ P).T) @ cert.L2.T
    )


def optimal_Rtil(cert: StorageCertificate, conc: SystemModel, abst: SystemModel) -> np.ndarray:
    """
    Rtil minimizing rho_ext: (B^T Mtil B)^{-1} B^T Mtil P Bhat.

    Raises:
        SingularGram: B^T Mtil B is singular
    """
    gram = conc.B.T @ cert.Mtil @ conc.B
    if gram.size == 0 or np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularGram("B^T Mtil B is singular")
    return np.linalg.solve(gram, conc.B.T @ cert.Mtil @ cert.P @ abst.B)


def eval_V(cert: StorageCertificate, x, xhat) -> np.ndarray:
    """(x - P xh)^T Mtil (x - P xh); batched over leading axes."""
    x, xhat = np.asarray(x, dtype=float), np.asarray(xhat, dtype=float)
    if x.shape[-1] != cert.P.shape[0] or xhat.shape[-1] != cert.P.shape[1]:
        raise DimensionMismatch(
            f"eval_V expects x:{cert.P.shape[0]}, xhat:{cert.P.shape[1]}; got {x.shape[-1]}, {xhat.shape[-1]}"
        )
    err = x - xhat @ cert.P.T
    return np.einsum('...i,ij,...j->...', err, cert.Mtil, err)


def supply_rate(cert: StorageCertificate, conc: SystemModel, abst: SystemModel, x, xhat, w, what) -> np.ndarray:
    """[G w - Ghat wh; C2 x - H C2hat xh]^T Xbar [.]."""
    x, xhat, w, what = (np.asarray(v, dtype=float) for v in (x, xhat, w, what))
    internal = w @ cert.G.T - what @ cert.Ghat.T
    outputs = x @ conc.C2.T - xhat @ (cert.H @ abst.C2).T
    z = np.concatenate([internal, outputs], axis=-1)
    return np.einsum('...i,ij,...j->...', z, cert.Xbar, z)


def expected_next_V(conc: SystemModel, abst: SystemModel, cert: StorageCertificate,
                    x, xhat, w, what, nuhat) -> np.ndarray:
    """
    E[V(x+, xh+)] for zero-mean, identity-covariance noises drawn
    independently for the two systems.
    """
    nu = interface(cert, conc, x, xhat, nuhat)
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    batch = x.shape[:-1]
    mean_next = step(conc, x, nu, w, np.zeros(batch + (conc.r,)))
    mean_hat_next = step(abst, xhat, nuhat, what, np.zeros(batch + (abst.r,)))
    return eval_V(cert, mean_next, mean_hat_next) + noise_trace(conc, abst, cert)


@dataclass(frozen=True)
class DissipationReport:
    mean: float
    standard_error: float
    bound: float
    samples: int

    @property
    def margin(self) -> float:
        """(bound - mean) in standard errors."""
        gap = self.bound - self.mean
        if self.standard_error > 0:
            return gap / self.standard_error
        return float('inf') if gap >= -1e-9 * max(1.0, abs(self.bound)) else float('-inf')

    @property
    def passed(self) -> bool:
        return self.margin >= -3.0


def dissipation_diagnostic(conc: SystemModel, abst: SystemModel, cert: StorageCertificate,
                           params: SsfParams, x, xhat, w, what, nuhat,
                           samples: int, rng: np.random.Generator) -> DissipationReport:
    """
    Monte Carlo one-step dissipation check at a single point.

    Compares the sample mean of V(x+, xh+) with
    V - kappa V + supply + rho ||nuhat||^2 + psi.
    """
    x, xhat, w, what, nuhat = (np.asarray(v, dtype=float) for v in (x, xhat, w, what, nuhat))
    nu = interface(cert, conc, x, xhat, nuhat)
    zeta = rng.standard_normal((samples, conc.r))
    zeta_hat = rng.standard_normal((samples, abst.r))
    nxt = step(conc, np.broadcast_to(x, (samples, conc.n)), np.broadcast_to(nu, (samples, conc.m)),
               np.broadcast_to(w, (samples, conc.p)), zeta)
    nxt_hat = step(abst, np.broadcast_to(xhat, (samples, abst.n)), np.broadcast_to(nuhat, (samples, abst.m)),
                   np.broadcast_to(what, (samples, abst.p)), zeta_hat)
    values = eval_V(cert, nxt, nxt_hat)

    V = float(eval_V(cert, x, xhat))
    bound = (
        V - params.kappa_lin * V
        + float(supply_rate(cert, conc, abst, x, xhat, w, what))
        + params.rho_coeff * float(nuhat @ nuhat)
        + params.psi
    )
    se = float(values.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return DissipationReport(mean=float(values.mean()), standard_error=se, bound=bound, samples=samples)


def rebase(conc: SystemModel, cert: StorageCertificate, U: np.ndarray):
    """
    Express the concrete subsystem and certificate in the state basis x' = U x
    for an orthonormal U.
    """
    U = as_matrix(U, 'U')
    if U.shape != (conc.n, conc.n):
        raise DimensionMismatch(f"Basis change must be {conc.n}x{conc.n}")
    rebased = replace(
        conc,
        A=U @ conc.A @ U.T, B=U @ conc.B, C1=conc.C1 @ U.T, C2=conc.C2 @ U.T,
        D=U @ conc.D, E=U @ conc.E, F=conc.F @ U.T, R=U @ conc.R,
    )
    rebased_cert = replace(cert, Mtil=U @ cert.Mtil @ U.T, P=U @ cert.P, K=cert.K @ U.T, Z=U @ cert.Z)
    return rebased, rebased_cert
