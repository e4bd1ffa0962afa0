"""
Orchestration services for the abstraction toolchain.

This module wires the numerical packages together for the management
commands:
- certificate verification per subsystem
- composition of the network simulation function
- closeness bounds
- paired Monte Carlo simulation
- specification compilation and probability transfer

Library modules never read Django settings; defaults are resolved here.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from django.conf import settings

from core.bounds.probability import BoundQuery, DeltaRow, delta_table, finite_horizon_delta
from core.certificates.storage import CheckReport, SsfParams, derive_params, verify_storage
from core.composition.network import AbstractionPair, AlphaMode, CompositionReport, assess_composition
from core.config.casestudy import casestudy_config
from core.config.schema import ProjectConfig, load_config
from core.exceptions import CheckFailed, ConfigInvalid, CouplingUnsolvable, LmiFailed
from core.montecarlo.engine import (
    Estimate,
    TrajectoryBatch,
    batch_summary,
    estimate_satisfaction,
    estimate_satisfaction_upper,
    estimate_sup_error,
    export_csv,
    refinement_violations,
    run_batch,
    sup_error_quantile,
)
from core.speclang.automata import Dfa, absorb_dfa, compile_dfa, powerset_alphabet
from core.speclang.labeling import Direction, deflate_labeling, transfer_probability
from core.speclang.scltl import atoms, parse_scltl

logger = logging.getLogger(__name__)


def _tol(tol: Optional[float]) -> float:
    return settings.NETABS_TOL if tol is None else float(tol)


def _method(method: Optional[str]) -> str:
    return method or settings.NETABS_EIG_METHOD


@dataclass
class SubsystemCheck:
    name: str
    report: CheckReport
    params: Optional[SsfParams] = None


@dataclass
class VerificationOutcome:
    subsystems: List[SubsystemCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(item.report.passed for item in self.subsystems)

    def failures(self) -> List[str]:
        return [f"{item.name}: {record.name}" for item in self.subsystems for record in item.report.failures()]

    @property
    def params(self) -> List[SsfParams]:
        return [item.params for item in self.subsystems]


@dataclass
class CompositionOutcome:
    report: CompositionReport
    pair: Optional[AbstractionPair] = None

    @property
    def passed(self) -> bool:
        return self.report.passed


@dataclass
class BoundOutcome:
    V0: float
    nuhat_sup: float
    primary: AlphaMode
    tables: Dict[AlphaMode, List[DeltaRow]]
    params: Dict[AlphaMode, SsfParams] = field(default_factory=dict)

    def delta(self, epsilon: float, Td: int, mode: Optional[AlphaMode] = None) -> float:
        """Tabulated delta, computed from the composed params off the grid."""
        mode = mode or self.primary
        for row in self.tables[mode]:
            if row.epsilon == float(epsilon) and row.Td == int(Td):
                return row.bound.delta
        if mode not in self.params:
            raise KeyError(f"No bound for epsilon={epsilon}, Td={Td}")
        query = BoundQuery(V0=self.V0, epsilon=epsilon, Td=Td, nuhat_sup=self.nuhat_sup, params=self.params[mode])
        return finite_horizon_delta(query).delta


@dataclass
class EpsilonCheck:
    epsilon: float
    estimate: Estimate
    delta: Optional[float]

    @property
    def within_bound(self) -> Optional[bool]:
        """Empirical exceedance no larger than delta plus two CI half-widths."""
        if self.delta is None:
            return None
        return self.estimate.p <= self.delta + 2 * self.estimate.half_width


@dataclass
class SimulationOutcome:
    batch: TrajectoryBatch
    checks: List[EpsilonCheck]
    quantile90: Optional[float]
    csv_path: Optional[Path] = None


@dataclass
class TransferOutcome:
    formula: str
    epsilon: float
    Td: int
    delta: float
    locations: int
    abstract: Estimate
    abstract_upper: Estimate
    lower: float
    upper: float
    violations: int


class CertificationService:
    """Per-subsystem certificate checks."""

    @staticmethod
    def verify(config: ProjectConfig, tol: Optional[float] = None,
               method: Optional[str] = None) -> VerificationOutcome:
        """
        Verify every subsystem certificate and derive its parameters.

        Returns:
            VerificationOutcome, params filled for passing subsystems only
        """
        tol, method = _tol(tol), _method(method)
        outcome = VerificationOutcome()
        for sub in config.subsystems:
            logger.info("Verifying subsystem %s", sub.name)
            report = verify_storage(sub.concrete, sub.abstract, sub.certificate, tol, method)
            params = derive_params(sub.concrete, sub.abstract, sub.certificate, report, tol) if report.passed else None
            outcome.subsystems.append(SubsystemCheck(name=sub.name, report=report, params=params))
        return outcome

    @staticmethod
    def require(outcome: VerificationOutcome):
        """
        Raises:
            CheckFailed: naming every failing condition
        """
        if not outcome.passed:
            raise CheckFailed(f"Certificate checks failed: {'; '.join(outcome.failures())}")


class CompositionService:

    @staticmethod
    def compose(config: ProjectConfig, verification: VerificationOutcome, tol: Optional[float] = None,
                method: Optional[str] = None) -> CompositionOutcome:
        """
        Check both network conditions, compose in both alpha modes and build
        the concrete/abstract pair.

        Raises:
            CheckFailed: a certificate did not verify
            LmiFailed: the dissipativity form is not negative semidefinite
            CouplingUnsolvable: no exact abstract coupling exists
        """
        CertificationService.require(verification)
        tol, method = _tol(tol), _method(method)
        report = assess_composition(config.concs, config.certs, verification.params, config.mu, config.coupling,
                                    tol, method)
        if not report.lmi.ok:
            raise LmiFailed(
                f"Dissipativity form is not negative semidefinite: lambda_max {report.lmi.lambda_max:.6g}"
            )
        if not report.coupling.ok:
            raise CouplingUnsolvable(
                f"Ghat Mhat = G M H has no exact solution: residual {report.coupling.residual:.6g} "
                f"exceeds {report.coupling.threshold:.3g}"
            )
        pair = AbstractionPair(
            concrete=config.concrete_network(),
            abstract=config.abstract_network(report.coupling.Mhat),
            certs=config.certs,
            mu=config.mu,
        )
        return CompositionOutcome(report=report, pair=pair)


class BoundService:

    @staticmethod
    def initial_value(config: ProjectConfig, pair: AbstractionPair) -> float:
        """V(x0, xhat0); zero without initial states."""
        if config.initial is None:
            return 0.0
        return float(pair.eval_V(config.initial.x0, config.initial.xhat0))

    @staticmethod
    def tables(config: ProjectConfig, composition: CompositionOutcome, epsilons: Optional[Sequence[float]] = None,
               horizons: Optional[Sequence[int]] = None, nuhat_sup: Optional[float] = None,
               mode: AlphaMode = AlphaMode.QUADRATIC) -> BoundOutcome:
        """
        Delta tables in both alpha modes; flag values override the config.

        Raises:
            ConfigInvalid: no epsilons or horizons anywhere
            InvalidKappa
        """
        bound = config.bound
        epsilons = list(epsilons or (bound.epsilons if bound else []))
        horizons = list(horizons or (bound.horizons if bound else []))
        if nuhat_sup is None:
            nuhat_sup = bound.nuhat_sup if bound else 0.0
        if not epsilons or not horizons:
            raise ConfigInvalid("Bounds need at least one epsilon and one horizon")

        V0 = BoundService.initial_value(config, composition.pair)
        report = composition.report
        tables, params = {}, {}
        for alpha_mode, composed in ((AlphaMode.QUADRATIC, report.quadratic), (AlphaMode.GENERIC, report.generic)):
            tables[alpha_mode] = delta_table(composed.params, V0, epsilons, horizons, nuhat_sup)
            params[alpha_mode] = composed.params
        return BoundOutcome(V0=V0, nuhat_sup=float(nuhat_sup), primary=AlphaMode(mode), tables=tables, params=params)


class SimulationService:

    @staticmethod
    def run(config: ProjectConfig, pair: AbstractionPair, trials: Optional[int] = None,
            seed: Optional[int] = None, workers: Optional[int] = None) -> TrajectoryBatch:
        """
        Raises:
            ConfigInvalid: missing policy or initial states
        """
        if config.policy is None or config.initial is None:
            raise ConfigInvalid("Simulation needs 'policy' and 'initial' sections")
        mc = config.mc
        trials = trials if trials is not None else (mc.trials if mc else 0)
        seed = seed if seed is not None else (mc.seed if mc else 0)
        workers = workers or settings.NETABS_MC_WORKERS
        Td = config.spec.horizon if config.spec else max(config.bound.horizons) if config.bound else 0
        policy = config.policy.build(pair.abstract)
        logger.info("Simulating %d trials over %d steps (seed %d, %d workers)", trials, Td, seed, workers)
        return run_batch(pair, policy, config.initial.x0, config.initial.xhat0, Td, trials, seed,
                         chunk=settings.NETABS_MC_CHUNK, workers=workers)

    @staticmethod
    def assess(batch: TrajectoryBatch, epsilons: Sequence[float],
               bounds: Optional[BoundOutcome] = None) -> SimulationOutcome:
        """
        Empirical exceedance per epsilon against delta at the batch horizon.

        Raises:
            EmptyBatch
        """
        checks = []
        for eps in epsilons:
            delta = None
            if bounds is not None:
                try:
                    delta = bounds.delta(eps, batch.Td)
                except KeyError:
                    delta = None
            checks.append(EpsilonCheck(epsilon=float(eps), estimate=estimate_sup_error(batch, eps), delta=delta))
        return SimulationOutcome(batch=batch, checks=checks, quantile90=sup_error_quantile(batch, 0.9))

    @staticmethod
    def export(outcome: SimulationOutcome, out_dir: Optional[Path], filename: str = 'trajectories.csv'):
        if out_dir is not None:
            outcome.csv_path = export_csv(outcome.batch, Path(out_dir) / filename)
        return outcome.csv_path

    @staticmethod
    def summary(outcome: SimulationOutcome) -> dict:
        summary = batch_summary(outcome.batch, [c.epsilon for c in outcome.checks])
        summary['checks'] = [
            {'epsilon': c.epsilon, 'p_exceed': c.estimate.p, 'ci_low': c.estimate.low,
             'ci_high': c.estimate.high, 'delta': c.delta, 'within_bound': c.within_bound}
            for c in outcome.checks
        ]
        summary['csv'] = str(outcome.csv_path) if outcome.csv_path else None
        return summary


class SpecificationService:

    @staticmethod
    def compile(formula: str, props: Optional[Sequence[str]] = None, alphabet: Optional[dict] = None,
                absorb: bool = False) -> Dfa:
        """
        Compile a formula over ``alphabet``, or over the powerset of
        ``props`` (the formula's atoms when neither is given).
        """
        ast = parse_scltl(formula)
        if alphabet is None:
            alphabet = powerset_alphabet(props if props else sorted(atoms(ast)))
        dfa = compile_dfa(ast, alphabet)
        logger.debug("Compiled '%s' into %d locations", formula, dfa.size)
        return absorb_dfa(dfa) if absorb else dfa

    @staticmethod
    def transfer(config: ProjectConfig, batch: TrajectoryBatch, bounds: BoundOutcome) -> TransferOutcome:
        """
        Satisfaction of the abstract closed loop, transferred to the concrete
        network with the closeness bound at the specification's epsilon.

        Raises:
            ConfigInvalid: missing 'spec' section
            EmptyBatch
        """
        spec = config.spec
        if spec is None:
            raise ConfigInvalid("Probability transfer needs a 'spec' section")
        dfa = SpecificationService.compile(spec.formula, alphabet=spec.alphabet())
        absorbed = absorb_dfa(dfa)
        labeling = spec.labeling()
        deflated = deflate_labeling(labeling, spec.epsilon)

        delta = bounds.delta(spec.epsilon, spec.horizon)
        abstract = estimate_satisfaction(batch, absorbed, deflated, spec.horizon, 'abstract')
        abstract_upper = estimate_satisfaction_upper(batch, dfa, labeling, spec.epsilon, spec.horizon, 'abstract')
        violations = refinement_violations(batch, absorbed, dfa, labeling, deflated, spec.epsilon, spec.horizon)
        if violations:
            logger.warning("%d close trials satisfy the deflated abstract word but not the concrete one", violations)
        return TransferOutcome(
            formula=spec.formula, epsilon=spec.epsilon, Td=spec.horizon, delta=delta, locations=dfa.size,
            abstract=abstract, abstract_upper=abstract_upper,
            lower=transfer_probability(abstract.p, delta, Direction.LOWER),
            upper=transfer_probability(abstract_upper.p, delta, Direction.UPPER),
            violations=violations,
        )


@dataclass
class RunReport:
    name: str
    verification: VerificationOutcome
    composition: CompositionOutcome
    bounds: BoundOutcome
    simulation: SimulationOutcome
    transfer: TransferOutcome


class CaseStudyService:

    @staticmethod
    def config(block_size: int = 74, zero_noise: bool = False, trials: Optional[int] = None,
               seed: Optional[int] = None) -> ProjectConfig:
        """The bundled config for the default instance, a generated one otherwise."""
        if block_size == 74 and not zero_noise:
            config = load_config(settings.NETABS_CASESTUDY_CONFIG)
        else:
            config = load_config(casestudy_config(block_size, zero_noise))
        if config.mc is not None and (trials is not None or seed is not None):
            config.mc = replace(config.mc, trials=trials if trials is not None else config.mc.trials,
                                seed=seed if seed is not None else config.mc.seed)
        return config

    @staticmethod
    def run(config: ProjectConfig, tol: Optional[float] = None, workers: Optional[int] = None,
            out_dir: Optional[Path] = None) -> RunReport:
        """
        verify -> compose -> bound -> simulate -> transfer.

        Raises:
            CheckFailed, LmiFailed, CouplingUnsolvable, EmptyBatch
        """
        verification = CertificationService.verify(config, tol)
        composition = CompositionService.compose(config, verification, tol)
        bounds = BoundService.tables(config, composition)
        batch = SimulationService.run(config, composition.pair, workers=workers)
        simulation = SimulationService.assess(batch, config.mc.epsilons if config.mc else (), bounds)
        SimulationService.export(simulation, out_dir)
        transfer = SpecificationService.transfer(config, batch, bounds)
        logger.info("Case study %s: concrete satisfaction >= %.6g", config.name, transfer.lower)
        return RunReport(name=config.name, verification=verification, composition=composition, bounds=bounds,
                         simulation=simulation, transfer=transfer)


def as_payload(value):
    """Plain dict view of service outcomes for JSON reports."""
    if isinstance(value, np.ndarray):
        return value
    if isinstance(value, VerificationOutcome):
        return {
            'passed': value.passed,
            'subsystems': [
                {
                    'name': item.name,
                    'passed': item.report.passed,
                    'records': [
                        {'name': r.name, 'residual': r.residual, 'threshold': r.threshold, 'passed': r.passed}
                        for r in item.report.records
                    ],
                    'params': item.params,
                }
                for item in value.subsystems
            ],
        }
    if isinstance(value, CompositionOutcome):
        report = value.report
        return {
            'passed': report.passed,
            'lambda_max': report.lmi.lambda_max,
            'Mhat': report.coupling.Mhat,
            'coupling_residual': report.coupling.residual,
            'coupling_threshold': report.coupling.threshold,
            'rank_deficient': report.coupling.rank_deficient,
            'records': [{'name': r.name, 'residual': r.residual, 'threshold': r.threshold} for r in report.records],
            'quadratic': report.quadratic.params if report.quadratic else None,
            'generic': report.generic.params if report.generic else None,
        }
    if isinstance(value, BoundOutcome):
        return {
            'V0': value.V0,
            'nuhat_sup': value.nuhat_sup,
            'primary': value.primary,
            'tables': {
                mode.value: [
                    {'epsilon': row.epsilon, 'Td': row.Td, 'delta': row.bound.delta,
                     'raw_delta': row.bound.raw_delta, 'branch': row.bound.branch, 'infinite': row.infinite}
                    for row in rows
                ]
                for mode, rows in value.tables.items()
            },
        }
    if isinstance(value, SimulationOutcome):
        return SimulationService.summary(value)
    if isinstance(value, TransferOutcome):
        return {
            'formula': value.formula, 'epsilon': value.epsilon, 'Td': value.Td, 'delta': value.delta,
            'locations': value.locations, 'p_hat': value.abstract, 'p_hat_upper': value.abstract_upper,
            'lower': value.lower, 'upper': value.upper, 'violations': value.violations,
        }
    if isinstance(value, RunReport):
        return {
            'name': value.name,
            'verification': as_payload(value.verification),
            'composition': as_payload(value.composition),
            'bounds': as_payload(value.bounds),
            'simulation': as_payload(value.simulation),
            'transfer': as_payload(value.transfer),
        }
    raise TypeError(f"No payload view for {type(value).__name__}")
