"""
Paired concrete/abstract closed-loop simulation and empirical estimates.

Trials are simulated in fixed-size chunks with the states of a chunk stacked
along the first axis. Chunks may run on a thread pool; their results are
concatenated in trial order, so aggregates do not depend on the number of
workers.
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from core.composition.network import AbstractionPair
from core.dynamics.systems import network_step, stacked_outputs
from core.exceptions import DimensionMismatch, EmptyBatch, PolicySaturationViolated
from core.montecarlo.policies import AbstractPolicy
from core.montecarlo.streams import RngStream
from core.speclang.automata import Dfa, run_multiword, run_word
from core.speclang.labeling import inflate_labeling, label_trajectory, multi_label_trajectory

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 500
CONFIDENCE = 0.95
SATURATION_SLACK = 1e-12


@dataclass(frozen=True)
class Estimate:
    p: float
    low: float
    high: float
    count: int
    trials: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.high - self.low)


def clopper_pearson(count: int, trials: int, level: float = CONFIDENCE) -> Tuple[float, float]:
    """Exact two-sided binomial confidence interval."""
    if trials < 1:
        raise EmptyBatch("Confidence interval of an empty batch")
    alpha = 1.0 - level
    low = 0.0 if count == 0 else float(stats.beta.ppf(alpha / 2, count, trials - count + 1))
    high = 1.0 if count == trials else float(stats.beta.ppf(1 - alpha / 2, count + 1, trials - count))
    return low, high


def _estimate(events: np.ndarray) -> Estimate:
    trials = int(events.size)
    if trials == 0:
        raise EmptyBatch("Cannot estimate a probability from an empty batch")
    count = int(np.count_nonzero(events))
    low, high = clopper_pearson(count, trials)
    return Estimate(p=count / trials, low=low, high=high, count=count, trials=trials)


@dataclass(frozen=True, eq=False)
class PairedTrajectory:
    x: np.ndarray
    xhat: np.ndarray
    y: np.ndarray
    yhat: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return np.linalg.norm(self.y - self.yhat, axis=-1)

    @property
    def sup_error(self) -> float:
        return float(np.max(self.errors))


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Outputs of ``trials`` paired runs over k = 0..Td, shape (trials, Td+1, q)."""
    Td: int
    y: np.ndarray
    yhat: np.ndarray
    seed: Optional[int] = None

    @property
    def trials(self) -> int:
        return int(self.y.shape[0])

    @property
    def errors(self) -> np.ndarray:
        return np.linalg.norm(self.y - self.yhat, axis=-1)

    @property
    def running_sup(self) -> np.ndarray:
        return np.maximum.accumulate(self.errors, axis=1)

    @property
    def sup_error(self) -> np.ndarray:
        if self.trials == 0:
            return np.zeros(0)
        return np.max(self.errors, axis=1)


def _simulate_chunk(pair: AbstractionPair, policy: AbstractPolicy, x0: np.ndarray, xhat0: np.ndarray,
                    Td: int, streams: Sequence[RngStream], keep_states: bool = False):
    conc, abst = pair.concrete, pair.abstract
    batch = len(streams)
    abstract_noise = not abst.is_noiseless

    zeta = np.empty((batch, Td, conc.r))
    zeta_hat = np.zeros((batch, Td, abst.r))
    for i, stream in enumerate(streams):
        zeta[i] = stream.normal((Td, conc.r))
        if abstract_noise:
            zeta_hat[i] = stream.normal((Td, abst.r))

    x = np.tile(x0, (batch, 1))
    xhat = np.tile(xhat0, (batch, 1))
    session = policy.session(batch)
    ys = [stacked_outputs(conc, x)]
    yhats = [stacked_outputs(abst, xhat)]
    xs, xhats = ([x], [xhat]) if keep_states else (None, None)

    for k in range(Td):
        nuhat = session(xhat, k)
        if np.any(np.abs(nuhat) > policy.saturation + SATURATION_SLACK):
            raise PolicySaturationViolated(
                f"Abstract input {np.max(np.abs(nuhat)):.6g} exceeds saturation {policy.saturation:g} at k={k}"
            )
        nu = pair.interface(x, xhat, nuhat)
        x = network_step(conc, x, nu, zeta[:, k])
        xhat = network_step(abst, xhat, nuhat, zeta_hat[:, k])
        ys.append(stacked_outputs(conc, x))
        yhats.append(stacked_outputs(abst, xhat))
        if keep_states:
            xs.append(x)
            xhats.append(xhat)

    y = np.stack(ys, axis=1)
    yhat = np.stack(yhats, axis=1)
    if keep_states:
        return y, yhat, np.stack(xs, axis=1), np.stack(xhats, axis=1)
    return y, yhat


def _initial_states(pair: AbstractionPair, x0, xhat0) -> Tuple[np.ndarray, np.ndarray]:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    xhat0 = np.asarray(xhat0, dtype=float).reshape(-1)
    if x0.size != pair.concrete.n or xhat0.size != pair.abstract.n:
        raise DimensionMismatch(
            f"Initial states must have dimensions {pair.concrete.n} and {pair.abstract.n}, "
            f"got {x0.size} and {xhat0.size}"
        )
    return x0, xhat0


def simulate_pair(pair: AbstractionPair, policy: AbstractPolicy, x0, xhat0, Td: int,
                  rng: RngStream) -> PairedTrajectory:
    """
    One closed-loop run: the policy drives the abstraction, the interface
    refines its input for the concrete network, and both are stepped with
    independent noise.

    Raises:
        DimensionMismatch
        PolicySaturationViolated
    """
    x0, xhat0 = _initial_states(pair, x0, xhat0)
    y, yhat, xs, xhats = _simulate_chunk(pair, policy, x0, xhat0, int(Td), [rng], keep_states=True)
    return PairedTrajectory(x=xs[0], xhat=xhats[0], y=y[0], yhat=yhat[0])


def run_batch(pair: AbstractionPair, policy: AbstractPolicy, x0, xhat0, Td: int, trials: int,
              seed: int, chunk: int = DEFAULT_CHUNK, workers: int = 1) -> TrajectoryBatch:
    """
    Simulate ``trials`` runs, trial i drawing from RngStream(seed).for_trial(i).

    Args:
        chunk: trials per stacked simulation; results depend on it only
            through floating-point summation order
        workers: thread-pool width
    """
    x0, xhat0 = _initial_states(pair, x0, xhat0)
    if trials < 0:
        raise ValueError(f"Trial count must be non-negative, got {trials}")
    if chunk < 1:
        raise ValueError(f"Chunk size must be positive, got {chunk}")
    base = RngStream(seed)
    q = pair.concrete.q1
    if trials == 0:
        empty = np.zeros((0, int(Td) + 1, q))
        return TrajectoryBatch(Td=int(Td), y=empty, yhat=empty.copy(), seed=seed)

    bounds = [(start, min(start + chunk, trials)) for start in range(0, trials, chunk)]

    def work(span):
        start, stop = span
        result = _simulate_chunk(pair, policy, x0, xhat0, int(Td),
                                 [base.for_trial(i) for i in range(start, stop)])
        logger.info("Simulated trials %d-%d of %d", start, stop - 1, trials)
        return result

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, bounds))
    else:
        results = [work(span) for span in bounds]

    y = np.concatenate([r[0] for r in results], axis=0)
    yhat = np.concatenate([r[1] for r in results], axis=0)
    return TrajectoryBatch(Td=int(Td), y=y, yhat=yhat, seed=seed)


def estimate_sup_error(batch: TrajectoryBatch, epsilon: float) -> Estimate:
    """
    Fraction of trials with sup_k ||y(k) - yhat(k)|| >= epsilon.

    Raises:
        EmptyBatch
    """
    return _estimate(batch.sup_error >= epsilon)


def sup_error_quantile(batch: TrajectoryBatch, q: float) -> float:
    if batch.trials == 0:
        raise EmptyBatch("Cannot take a quantile of an empty batch")
    return float(np.quantile(batch.sup_error, q))


def _outputs(batch: TrajectoryBatch, which: str) -> np.ndarray:
    if which == 'abstract':
        return batch.yhat
    if which == 'concrete':
        return batch.y
    raise ValueError(f"Expected 'abstract' or 'concrete', got '{which}'")


def satisfaction_events(batch: TrajectoryBatch, dfa: Dfa, labeling, Td: int, which: str = 'abstract') -> np.ndarray:
    outputs = _outputs(batch, which)
    return np.array([run_word(dfa, label_trajectory(labeling, ys), horizon=Td) for ys in outputs], dtype=bool)


def estimate_satisfaction(batch: TrajectoryBatch, dfa: Dfa, labeling, Td: int, which: str = 'abstract') -> Estimate:
    """
    Fraction of trials whose labelled word has an accepted prefix of length
    at most Td + 1.

    Raises:
        EmptyBatch, UnknownLetter
    """
    return _estimate(satisfaction_events(batch, dfa, labeling, Td, which))


def estimate_satisfaction_upper(batch: TrajectoryBatch, dfa: Dfa, labeling, epsilon: float, Td: int,
                                which: str = 'abstract') -> Estimate:
    """Satisfaction under the epsilon-inflated labeling, any choice of letters."""
    inflated = inflate_labeling(labeling, epsilon)
    outputs = _outputs(batch, which)
    events = np.array(
        [run_multiword(dfa, multi_label_trajectory(inflated, ys), horizon=Td) for ys in outputs], dtype=bool
    )
    return _estimate(events)


def refinement_violations(batch: TrajectoryBatch, absorbed: Dfa, dfa: Dfa, labeling, deflated, epsilon: float,
                          Td: int) -> int:
    """
    Trials closer than epsilon whose deflated abstract word is accepted by
    the absorbing automaton while the concrete word is rejected.
    """
    close = batch.sup_error < epsilon
    abstract_ok = satisfaction_events(batch, absorbed, deflated, Td, 'abstract')
    concrete_ok = satisfaction_events(batch, dfa, labeling, Td, 'concrete')
    return int(np.count_nonzero(close & abstract_ok & ~concrete_ok))


def batch_summary(batch: TrajectoryBatch, epsilons: Sequence[float]) -> dict:
    summary = {
        'trials': batch.trials,
        'horizon': batch.Td,
        'seed': batch.seed,
        'sup_error': {},
    }
    if batch.trials:
        summary['sup_error_mean'] = float(np.mean(batch.sup_error))
        summary['sup_error_q90'] = sup_error_quantile(batch, 0.9)
        for eps in epsilons:
            est = estimate_sup_error(batch, eps)
            summary['sup_error'][repr(float(eps))] = {
                'p_exceed': est.p, 'ci_low': est.low, 'ci_high': est.high, 'count': est.count,
            }
    return summary


def export_csv(batch: TrajectoryBatch, path) -> Path:
    """One row per (trial, k): y, yhat and the running sup error."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    q = batch.y.shape[-1]
    running = batch.running_sup
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['trial', 'k'] + [f"y_{j + 1}" for j in range(q)]
                        + [f"yhat_{j + 1}" for j in range(q)] + ['sup_error_so_far'])
        for trial in range(batch.trials):
            for k in range(batch.Td + 1):
                writer.writerow(
                    [trial, k]
                    + [repr(float(v)) for v in batch.y[trial, k]]
                    + [repr(float(v)) for v in batch.yhat[trial, k]]
                    + [repr(float(running[trial, k]))]
                )
    logger.info("Wrote %d trajectories to %s", batch.trials, path)
    return path
