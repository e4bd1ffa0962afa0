import logging

import numpy as np

from core.certificates.storage import DissipationReport, SsfParams
from core.composition.network import AbstractionPair
from core.dynamics.systems import network_step

logger = logging.getLogger(__name__)

DRAW_CHUNK = 10_000


def check_supermartingale(pair: AbstractionPair, params: SsfParams, x, xhat, nuhat, samples: int,
                          rng: np.random.Generator) -> DissipationReport:
    """
    Monte Carlo one-step decrease of the composed V at (x, xhat, nuhat)
    against V - kappa V + rho ||nuhat||^2 + psi.

    Draws are taken in chunks so memory does not grow with ``samples``.
    """
    if samples < 1:
        raise ValueError(f"Need at least one sample, got {samples}")
    conc, abst = pair.concrete, pair.abstract
    x = np.asarray(x, dtype=float).reshape(-1)
    xhat = np.asarray(xhat, dtype=float).reshape(-1)
    nuhat = np.asarray(nuhat, dtype=float).reshape(-1)
    nu = pair.interface(x, xhat, nuhat)

    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        size = min(DRAW_CHUNK, samples - done)
        zeta = rng.standard_normal((size, conc.r))
        zeta_hat = rng.standard_normal((size, abst.r)) if not abst.is_noiseless else np.zeros((size, abst.r))
        nxt = network_step(conc, np.broadcast_to(x, (size, conc.n)), np.broadcast_to(nu, (size, conc.m)), zeta)
        nxt_hat = network_step(abst, np.broadcast_to(xhat, (size, abst.n)),
                               np.broadcast_to(nuhat, (size, abst.m)), zeta_hat)
        values = pair.eval_V(nxt, nxt_hat)
        total += float(np.sum(values))
        total_sq += float(np.sum(values ** 2))
        done += size

    mean = total / samples
    variance = max(total_sq / samples - mean ** 2, 0.0) * samples / max(samples - 1, 1)
    V = float(pair.eval_V(x, xhat))
    bound = V - params.kappa_lin * V + params.rho_coeff * float(nuhat @ nuhat) + params.psi
    report = DissipationReport(mean=mean, standard_error=float(np.sqrt(variance / samples)),
                               bound=bound, samples=samples)
    logger.debug("Supermartingale check: mean %.6g, bound %.6g, margin %.2f SE", mean, bound, report.margin)
    return report
