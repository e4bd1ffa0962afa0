"""Shared systems and certificates for the test modules."""

import numpy as np

from core.certificates.storage import StorageCertificate
from core.config.casestudy import casestudy_config
from core.config.schema import load_config
from core.dynamics.systems import SystemModel

DOUBLE_INTEGRATOR_A = [[1.0, 1.0], [0.0, 1.0]]


def double_integrator(noise=0.1):
    """
    Double integrator abstracted by itself under deadbeat feedback
    K = [-1, -2]; the abstraction is noiseless.
    """
    conc = SystemModel.linear(
        A=DOUBLE_INTEGRATOR_A, B=[[0.0], [1.0]], C1=[[1.0, 0.0]], C2=np.zeros((1, 2)),
        D=np.zeros((2, 1)), R=noise * np.eye(2), name='di',
    )
    abst = SystemModel.linear(
        A=DOUBLE_INTEGRATOR_A, B=[[0.0], [1.0]], C1=[[1.0, 0.0]], C2=np.zeros((1, 2)),
        D=np.zeros((2, 1)), R=np.zeros((2, 1)), name='di-abstract',
    )
    cert = StorageCertificate(
        Mtil=[[3.0, 2.0], [2.0, 3.0]], K=[[-1.0, -2.0]], Q=np.zeros((1, 2)),
        L1=[[0.0]], L2=[[0.0]], Z=np.zeros((2, 1)), G=[[0.0]], Ghat=[[0.0]], H=[[0.0]],
        P=np.eye(2), Rtil=[[1.0]], Xbar11=[[0.0]], Xbar12=[[0.0]], Xbar21=[[0.0]], Xbar22=[[0.0]],
        kappa_hat=0.9, k_til=1.0, name='di',
    )
    return conc, abst, cert


def casestudy(block_size=3, zero_noise=False, trials=200, seed=11):
    return load_config(casestudy_config(block_size, zero_noise, trials=trials, seed=seed))
