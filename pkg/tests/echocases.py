"""Isolated dephasing-factor runs of the echo simulator against the closed form."""

import math

import numpy as np

from nlpemem import echosim, model
from nlpemem.spectral import SpectralDistribution as SD

P = model.NlpeParams.device_fit()
N_IONS = 100_000


def _run(t31, t42, storage, optical, spin, gamma_hom=0.0, seed=0):
    sch = echosim.build_nlpe_schedule(t31, t42, storage)
    r = echosim.simulate_echo(sch, optical, spin, d=P.d, n_ions=N_IONS, seed=seed,
                              gamma_hom=gamma_hom, trace_points=1)
    return r.efficiency / model.absorption_factor(P.d)


def factor_errors():
    """Max relative MC/analytic mismatch for each isolated factor (10 points each)."""
    out = {}
    t31s = np.linspace(10e-6, 80e-6, 10)
    sim = [_run(t, 30e-6, t - 5e-6, SD.delta(), SD.gaussian(P.gamma13), seed=i) for i, t in enumerate(t31s)]
    ref = model.gaussian_decay(P.gamma13, t31s)
    out["spin_t31"] = float(np.max(np.abs(np.array(sim) / ref - 1)))

    t42s = np.linspace(6e-6, 25e-6, 10)
    sim = [_run(10e-6, t, 5e-6, SD.gaussian(P.gamma35), SD.delta(), seed=i) for i, t in enumerate(t42s)]
    ref = model.gaussian_decay(P.gamma35, t42s)
    out["excited_t42"] = float(np.max(np.abs(np.array(sim) / ref - 1)))

    sim = [_run(10e-6, t, 5e-6, SD.delta(), SD.delta(), gamma_hom=P.gamma) for t in t42s]
    ref = np.exp(-2 * P.gamma * t42s)
    out["homogeneous_t42"] = float(np.max(np.abs(np.array(sim) / ref - 1)))
    return out
