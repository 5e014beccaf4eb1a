"""Acceptance suite: one printed PASS/FAIL line per criterion."""

import json
import math
import tempfile
from pathlib import Path

import numpy as np

from clihelpers import artifact_bytes, command_of, run
from echocases import factor_errors
from fitcases import (DECAY_TRUE, RABI_TRUE, VOIGT_TRUE, decay_data, jacobian_cases, jacobian_error,
                      max_rel_error, rabi_data, voigt_data)
from nlpemem import echosim, holeburn, model, photonics, rffield
from nlpemem.echosim import DDSequence, PulseErrorModel

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TABLE = [(0.66, 0.907, 0.908, 0.842, 0.833, 0.861),
         (1.07, 0.924, 0.938, 0.877, 0.883, 0.897),
         (4.21, 0.986, 0.982, 0.975, 0.972, 0.977)]


def test_c01_zero_delay_efficiency(criterion):
    e = model.nlpe_efficiency(model.NlpeParams(2.09, 0.85, 6.0e3, 18e3, 8e3), 0.0, 0.0)
    closed = 2.09**2 * math.exp(-2.09) * 0.85**4
    criterion(1, "efficiency at t31=t42=0", abs(e - 0.2820) <= 1e-4 and abs(e - closed) < 1e-15,
              f"{e:.6f} (target 0.2820 +- 1e-4)")


def test_c02_monte_carlo_factors(criterion):
    errs = factor_errors()
    ok = errs["spin_t31"] < 0.02 and errs["excited_t42"] < 0.02 and errs["homogeneous_t42"] < 0.02
    criterion(2, "Monte Carlo vs isolated dephasing factors", ok,
              ", ".join(f"{k} max rel err {v:.4f}" for k, v in errs.items()) + " (tol 0.02, 1e5 ions, 10 points)")


def test_c03_dd_residuals(criterion):
    xx = echosim.spin_rephasing_efficiency(DDSequence.xx(storage=1e-3), PulseErrorModel(0.062 * math.pi), 1000)
    worst = -np.inf
    for d in np.linspace(0, 0.1 * math.pi, 21):
        err = PulseErrorModel(d)
        a = echosim.spin_rephasing_efficiency(DDSequence.xy4(storage=1e-3), err, 1000).residual_population
        b = echosim.spin_rephasing_efficiency(DDSequence.xxxx(storage=1e-3), err, 1000).residual_population
        worst = max(worst, a - b)
    r = xx.residual_population
    ok = abs(r - 0.0375) <= 0.001 and abs(r - 0.038) <= 0.001 and worst <= 1e-12
    criterion(3, "DD residual population", ok,
              f"XX at 0.062 pi {100 * r:.3f}% (3.75 +- 0.1%); max(XY4 - XXXX) over grid {worst:.2e}")


def test_c04_rephasing_intercepts(criterion):
    e = echosim.estimate_rephasing_from_intercepts(0.1979, 0.1985)
    ok = abs(e.efficiency - 0.9970) <= 1e-4 and abs(e.residual_bound - 0.0030) <= 1e-4
    criterion(4, "rephasing from intercepts", ok,
              f"{100 * e.efficiency:.3f}% (99.70 +- 0.01%), residual bound {100 * e.residual_bound:.3f}%")


def test_c05_snr(criterion):
    a = photonics.snr(1.07, 0.178, 0.0038)
    b = photonics.snr(1.07, 0.120, 0.0098)
    criterion(5, "signal-to-noise ratio", abs(a - 50.7) <= 16.7 and abs(b - 13.1) <= 2.4,
              f"{a:.2f} (50.7 +- 16.7), {b:.2f} (13.1 +- 2.4)")


def test_c06_fidelity_pipeline(criterion):
    totals = [photonics.total_fidelity(*r[1:5]) for r in TABLE]
    dev = max(abs(t - r[5]) for t, r in zip(totals, TABLE))
    th = photonics.theoretical_fidelity(1.07, photonics.MemoryChannel(0.12, 0.0098, 1.0))
    criterion(6, "fidelity pipeline", dev <= 1e-3 and abs(th - 0.9338) <= 1e-4,
              f"F_T {', '.join(f'{t:.4f}' for t in totals)} (max dev {dev:.4f}); theory {th:.5f} (0.9338 +- 1e-4)")


def test_c07_classical_bound(criterion):
    bounds = [photonics.classical_bound(r[0], 0.12)[0] for r in TABLE]
    below = all(b < r[5] for b, r in zip(bounds, TABLE))
    mono = all(x < y for x, y in zip(bounds, bounds[1:]))
    limit = photonics.classical_bound(1e-6, 0.12)[0]
    criterion(7, "classical bound", below and mono and abs(limit - 2 / 3) <= 1e-3,
              f"bounds {', '.join(f'{b:.4f}' for b in bounds)} below F_T and increasing; mu->0 {limit:.5f}")


def test_c08_fit_round_trips(criterion):
    clean, noisy = [], []
    for name, true in DECAY_TRUE.items():
        clean.append(max_rel_error(model.fit_decay(decay_data(name), name), true))
        noisy.append(max_rel_error(model.fit_decay(decay_data(name, 0.01, 0), name), true))
    clean.append(max_rel_error(model.fit_rabi_nutation(rabi_data()), RABI_TRUE))
    noisy.append(max_rel_error(model.fit_rabi_nutation(rabi_data(0.01, 0)), RABI_TRUE))
    clean.append(max_rel_error(model.fit_voigt(voigt_data()), VOIGT_TRUE))
    noisy.append(max_rel_error(model.fit_voigt(voigt_data(0.01, 0)), VOIGT_TRUE))
    jac = max(jacobian_error(*c) for c in jacobian_cases())
    ok = max(clean) < 1e-8 and max(noisy) < 0.05 and jac < 1e-6
    criterion(8, "fit round trips", ok,
              f"noiseless max rel err {max(clean):.1e}, 1% noise {max(noisy):.4f}, Jacobian vs FD {jac:.1e}")


def test_c09_interference(criterion):
    ch = photonics.MemoryChannel(0.12, 0.0098)
    q = photonics.TimeBinQubit.named("e+l", 1.07)
    ext = photonics.expected_counts(ch, q, photonics.Analysis.HALF_PI_PAIR, math.pi)[1] - ch.p_n
    devs = []
    for label in ("e", "l", "e+l", "e+il"):
        f, _, _ = photonics.measure_fidelity(ch, label, 1.07, 1_000_000, seed=11)
        port = photonics.port_efficiency("full_pi" if label in ("e", "l") else "half_pi_pair")
        devs.append(abs(f / photonics.theoretical_fidelity(1.07, ch, port) - 1))
    criterion(9, "interference identities", abs(ext) < 1e-12 and max(devs) < 0.01,
              f"centre-bin signal at phi=pi {abs(ext):.1e}; Monte Carlo vs theory max rel dev {max(devs):.4f} "
              f"(superpositions at the centre-bin efficiency)")


def test_c10_rf_field(criterion):
    rng = np.random.default_rng(0)
    s = rffield.Strip(0.0, 150e-6)
    lay = rffield.ElectrodeLayout((s,))
    bs = 0.0
    for x, z in zip(rng.uniform(-300e-6, 300e-6, 50), rng.uniform(1e-6, 100e-6, 50)):
        ref = rffield.biot_savart_strip(s, x, z, 20_000)
        bs = max(bs, float(np.max(np.abs(rffield.field_at(lay, x, z) - ref)) / np.linalg.norm(ref)))
    thin = rffield.ElectrodeLayout.single(0.5e-6)
    amp = abs(np.linalg.norm(rffield.field_at(thin, 30e-6, 70e-6)) * 2 * math.pi * math.hypot(30e-6, 70e-6)
              / rffield.MU0 - 1)
    hom = {}
    for w in (150e-6, 75e-6):
        x, z = rffield.mode_grid(15e-6, 16.3e-6, 0.2e-6)
        fm = rffield.compute_field_map(rffield.ElectrodeLayout.coplanar(signal_width=w), x, z)
        hom[w] = rffield.homogeneity(fm, 15e-6, 16.3e-6)
    trend = hom[75e-6].mean > hom[150e-6].mean and hom[75e-6].rel_std > hom[150e-6].rel_std
    ok = bs < 1e-6 and amp < 0.01 and hom[150e-6].rel_std <= 0.05 and trend
    criterion(10, "RF field", ok,
              f"Biot-Savart {bs:.1e}; Ampere {amp:.1e}; 150 um rel std {100 * hom[150e-6].rel_std:.2f}%; "
              f"75 um mean x{hom[75e-6].mean / hom[150e-6].mean:.2f}, rel std {100 * hom[75e-6].rel_std:.2f}%")


def test_c11_hole_burning(criterion):
    prof = holeburn.prepare_profile()
    fwhm, _, _ = holeburn.feature_fwhm(prof)
    width = holeburn.transparent_width(prof)
    resid = holeburn.window_residual(prof)
    ok = width >= 4e6 and resid < 0.05 and abs(fwhm - 1.8e6) <= 0.2e6
    criterion(11, "hole-burning profile", ok,
              f"window {width / 1e6:.3f} MHz (>= 4), residual {100 * resid:.2f}% (< 5%), "
              f"feature FWHM {fwhm / 1e6:.3f} MHz (1.8 +- 0.2)")


def test_c12_cli_determinism(criterion, capsys):
    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        for cfg in sorted(CONFIGS.glob("*.json")):
            cmd = command_of(cfg)
            outs = []
            for w in (1, 4, 8):
                out = Path(tmp) / f"{cfg.stem}_{w}"
                if run(cmd, cfg, out, "--workers", str(w)) != 0:
                    bad.append(f"{cfg.name} failed")
                outs.append(artifact_bytes(out))
            if not outs[0] == outs[1] == outs[2]:
                bad.append(cfg.name)
    capsys.readouterr()
    n = len(list(CONFIGS.glob("*.json")))
    criterion(12, "CLI determinism", not bad,
              f"{n} shipped configs byte-identical at 1, 4 and 8 workers" if not bad else f"differs: {bad}")
