import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlpemem import holeburn as hb
from nlpemem.errors import ParameterError, SchemeError, ShapeError
from nlpemem.holeburn import LevelScheme, PumpStep

SCHEME = LevelScheme()
SMALL = dict(step=20e3, probe_half_range=1e6)


@pytest.fixture(scope="module")
def prepared():
    pops = hb.burn(SCHEME, 2.09, hb.default_preparation())
    return pops, hb.absorption_spectrum(pops, SCHEME, 2.09)


def test_unburned_is_flat_background():
    pops = hb.initial_populations(SCHEME, **SMALL)
    prof = hb.absorption_spectrum(pops, SCHEME, 2.09)
    assert np.all(prof.alpha == 2.09)


def test_absorption_matches_direct_sum():
    steps = [PumpStep(0, 2, (-3e5, 3e5), 5e-3, 2e4), PumpStep(1, 0, (-1e5, 2e5), 2e-3, 3e4)]
    sch = LevelScheme(homogeneous_fwhm=40e3)
    pops = hb.burn(sch, 1.0, steps, **SMALL)
    prof = hb.absorption_spectrum(pops, sch, 1.0)
    h, hw = pops.step, 0.5 * sch.homogeneous_fwhm
    s, off = sch.relative_oscillator_strengths, sch.offsets
    f = prof.grid[::5]
    total = np.zeros_like(f)
    for k in range(3):
        for l in range(3):
            u = f[:, None] - off[k, l] - pops.nu0[None, :]
            lor = (np.arctan((u + h / 2) / hw) - np.arctan((u - h / 2) / hw)) / np.pi
            total += s[k, l] * lor @ (pops.pop[k] - 1 / 3)
    assert np.allclose(prof.alpha[::5], np.maximum(1 + total, 0), atol=1e-12)


def test_populations_conserved(prepared):
    pops, _ = prepared
    assert np.max(np.abs(pops.pop.sum(axis=0) - 1)) < 1e-9
    assert pops.pop.min() >= -1e-12 and pops.pop.max() <= 1 + 1e-12


@given(k=st.integers(0, 2), l=st.integers(0, 2), lo=st.floats(-9e5, 0), width=st.floats(0, 9e5),
       t=st.floats(1e-5, 0.05), rate=st.floats(0, 1e5))
def test_single_step_invariants(k, l, lo, width, t, rate):
    pops = hb.burn(SCHEME, 1.0, [PumpStep(k, l, (lo, lo + width), t, rate)], **SMALL)
    assert np.max(np.abs(pops.pop.sum(axis=0) - 1)) < 1e-9
    assert pops.pop.min() > -1e-12


def test_rate_matrix_columns_sum_to_zero():
    m = hb.rate_matrices(SCHEME, PumpStep(2, 1, (-1e5, 1e5), 1e-3, 1e4), np.linspace(-2e5, 2e5, 11))
    assert np.allclose(m.sum(axis=1), 0.0, atol=1e-9)


@given(t1=st.floats(1e-4, 1e-2), extra=st.floats(1e-4, 1e-2))
def test_longer_burn_deepens_hole(t1, extra):
    def centre(t):
        pops = hb.burn(SCHEME, 1.0, [PumpStep(0, 2, (-2e5, 2e5), t, 1e4)], **SMALL)
        prof = hb.absorption_spectrum(pops, SCHEME, 1.0)
        return prof.alpha[np.argmin(np.abs(prof.grid))]
    assert centre(t1 + extra) <= centre(t1) + 1e-12


def test_saturating_burn_empties_level():
    pops = hb.burn(SCHEME, 1.0, [PumpStep(0, 2, (-3e5, 3e5), 0.1, 1e5)], **SMALL)
    sel = np.abs(pops.nu0) < 2e5
    assert np.max(pops.pop[0, sel]) < 1e-3


def test_alpha_linear_in_background():
    pops = hb.burn(SCHEME, 1.0, [PumpStep(0, 2, (-3e5, 3e5), 1e-3, 1e4)], **SMALL)
    a = hb.absorption_spectrum(pops, SCHEME, 1.0).alpha
    b = hb.absorption_spectrum(pops, SCHEME, 2.5).alpha
    assert np.allclose(b, 2.5 * a, rtol=1e-14)


def test_prepared_profile_shape(prepared):
    _, prof = prepared
    fwhm, left, right = hb.feature_fwhm(prof)
    assert fwhm == pytest.approx(1.8e6, abs=0.2e6)
    assert abs(left + right) < 0.05e6
    assert hb.transparent_width(prof) >= 4e6
    assert hb.window_residual(prof) < 0.05
    peak = prof.alpha[np.argmin(np.abs(prof.grid))]
    assert 0.3 * 2.09 < peak <= 2.09 * 1.2


def test_scheme_errors():
    with pytest.raises(SchemeError):
        hb.rate_matrices(SCHEME, PumpStep(3, 0, (0, 1e5), 1e-3, 1e4), np.zeros(3))
    z = np.array(SCHEME.relative_oscillator_strengths)
    z[0] = [0.5, 0.5, 0.0]
    with pytest.raises(SchemeError):
        hb.rate_matrices(LevelScheme(relative_oscillator_strengths=z), PumpStep(0, 2, (0, 1e5), 1e-3, 1e4),
                         np.zeros(3))
    with pytest.raises(ShapeError):
        LevelScheme(branching=np.eye(2))
    with pytest.raises(ParameterError):
        LevelScheme(branching=np.full((3, 3), 0.5))
    with pytest.raises(ParameterError):
        hb.burn(SCHEME, 1.0, [PumpStep(0, 2, (-5e6, 5e6), 1e-3, 1e4)], **SMALL)
    with pytest.raises(ParameterError):
        PumpStep(0, 2, (1e5, -1e5), 1e-3, 1e4)


def test_scheme_roundtrip():
    assert LevelScheme.from_dict(SCHEME.to_dict()).to_dict() == SCHEME.to_dict()
    assert SCHEME.offsets[0, 2] == 0.0
