import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlpemem import rffield as rf
from nlpemem.errors import ConductorDomainError, ParameterError
from nlpemem.rffield import ElectrodeLayout, Strip


def random_points(n=50, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-300e-6, 300e-6, n), rng.uniform(1e-6, 100e-6, n)


def test_closed_form_vs_biot_savart():
    s = Strip(10e-6, 150e-6, 1.0)
    lay = ElectrodeLayout((s,))
    worst = 0.0
    for x, z in zip(*random_points()):
        ref = rf.biot_savart_strip(s, x, z, n_lines=20_000)
        got = rf.field_at(lay, x, z)
        worst = max(worst, float(np.max(np.abs(got - ref)) / np.linalg.norm(ref)))
    assert worst < 1e-6


def test_thin_strip_is_a_wire():
    lay = ElectrodeLayout.single(0.5e-6, current=2.0)
    for r, ang in [(50e-6, 0.3), (120e-6, 1.2), (80e-6, 1.57)]:
        x, z = r * math.cos(ang), r * math.sin(ang)
        b = np.linalg.norm(rf.field_at(lay, x, z))
        assert b == pytest.approx(rf.MU0 * 2.0 / (2 * math.pi * r), rel=0.01)


def test_ampere_loop_integral():
    # circulation of B around a loop enclosing the strip (both half planes)
    lay = ElectrodeLayout.single(40e-6, current=1.5)
    th = np.linspace(0, 2 * math.pi, 4001)[:-1]
    r = 60e-6
    x, z = r * np.cos(th), r * np.sin(th)
    b = rf.field_at(lay, x, z)
    tangent = np.stack([-np.sin(th), np.cos(th)], axis=-1)
    circ = np.sum(np.sum(b * tangent, axis=-1)) * r * (2 * math.pi / len(th))
    assert abs(circ) == pytest.approx(rf.MU0 * 1.5, rel=1e-6)


def test_mirror_symmetry():
    lay = ElectrodeLayout.coplanar()
    x, z = random_points(seed=2)
    a = rf.field_at(lay, x, z)
    b = rf.field_at(lay, -x, z)
    assert np.allclose(a[..., 0], b[..., 0], rtol=1e-12, atol=1e-18)
    assert np.allclose(a[..., 1], -b[..., 1], rtol=1e-12, atol=1e-18)


@given(k=st.floats(1e-6, 5) | st.floats(-5, -1e-6))
def test_linear_in_current(k):
    lay = ElectrodeLayout.coplanar()
    x, z = random_points(10, seed=3)
    assert np.allclose(rf.field_at(lay.scaled(k), x, z), k * rf.field_at(lay, x, z), rtol=1e-12, atol=0)


def test_superposition_of_strips():
    lay = ElectrodeLayout.coplanar()
    x, z = random_points(20, seed=4)
    parts = sum(rf.field_at(ElectrodeLayout((s,)), x, z) for s in lay.strips)
    assert np.allclose(parts, rf.field_at(lay, x, z), rtol=1e-12, atol=1e-20)


def test_divergence_free():
    lay = ElectrodeLayout.coplanar()
    x = np.linspace(-20e-6, 20e-6, 801)
    z = np.linspace(10e-6, 20e-6, 201)
    fm = rf.compute_field_map(lay, x, z)
    div = fm.divergence()[1:-1, 1:-1]
    scale = np.max(fm.abs_b) / (x[1] - x[0])
    assert np.max(np.abs(div)) / scale < 1e-6


def test_homogeneity_and_width_trend():
    res = {}
    for w in (150e-6, 75e-6):
        lay = ElectrodeLayout.coplanar(signal_width=w)
        x, z = rf.mode_grid(15e-6, 16.3e-6, 0.2e-6)
        fm = rf.compute_field_map(lay, x, z)
        res[w] = rf.homogeneity(fm, 15e-6, 16.3e-6)
    assert res[150e-6].rel_std <= 0.05
    assert res[150e-6].rel_std == pytest.approx(0.0412, abs=0.002)
    assert res[75e-6].mean > res[150e-6].mean
    assert res[75e-6].rel_std > res[150e-6].rel_std


def test_rabi_map_scaling_and_power_ratio():
    lay = ElectrodeLayout.coplanar()
    x, z = rf.mode_grid(15e-6, 16.3e-6, 1e-6)
    fm = rf.compute_field_map(lay, x, z)
    k = rf.calibrate_coupling(fm, 16.7e3, 4.0, (0.0, 15e-6))
    r4 = rf.rabi_map(fm, k, 1.0, 4.0)
    r16 = rf.rabi_map(fm, k, 1.0, 16.0)
    assert np.allclose(r16, 2 * r4)
    assert rf.field_value(fm, (0.0, 15e-6)) * k * 2.0 == pytest.approx(16.7e3)
    assert rf.power_ratio_for_equal_rabi(0.11) == pytest.approx(82.64, rel=1e-3)


def test_compute_map_workers_identical():
    lay = ElectrodeLayout.coplanar()
    x, z = np.linspace(-1e-4, 1e-4, 41), np.linspace(1e-6, 5e-5, 17)
    a = rf.compute_field_map(lay, x, z, workers=1)
    b = rf.compute_field_map(lay, x, z, workers=4)
    assert np.array_equal(a.bx, b.bx) and np.array_equal(a.bz, b.bz)


def test_domain_errors():
    lay = ElectrodeLayout.single(10e-6)
    with pytest.raises(ConductorDomainError):
        rf.field_at(lay, 0.0, 0.0)
    assert np.all(np.isfinite(rf.field_at(lay, 20e-6, 0.0)))
    with pytest.raises(ParameterError):
        ElectrodeLayout((Strip(0, 10e-6), Strip(5e-6, 10e-6)))
    with pytest.raises(ParameterError):
        ElectrodeLayout((Strip(0, 10e-6), Strip(50e-6, 10e-6)), cpw=True)
    with pytest.raises(ParameterError):
        Strip(0, 0)
    fm = rf.compute_field_map(lay, np.linspace(-1e-5, 1e-5, 5), np.linspace(1e-6, 2e-5, 5))
    with pytest.raises(ParameterError):
        rf.homogeneity(fm, 15e-6, 16.3e-6)


def test_layout_roundtrip():
    lay = ElectrodeLayout.coplanar(100e-6, 30e-6, 200e-6, 0.4)
    assert ElectrodeLayout.from_dict(lay.to_dict()) == lay
