import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from twinlev.filters import FilterModel, lorentzian_bandwidth, numerical_bandwidth, resonant_bandwidth


@given(ws=st.floats(0.1, 1e7), ratio=st.floats(0.05, 3.0))
def test_resonant_constraints(ws, ratio):
    f = FilterModel.resonant(1e-3 * ws, ws, ratio * ws)
    assert math.isclose(float(f.f(ws)), 1.0, rel_tol=1e-12)
    assert abs(float(f.g(ws))) < 1e-12 * ws
    assert math.isclose(f.bandwidth, ratio * ws, rel_tol=1e-10)


@given(ws=st.floats(0.1, 1e7), ratio=st.floats(1.55, 20.0))
def test_lorentzian_constraints(ws, ratio):
    f = FilterModel.lorentzian(1e-3 * ws, ws, ratio * ws)
    assert math.isclose(float(f.f(ws)), 1.0, rel_tol=1e-12)
    assert float(f.g(ws)) == 0.0
    assert math.isclose(lorentzian_bandwidth(f.shape, ws), ratio * ws, rel_tol=1e-10)


def test_lorentzian_branch_minimum():
    ws = 2.0
    W = math.sqrt(3) * ws
    assert math.isclose(lorentzian_bandwidth(W, ws), 8 * math.sqrt(3) / 9 * ws, rel_tol=1e-14)
    with pytest.raises(ValueError):
        FilterModel.lorentzian(0.1, ws, 1.5 * ws)


@pytest.mark.parametrize("make", [
    lambda: FilterModel.resonant(0.1, 1.0, 1.0),
    lambda: FilterModel.resonant(0.1, 3.0, 0.4),
    lambda: FilterModel.lorentzian(0.1, 1.0, 2.0),
])
def test_numerical_bandwidth(make):
    f = make()
    assert math.isclose(numerical_bandwidth(f), f.bandwidth, rel_tol=1e-2)


def test_resonant_bandwidth_closed_form():
    ws, W = 1.7, 0.9
    assert math.isclose(resonant_bandwidth(W, ws), W * (ws**2 + W**2) / (2 * ws**2), rel_tol=1e-12)
    # scale invariance
    assert math.isclose(resonant_bandwidth(W * 1e5, ws * 1e5), 1e5 * resonant_bandwidth(W, ws), rel_tol=1e-12)


def test_f_decays_at_least_as_inverse_square():
    w = np.array([1e3, 1e4])
    lor = FilterModel.lorentzian(0.1, 1.0, 2.0)
    r = lor.f(w) * w**2
    assert math.isclose(r[0], r[1], rel_tol=1e-3)
    # the band-pass falls off faster, as w^-4
    res = FilterModel.resonant(0.1, 1.0, 1.0)
    r = res.f(w) * w**4
    assert math.isclose(r[0], r[1], rel_tol=1e-5)


@pytest.mark.parametrize("make", [
    lambda: FilterModel.resonant(0.1, 1.0, 0.3),
    lambda: FilterModel.resonant(0.1, 1.0, 4.0),
])
def test_kernel_fourier_transform(make):
    f = make()
    rate = f.envelope_rate()
    T = 60 / rate
    for w in (0.3, 1.0, 2.5):
        re = integrate.quad(lambda t: f.kernel(t) * math.cos(w * t), 0, T, limit=2000)[0]
        im = integrate.quad(lambda t: f.kernel(t) * math.sin(w * t), 0, T, limit=2000)[0]
        assert abs(complex(re, im) - complex(f.response(w))) < 1e-7 * abs(f.response(w))


def test_kernel_causal():
    f = FilterModel.resonant(0.1, 1.0, 1.0)
    assert np.all(f.kernel(np.array([-2.0, -1e-9, 0.0])) == 0)
    with pytest.raises(ValueError):
        FilterModel.lorentzian(0.1, 1.0, 2.0).kernel(1.0)


@given(w=st.floats(-50, 50))
def test_response_real_filter_symmetry(w):
    f = FilterModel.resonant(0.1, 1.0, 0.7)
    assert abs(f.response(-w) - np.conj(f.response(w))) < 1e-12 * (1 + abs(f.response(w)))


def test_guard_messages(fig3a):
    ok = FilterModel.resonant(0.05, fig3a.omega_minus, 1.0)
    assert ok.guard_messages(fig3a) == []
    wide = FilterModel.resonant(0.5, fig3a.omega_minus, 3.5)
    msgs = wide.guard_messages(fig3a)
    assert any("splitting" in m for m in msgs) and any("not much larger" in m for m in msgs)


def test_ideal_filter():
    f = FilterModel.ideal(0.1, 2.0)
    assert np.allclose(f.f(np.array([0.0, 1.0, 9.0])), 1.0)
    assert np.all(f.g(np.array([0.0, 3.0])) == 0)
