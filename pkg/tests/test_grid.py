import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from exitset_lab import bubbles as bb
from exitset_lab.grid import TorusGrid, load_field, save_field, torus_distance

FD6 = (1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90)


@pytest.fixture(scope="module")
def g64():
    return TorusGrid(3, 64)


def test_rejects_bad_sizes():
    for N in (63, 2, 96):
        with pytest.raises(ValueError):
            TorusGrid(3, N)
    with pytest.raises(ValueError):
        TorusGrid(2, 16)
    with pytest.raises(ValueError):
        TorusGrid(3, 16, -1.0)


def test_integrate_constant_and_zero_mean_mode(g64):
    assert g64.integrate(g64.constant(1.0)) == pytest.approx((2 * np.pi) ** 3, rel=1e-14)
    f = np.broadcast_to(g64.axis_view(np.sin(g64.axis), 0), g64.shape)
    assert abs(g64.integrate(f)) < 1e-12


def test_integrate_bubble_matches_radial_quadrature():
    # lambda = 50 needs h <= 1/100; L = 1.25 with N = 128 resolves it
    g = TorusGrid(3, 128, 1.25)
    lam, eps = 50.0, g.L / 8
    phi = bb.bubble(g, bb.BubbleParams((g.L / 2,) * 3, lam), eps)
    f = lambda r: 4 * np.pi * r * r * bb.bubble_profile(r, lam, 3, eps)
    pieces = [(0, 1 / lam), (1 / lam, eps), (eps, 2 * eps)]
    exact = sum(integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-13, limit=200)[0] for lo, hi in pieces)
    assert g.integrate(phi) == pytest.approx(exact, rel=1e-6)


def test_laplacian_kernel_and_eigenfunction(g64):
    assert np.abs(g64.laplacian(g64.constant(3.0))).max() < 1e-12
    f = np.broadcast_to(g64.axis_view(np.cos(g64.axis), 0), g64.shape)
    assert np.abs(g64.laplacian(f) + f).max() < 1e-12


def test_laplacian_matches_finite_difference_oracle(g64):
    center = np.full(3, np.pi)
    width = 0.3

    def gauss(shift_axis, shift):
        x = [g64.axis_view(g64.axis - center[i] + (shift if i == shift_axis else 0.0), i) for i in range(3)]
        return np.exp(-sum(xi * xi for xi in x) / (2 * width**2))

    # stencil applied to the analytic bump at a sub-grid step so its own truncation error is negligible
    step = g64.h / 8
    fd = sum(w * gauss(ax, j * step) for ax in range(3) for j, w in zip(range(-3, 4), FD6)) / step**2
    spectral = g64.laplacian(np.broadcast_to(gauss(0, 0.0), g64.shape).copy())
    assert np.abs(fd - spectral).max() < 1e-5


def test_gradient_of_mode(g64):
    f = np.broadcast_to(g64.axis_view(np.sin(2 * g64.axis), 1), g64.shape)
    grad = g64.gradient(f)
    expected = np.broadcast_to(g64.axis_view(2 * np.cos(2 * g64.axis), 1), g64.shape)
    assert np.abs(grad[1] - expected).max() < 1e-11
    assert np.abs(grad[0]).max() < 1e-12 and np.abs(grad[2]).max() < 1e-12


def test_dirichlet_equals_gradient_quadrature(g64):
    rng = np.random.default_rng(3)
    F = np.zeros(g64.fft(g64.constant(0.0)).shape, dtype=complex)
    F[:4, :4, :4] = rng.normal(size=(4, 4, 4)) + 1j * rng.normal(size=(4, 4, 4))
    f = g64.ifft(F)
    grad = g64.gradient(f)
    assert g64.dirichlet(f) == pytest.approx(g64.integrate(sum(d * d for d in grad)), rel=1e-10)


def test_norms_of_constant(g64):
    c, vol = 2.5, g64.volume
    nm = g64.norms(g64.constant(c))
    assert nm.l2 == pytest.approx(c * vol**0.5, rel=1e-13)
    assert nm.h1 == pytest.approx(c * vol**0.5, rel=1e-13)
    assert nm.lcrit == pytest.approx(c * vol ** (1 / 6), rel=1e-13)
    assert nm.w_neg1 == pytest.approx(c * vol**0.5, rel=1e-13)


def test_w_neg1_of_unit_mode(g64):
    f = np.broadcast_to(g64.axis_view(np.cos(g64.axis), 0), g64.shape)
    nm = g64.norms(f)
    assert nm.w_neg1 == pytest.approx(nm.l2 / np.sqrt(2), rel=1e-13)
    assert nm.h1 == pytest.approx(nm.l2 * np.sqrt(2), rel=1e-13)


def test_torus_distance_cases():
    L, h = 2 * np.pi, 2 * np.pi / 64
    assert torus_distance((1.0, 2.0, 3.0), (1.0, 2.0, 3.0), L) == 0.0
    assert torus_distance((0, 0, 0), (L - h, 0, 0), L) == pytest.approx(h, rel=1e-12)
    assert torus_distance((0, 0, 0), (L / 2, L / 2, 0), L) == pytest.approx(L / np.sqrt(2), rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=3, max_size=3),
       st.lists(st.floats(-20, 20), min_size=3, max_size=3),
       st.lists(st.integers(-3, 3), min_size=3, max_size=3))
def test_torus_distance_is_periodic_symmetric_and_bounded(a, b, shifts):
    L = 2 * np.pi
    d = torus_distance(a, b, L)
    assert d == pytest.approx(torus_distance(b, a, L), abs=1e-12)
    moved = np.asarray(b) + L * np.asarray(shifts)
    assert d == pytest.approx(torus_distance(a, moved, L), abs=1e-9)
    assert 0.0 <= d <= L * np.sqrt(3) / 2 + 1e-12


def test_field_roundtrip(tmp_path, g64):
    g = TorusGrid(4, 8, 1.5)
    f = np.random.default_rng(0).normal(size=g.shape)
    save_field(tmp_path / "f.field", g, f)
    g2, f2 = load_field(tmp_path / "f.field")
    assert g2 == g and np.array_equal(f, f2)
    assert (tmp_path / "f.field").stat().st_size == 24 + 8 * 8**4


def test_field_rejects_wrong_shape(tmp_path, g64):
    with pytest.raises(ValueError):
        save_field(tmp_path / "x.field", g64, np.zeros((4, 4, 4)))
    with pytest.raises(ValueError):
        g64.check_field(np.full(g64.shape, np.nan))
