import numpy as np
import pytest

from exitset_lab import bubbles as bb
from exitset_lab import exitset as ex
from exitset_lab.grid import TorusGrid
from exitset_lab.radial import RadialModel


@pytest.fixture(scope="module")
def setting():
    g = TorusGrid(3, 128, 1.25)
    spec = ex.default_spec(g, 10.0)
    K, _ = ex.build_kdp(g, spec, check_h2=False)
    return g, spec, K, RadialModel(3, g.L)


@pytest.mark.parametrize("lam,rtol", [(10.0, 1e-6), (20.0, 1e-6), (40.0, 1e-5)])
def test_radial_slice_matches_grid_slice(setting, lam, rtol):
    g, spec, K, model = setting
    gs, rs = ex.GridSlice(g, spec, K, 1, lam), ex.RadialSlice(model, spec, 1, lam)
    assert model.bubble_dirichlet(lam) == pytest.approx(gs.D, rel=rtol)
    assert model.bubble_moment(lam, 1) == pytest.approx(gs.I1, rel=rtol)
    assert model.bubble_moment(lam, 2) == pytest.approx(gs.I2, rel=rtol)
    for alpha, alpha1 in [(0.3, 0.2), (0.5, 0.05)]:
        assert rs.k(alpha, alpha1) == pytest.approx(gs.k(alpha, alpha1), rel=rtol)
        assert rs.r(alpha, alpha1)[0] == pytest.approx(gs.r(alpha, alpha1)[0], rel=rtol)
        n_r, grad_r = rs.norm(alpha, alpha1)
        n_g, grad_g = gs.norm(alpha, alpha1)
        assert n_r == pytest.approx(n_g, rel=rtol)
        assert np.allclose(grad_r, grad_g, rtol=rtol, atol=0)


def test_moment_of_constant_is_volume_term():
    m = RadialModel(3, 2.0)
    assert m.moment(0.7, 0.0, 10.0) == pytest.approx(0.7**6 * 8.0, rel=1e-13)
    assert m.moment(0.7, 0.0, 10.0, e=1, j=1) == pytest.approx(0.7 * m.bubble_moment(10.0, 1), rel=1e-12)


def test_peak_integral_matches_grid(setting):
    g, spec, _, model = setting
    grid_val = g.integrate(bb.peak(g, spec.a1, spec.lam1, spec.cutoff(g.L)))
    assert model.peak_integral(spec.lam1) == pytest.approx(grid_val, rel=1e-7)


def test_critical_moment_tends_to_c1():
    m = RadialModel(3, 2 * np.pi)
    errs = [abs(m.bubble_moment(lam, 6) / (np.pi**2 / 4) - 1) for lam in (50.0, 200.0, 800.0)]
    assert errs[0] > errs[1] > errs[2]


def test_rejects_oversized_cutoff():
    with pytest.raises(ValueError):
        RadialModel(3, 1.0, eps_c=0.3)
