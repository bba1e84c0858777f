import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from exitset_lab import bubbles as bb
from exitset_lab import conformal as cf
from exitset_lab import exitset as ex
from exitset_lab import flows as fl
from exitset_lab.errors import DomainError, PositivityError
from exitset_lab.experiments import random_state_in_X, smooth_positive
from exitset_lab.grid import TorusGrid


@pytest.fixture(scope="module")
def g():
    return TorusGrid(3, 16)


@pytest.fixture(scope="module")
def kdp(g):
    K, _ = ex.build_kdp(g, ex.default_spec(g), check_h2=False)
    return K


@pytest.fixture(scope="module")
def strip_state(g, kdp):
    """Constant plus bubble on the first peak with k = -0.03, r < 0."""
    phi = bb.bubble(g, bb.BubbleParams(ex.default_spec(g).a1, 5.0))
    k_of = lambda s: cf.compute_rk(g, cf.normalize(g, 1 + s * phi), kdp)[1]
    s = brentq(lambda s: k_of(s) + 0.03, 1.0, 2.0, xtol=1e-14)
    u = cf.normalize(g, 1 + s * phi)
    r, k = cf.compute_rk(g, u, kdp)
    assert r < 0 and k == pytest.approx(-0.03, abs=1e-10)
    return u


def test_exit_flow_is_stationary_for_constant_curvature(g):
    K = cf.CurvatureField.constant(g, -0.7)
    u = smooth_positive(g, np.random.default_rng(0), 0.3)
    assert fl.k_bar(g, u, K) == pytest.approx(-0.7, rel=1e-14)
    assert np.abs(fl.rhs(g, u, K, "exit")).max() < 1e-14
    assert np.abs(fl.flow_step(g, u, K, "exit", 1e-3) - u).max() < 1e-14
    assert fl.dtk_closed_form(g, u, K, "exit") == pytest.approx(0.0, abs=1e-12)


def test_exit_step_conserves_volume(g, kdp):
    u = smooth_positive(g, np.random.default_rng(1), 0.3)
    before = g.integrate(u**6)
    after = g.integrate(fl.flow_step(g, u, kdp, "exit", 1e-3) ** 6)
    assert abs(after - before) <= 1e-10 * before


def test_exit_positivity_envelope(g, kdp):
    u0 = smooth_positive(g, np.random.default_rng(2), 0.3)
    tr = fl.run_flow(g, u0, kdp, "exit", fl.FlowConfig(dt=1e-3, t_max=0.1))
    assert tr.steps == 100
    t = tr.column("t")
    lo = u0.min() * np.exp(kdp.kmin * t)
    hi = u0.max() * np.exp((kdp.kmax - kdp.kmin) * t)
    assert np.all(tr.column("min_u") >= lo * (1 - 1e-12))
    assert np.all(tr.column("max_u") <= hi * (1 + 1e-12))


@pytest.mark.parametrize("kind", ["yamabe", "exit", "inverse"])
def test_dtk_matches_finite_difference(g, kdp, strip_state, kind):
    u = strip_state if kind != "yamabe" else cf.normalize(g, smooth_positive(g, np.random.default_rng(3), 0.3))
    f = fl.rhs(g, u, kdp, kind)
    k_at = lambda dt: cf.compute_rk(g, u + dt * f, kdp)[1]
    exact = fl.dtk_closed_form(g, u, kdp, kind)
    dt = 1e-6
    assert exact == pytest.approx((k_at(dt) - k_at(-dt)) / (2 * dt), rel=1e-5)
    # one-sided quotients carry dt * k''/2, so their error must shrink tenfold per decade
    errs = [abs((k_at(h) - k_at(0.0)) / h - exact) for h in (1e-5, 1e-6)]
    assert errs[1] <= 0.15 * errs[0] + 1e-9 * abs(exact)


def test_exit_flow_raises_k(g, kdp, strip_state):
    assert fl.dtk_closed_form(g, strip_state, kdp, "exit") > 0


def test_yamabe_converges_for_negative_constant_curvature(g):
    K = cf.CurvatureField.constant(g, -1.0)
    u0 = smooth_positive(g, np.random.default_rng(4), 0.3)
    stop = lambda t, u, d: "converged" if cf.equation_residual(g, u, K) <= 1e-7 else None
    tr = fl.run_flow(g, u0, K, "yamabe", fl.FlowConfig(dt=1e-2, t_max=5.0), stop=stop)
    assert tr.event == "converged"
    assert cf.equation_residual(g, tr.u, K) <= 1e-6
    J = tr.column("J")
    assert np.all(np.diff(J) <= 1e-8 * J[:-1])
    # the solution is the constant
    assert tr.u.max() - tr.u.min() <= 1e-6 * tr.u.max()


def test_yamabe_decreases_J_under_double_peak(g, kdp):
    u0 = random_state_in_X(g, kdp, np.random.default_rng(5), 0.3)
    tr = fl.run_flow(g, u0, kdp, "yamabe", fl.FlowConfig(dt=1e-2, t_max=0.5))
    J = tr.column("J")
    assert np.all(np.diff(J) <= 1e-8 * J[:-1])
    assert np.allclose(tr.column("volume"), 1.0, rtol=1e-12, atol=0)


def test_exit_flow_hits_k_zero_with_negative_r(g, kdp, strip_state):
    tr = fl.run_flow(g, strip_state, kdp, "exit", fl.FlowConfig(dt=1e-3, t_max=5.0, k_level=0.0))
    assert tr.event == "hit_k_zero"
    last = tr.samples[-1]
    assert abs(last["k"]) <= 1e-7 and last["r"] < 0


def test_inverse_undoes_exit(g, kdp, strip_state):
    cfg = fl.FlowConfig(dt=1e-3, t_max=0.02)
    fwd = fl.run_flow(g, strip_state, kdp, "exit", cfg)
    back = fl.run_flow(g, fwd.u, kdp, "inverse", cfg)
    assert g.h1(back.u - strip_state) <= 1e-6


def test_level_crossing_is_located(g, kdp, strip_state):
    tr = fl.run_flow(g, strip_state, kdp, "exit", fl.FlowConfig(dt=1e-2, t_max=5.0, k_level=-0.01))
    assert tr.event == "hit_k_level" and tr.event_level == -0.01
    assert abs(tr.samples[-1]["k"] + 0.01) <= 1e-6


def test_flow_rejects_nonpositive_start(g, kdp):
    u = g.constant(1.0)
    u[0, 0, 0] = -1.0
    with pytest.raises(PositivityError):
        fl.run_flow(g, u, kdp, "exit")
    with pytest.raises(ValueError):
        fl.FlowConfig(dt=0.0)


def test_combined_flow_stops_immediately_on_zero_level(g, kdp):
    phi = bb.bubble(g, bb.BubbleParams(ex.default_spec(g).a1, 5.0))
    k_of = lambda s: cf.compute_rk(g, cf.normalize(g, 1 + s * phi), kdp)[1]
    u = cf.normalize(g, 1 + brentq(k_of, 1.0, 2.0, xtol=1e-15) * phi)
    r, k = cf.compute_rk(g, u, kdp)
    assert abs(k) <= 1e-10 and r < 0
    tr = fl.combined_flow(g, u, kdp)
    assert tr.event == "hit_k_zero" and len(tr.samples) == 1 and tr.phases == []


def test_combined_flow_runs_exit_phase_in_strip(g, kdp, strip_state):
    tr = fl.combined_flow(g, strip_state, kdp, fl.CombinedConfig(dt=1e-3))
    assert tr.phases == ["exit"] and tr.event == "hit_k_zero"
    assert tr.samples[-1]["r"] < 0


def test_combined_flow_rejects_state_outside_regions(g, kdp):
    u = cf.normalize(g, 1 + 3 * bb.bubble(g, bb.BubbleParams(ex.default_spec(g).a1, 5.0)))
    with pytest.raises(DomainError):
        fl.combined_flow(g, u, kdp)


def test_homotopy_endpoints(g, kdp):
    u = random_state_in_X(g, kdp, np.random.default_rng(6), 0.3)
    assert np.abs(fl.null_homotopy(g, u, kdp, 0.0) - cf.normalize(g, u)).max() <= 1e-14
    end = fl.null_homotopy(g, u, kdp, 1.0)
    assert np.allclose(end, g.volume ** (-1 / 6), rtol=1e-14, atol=0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_homotopy_interpolates_k_and_bounds_r(seed, tau):
    g = TorusGrid(3, 8)
    K, _ = ex.build_kdp(g, ex.default_spec(g), check_h2=False)
    u = random_state_in_X(g, K, np.random.default_rng(seed), 0.3)
    r_u, k_u = cf.compute_rk(g, u, K)
    _, k_one = cf.compute_rk(g, g.constant(1.0), K)
    w = fl.homotopy_path(g, u, tau)
    r_w, k_w = cf.compute_rk(g, w, K)
    assert k_w == pytest.approx(tau * k_one + (1 - tau) * k_u, rel=1e-12, abs=1e-14)
    assert r_w <= (1 - tau) ** (1 / 3) * r_u + 1e-12 * abs(r_u)
    assert cf.in_X(*cf.compute_rk(g, fl.null_homotopy(g, u, K, tau), K))


def test_homotopy_rejects_state_outside_X(g, kdp):
    with pytest.raises(DomainError):
        fl.null_homotopy(g, cf.normalize(g, 1 + 3 * bb.bubble(g, bb.BubbleParams(ex.default_spec(g).a1, 5.0))), kdp, 0.5)
