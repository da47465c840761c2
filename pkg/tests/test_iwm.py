import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wallmodels import iwm
from wallmodels.errors import InvalidStateError, RangeError

from conftest import H_WM, NU, brute_force_integrals, random_params


def draw(seed):
    return random_params(np.random.default_rng(seed))


def test_sublayer_height_lies_on_log_law():
    d = iwm.DELTA_PLUS
    assert d == pytest.approx(math.log(d) / 0.4 + 5.0, abs=1e-12)
    assert 10.0 < d < 12.0


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_closure_conditions_hold_by_construction(seed):
    p, u, w = draw(seed)
    res = iwm.closure_residuals(p, u, w, H_WM, NU)
    assert np.max(np.abs(res)) < 1e-12
    assert p.u_tau_x**4 + p.u_tau_z**4 == pytest.approx(p.u_tau**4, rel=1e-12)
    assert p.delta_i == pytest.approx(iwm.DELTA_PLUS * NU / p.u_tau)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_profile_continuous_and_matches_les(seed):
    p, u, w = draw(seed)
    d = p.delta_i
    below = iwm.composite_profile(p, H_WM, NU, d)
    above = iwm.composite_profile(p, H_WM, NU, d * (1 + 1e-13))
    np.testing.assert_allclose(below, above, rtol=1e-9, atol=1e-9 * math.hypot(u, w))
    top = iwm.composite_profile(p, H_WM, NU, H_WM)
    np.testing.assert_allclose(top, (u, w), rtol=1e-12, atol=1e-12 * math.hypot(u, w))


@pytest.mark.parametrize("seed", range(5))
def test_integrals_match_brute_force(seed):
    p, _, _ = draw(seed)
    exact = iwm.integral_terms(p, H_WM, NU).as_array()
    approx, mags = brute_force_integrals(p, H_WM, NU)
    assert np.max(np.abs(exact - approx) / mags) < 1e-8


def test_wall_stress_magnitude_is_u_tau_squared():
    p, _, _ = draw(11)
    tx, tz, _, _ = iwm.wall_and_matching_stress(p, H_WM, NU, rho=1.2)
    sx, sz = p.scales()
    assert math.hypot(tx, tz) == pytest.approx(1.2 * p.u_tau**2, rel=1e-12)
    assert math.atan2(tz, tx) == pytest.approx(math.atan2(sz, sx), abs=1e-12)


def test_profile_range_and_state_checks():
    p, _, _ = draw(1)
    with pytest.raises(RangeError):
        iwm.composite_profile(p, H_WM, NU, [-0.01])
    with pytest.raises(RangeError):
        iwm.composite_profile(p, H_WM, NU, [0.2])
    bad = iwm.IwmParams(1.0, 1.0, 0.0, 0.0, 0.0, 10.0, 0.0, 2 * H_WM)
    with pytest.raises(InvalidStateError):
        iwm.integral_terms(bad, H_WM, NU)
    with pytest.raises(InvalidStateError):
        iwm.params_from_scales(1e-3, 0.0, 1.0, 0.0, H_WM, NU)


def test_matching_data_rejects_negative_dt():
    with pytest.raises(ValueError):
        iwm.MatchingData(1.0, 0.0, dt=-1e-3)


def test_no_flow_state_is_zero_and_stays_zero():
    s = iwm.initial_state(0.0, 0.0, H_WM, NU)
    assert s.integrals.as_array().tolist() == [0.0] * 5
    assert (s.tau_w_x, s.tau_w_z, s.tau_h_x, s.tau_h_z) == (0.0, 0.0, 0.0, 0.0)
    s2 = iwm.advance_face(s, iwm.MatchingData(0.0, 0.0, dt=1e-3), H_WM, NU)
    assert s2.params.u_tau == 0.0 and s2.time == pytest.approx(1e-3)


def test_laminar_start_when_sublayer_fills_layer():
    u = 0.05
    s = iwm.initial_state(u, 0.0, H_WM, NU)
    assert s.params.delta_i == H_WM
    assert s.tau_w_x == pytest.approx(NU * u / H_WM, rel=1e-12)
    np.testing.assert_allclose(iwm.composite_profile(s.params, H_WM, NU, H_WM), (u, 0.0), atol=1e-15)


def test_zero_dt_returns_state_unchanged():
    s = iwm.initial_state(16.0, 2.0, H_WM, NU)
    assert iwm.advance_face(s, iwm.MatchingData(20.0, 0.0, dt=0.0), H_WM, NU) == s


def test_steady_state_is_stationary():
    s = iwm.steady_state(16.0, 3.0, H_WM, NU)
    rx, rz = iwm.explicit_rhs(s, iwm.MatchingData(16.0, 3.0, dt=1e-3), H_WM)
    assert abs(rx) < 1e-10 and abs(rz) < 1e-10
    s2 = iwm.advance_face(s, iwm.MatchingData(16.0, 3.0, dt=1e-3), H_WM, NU)
    assert s2.integrals.l_x == pytest.approx(s.integrals.l_x, rel=1e-10)
    assert s2.params.u_tau == pytest.approx(s.params.u_tau, rel=1e-8)


def test_steady_state_balances_pressure_gradient():
    s = iwm.steady_state(16.0, 0.0, H_WM, NU, dpdx=-2.0)
    assert s.tau_h_x - s.tau_w_x == pytest.approx(-2.0 * H_WM, rel=1e-8)


def test_impulse_relaxes_monotonically_to_new_steady_state():
    start = iwm.steady_state(16.0, 0.0, H_WM, NU)
    target = iwm.steady_state(17.6, 0.0, H_WM, NU)
    match = iwm.MatchingData(17.6, 0.0, dt=5e-3)
    s, history = start, []
    for _ in range(3000):
        s = iwm.advance_face(s, match, H_WM, NU)
        history.append(s.params.u_tau)
    history = np.array(history)
    # the first step keeps L_x and so dips; afterwards the response is monotone
    assert history[0] < start.params.u_tau
    assert np.all(np.diff(history[1:]) >= -1e-14)
    assert history[-1] == pytest.approx(target.params.u_tau, rel=1e-8)


def test_time_filter_relaxes_imposed_velocity():
    s = iwm.steady_state(16.0, 0.0, H_WM, NU)
    dt, tf = 5e-3, 0.05
    f = iwm.advance_face(s, iwm.MatchingData(17.6, 0.0, dt=dt), H_WM, NU, filter_time=tf)
    expected = 16.0 + (1.0 - math.exp(-dt / tf)) * 1.6
    assert f.u_match == pytest.approx(expected, rel=1e-12)
    assert f.u_filtered == f.u_match


def test_newton_falls_back_to_equilibrium():
    s = iwm.initial_state(16.0, 3.0, H_WM, NU)
    params, iters, fell_back = iwm.newton_step_system(
        s, (float("nan"), 0.0), iwm.MatchingData(16.0, 3.0, dt=1e-3), H_WM, NU
    )
    assert fell_back and iters == iwm.NEWTON_MAX_ITERS
    assert params == iwm.equilibrium_params(16.0, 3.0, H_WM, NU)


def test_equilibrium_start_agrees_with_plug_start_after_marching():
    match = iwm.MatchingData(16.9, 0.0, dt=5e-3)
    a = iwm.initial_state(16.9, 0.0, H_WM, NU, kind="plug")
    b = iwm.initial_state(16.9, 0.0, H_WM, NU, kind="equilibrium")
    for _ in range(2000):
        a = iwm.advance_face(a, match, H_WM, NU)
        b = iwm.advance_face(b, match, H_WM, NU)
    assert a.params.u_tau == pytest.approx(b.params.u_tau, rel=1e-8)
    with pytest.raises(ValueError):
        iwm.initial_state(16.9, 0.0, H_WM, NU, kind="other")


def test_legacy_components_equal():
    p = iwm.params_legacy(1.0, 0.7, 12.0, 9.0, H_WM, NU)
    tx, tz, _, _ = iwm.wall_and_matching_stress(p, H_WM, NU)
    assert tx == tz
    assert np.max(np.abs(iwm.closure_residuals(p, 12.0, 9.0, H_WM, NU))) < 1e-12
    with pytest.raises(InvalidStateError):
        iwm.rotate_params(p, 0.3)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(min_value=-math.pi, max_value=math.pi))
def test_rotation_is_covariant(seed, angle):
    p, u, w = draw(seed)
    r = iwm.rotate_params(p, angle)
    ur, wr = iwm.rotate_vector(u, w, angle)
    assert np.max(np.abs(iwm.closure_residuals(r, ur, wr, H_WM, NU))) < 1e-10
    tx, tz, _, _ = iwm.wall_and_matching_stress(p, H_WM, NU)
    rx, rz, _, _ = iwm.wall_and_matching_stress(r, H_WM, NU)
    np.testing.assert_allclose((rx, rz), iwm.rotate_vector(tx, tz, angle), rtol=1e-9, atol=1e-9 * math.hypot(tx, tz))
    # L_x and L_z rotate as a vector, L_xx + L_zz is invariant
    li, lr = iwm.integral_terms(p, H_WM, NU), iwm.integral_terms(r, H_WM, NU)
    np.testing.assert_allclose((lr.l_x, lr.l_z), iwm.rotate_vector(li.l_x, li.l_z, angle), rtol=1e-9, atol=1e-9 * abs(li.l_xx) ** 0.5)
    assert lr.l_xx + lr.l_zz == pytest.approx(li.l_xx + li.l_zz, rel=1e-9)


def test_rotate_gradients_round_trip_and_invariants():
    g = iwm.IntegralGradients(*np.arange(1.0, 11.0))
    r = iwm.rotate_gradients(g, 0.7)
    back = iwm.rotate_gradients(r, -0.7)
    np.testing.assert_allclose(list(vars(back).values()), list(vars(g).values()), rtol=1e-12)
    # divergence of (L_x, L_z) is frame independent
    assert r.dlx_dx + r.dlz_dz == pytest.approx(g.dlx_dx + g.dlz_dz, rel=1e-12)
    q = iwm.rotate_gradients(g, math.pi / 2)
    assert q.dlx_dx == pytest.approx(g.dlz_dz) and q.dlz_dz == pytest.approx(g.dlx_dx)


def test_fd_gradient_fallback():
    assert iwm.fd_gradient_fallback((1.0, 2.0, 5.0), 0.5) == 4.0
    with pytest.raises(ValueError):
        iwm.fd_gradient_fallback((1.0, 2.0, 5.0), 0.0)
