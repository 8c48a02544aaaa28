import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import pulseswitch as ps
from pulseswitch.errors import DivergenceError, NonFiniteStateError

import oracles


def test_linear_free_decay():
    m = ps.linear_test()
    x = ps.flow_at(m, [-1.0, 0.0], ps.ZERO_PULSE, math.log(2))
    np.testing.assert_allclose(x, [-0.5, 0.0], atol=1e-10)


def test_linear_pulse_endpoint():
    m = ps.linear_test()
    x = ps.flow_at(m, [-1.0, 0.0], ps.Pulse(1.0, math.log(2)), math.log(2))
    assert abs(x[0]) < 1e-10


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 4), st.floats(0, 3), st.floats(0, 6))
def test_linear_matches_closed_form(a, b, mu, tau, t):
    m = ps.linear_test()
    x = ps.flow_at(m, [a, b], ps.Pulse(mu, tau), t)
    np.testing.assert_allclose(x, oracles.linear_flow([a, b], mu, tau, t), rtol=1e-8, atol=1e-10)


def test_equilibria_are_fixed(rep, fhn):
    for m, sp in (rep, fhn):
        x = ps.flow_at(m, sp.x_star, ps.ZERO_PULSE, 10.0, reference=sp.x_star)
        np.testing.assert_allclose(x, sp.x_star, atol=1e-12)
    np.testing.assert_array_equal(ps.flow_at(fhn[0], [0.0, 0.0], None, 100.0), [0.0, 0.0])


def test_fhn_flow_against_reference():
    x = ps.flow_at(ps.fitzhugh_nagumo(), [0.5, 0.1], None, 100.0)
    np.testing.assert_allclose(x, oracles.FHN_FLOW_100, rtol=1e-7)


def test_repressilator_pulse_against_reference(rep, x_low):
    m, sp = rep
    x = ps.flow_at(m, x_low, ps.Pulse(3.53, 20.0), 20.0, reference=sp.x_star)
    np.testing.assert_allclose(x, oracles.PULSE_END_353, rtol=1e-7)


def test_reference_pulse_lands_in_target_basin(rep, x_low):
    m, sp = rep
    end = ps.flow_at(m, x_low, ps.Pulse(3.53, 20.0), 20.0)
    v = ps.s1(m, sp, end)
    assert np.isfinite(v.value)


def test_trajectory_invariants(rep, x_low):
    m, _ = rep
    tr = ps.integrate(m, x_low, ps.Pulse(3.53, 20.0), 40.0)
    assert np.all(np.diff(tr.times) > 0)
    assert len(tr.times) == len(tr.states)
    assert np.all(np.isfinite(tr.states))
    assert 20.0 in tr.times  # the mesh restarts at tau
    np.testing.assert_array_equal(tr.final_state, ps.flow_at(m, x_low, ps.Pulse(3.53, 20.0), 40.0))


def test_errors():
    m = ps.linear_test()
    with pytest.raises(ValueError):
        ps.integrate(m, [0.0, 0.0], None, -1.0)
    with pytest.raises(NonFiniteStateError):
        ps.integrate(m, [np.nan, 0.0], None, 1.0)
    with pytest.raises(DivergenceError):
        ps.integrate(m, [0.0, 0.0], ps.Pulse(1e7, 5.0), 5.0)
    with pytest.raises(ValueError):
        ps.IntegratorConfig(rel_tol=1e-3)


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1.0)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.integers(0, 1000))
def test_semigroup(t1, t2, seed):
    m = ps.repressilator()
    x0 = np.random.default_rng(seed).uniform(0, 20, 8)
    direct = ps.flow_at(m, x0, None, t1 + t2)
    split = ps.flow_at(m, ps.flow_at(m, x0, None, t1), None, t2)
    assert _rel(direct, split) <= 10 * 1e-10 * 10


@given(st.floats(0, 8), st.floats(0.5, 20), st.floats(0.1, 10), st.integers(0, 1000))
def test_pulse_splicing(mu, tau, extra, seed):
    m = ps.repressilator()
    x0 = np.random.default_rng(seed).uniform(0, 20, 8)
    T = tau + extra
    direct = ps.flow_at(m, x0, ps.Pulse(mu, tau), T)
    split = ps.flow_at(m, ps.flow_at(m, x0, ps.Pulse(mu, tau), tau), None, T - tau)
    assert _rel(direct, split) <= 10 * 1e-10 * 10


@given(st.integers(0, 10_000), st.floats(0, 5), st.floats(0, 3))
def test_monotone_order_preserved(seed, mu_x, dmu):
    m = ps.repressilator()
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 20, 8)
    y = ps.from_cone_coords(m, ps.to_cone_coords(m, x) + rng.uniform(0, 2, 8))
    y = np.maximum(y, 0.0)
    if not ps.precedes(m, x, y):
        return
    fx = ps.flow_at(m, x, ps.Pulse(mu_x, 5.0), 8.0)
    fy = ps.flow_at(m, y, ps.Pulse(mu_x + dmu, 5.0), 8.0)
    assert ps.precedes(m, fx, fy, slack=1e-9)


def test_tightening_tolerance_is_consistent(rep, x_low):
    m, sp = rep
    coarse = ps.IntegratorConfig(1e-8, 1e-10)
    a = ps.flow_at(m, x_low, ps.Pulse(4.0, 15.0), 30.0, coarse, sp.x_star)
    b = ps.flow_at(m, x_low, ps.Pulse(4.0, 15.0), 30.0, coarse.tightened(), sp.x_star)
    scale = 1e-10 + 1e-8 * np.max(np.abs(b - sp.x_star))
    assert np.max(np.abs(a - b)) < scale
