import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import pulseswitch as ps
from pulseswitch.controllers import cache_dir
from pulseswitch.errors import NoValidCandidateError


@pytest.mark.parametrize("kw", [dict(t_samp=0.0), dict(t_samp=-2.0), dict(E_max=0.0),
                                dict(epsilon=-1.0), dict(tau0=3.0), dict(mu_grid=[])])
def test_closed_loop_config_rejects(kw):
    with pytest.raises(ValueError):
        ps.ClosedLoopConfig(**kw)


def test_open_loop_zero_pulse_at_target(rep):
    m, sp = rep
    out = ps.open_loop_switch(m, ps.ZERO_PULSE, sp.x_star, sp, 1e-2, 10.0)
    assert out.success and out.energy_spent == 0.0 and out.applied_schedule == []
    assert abs(out.final_s1) < 1e-10


def test_open_loop_energy_is_mu_tau(lin):
    m, sp = lin
    out = ps.open_loop_switch(m, ps.Pulse(0.7, 1.5), [-1.0, 0.0], sp, 1e-2, 10.0)
    assert out.energy_spent == pytest.approx(0.7 * 1.5, rel=1e-15)
    assert out.trajectory.times[-1] == pytest.approx(10.0)


def _lin_cfg(**kw):
    base = dict(t_samp=0.5, E_max=2.0, epsilon=1e-2, mu_grid=np.linspace(0, 2, 9), tau0=2.0,
                mu0=1.0)
    base.update(kw)
    return ps.ClosedLoopConfig(**base)


@given(st.floats(-2, -0.2), st.floats(-1, 1), st.floats(0.5, 4))
def test_closed_loop_energy_accounting(a, b, E_max):
    m = ps.linear_test()
    sp = ps.target_spectrum(m, "origin")
    cfg = _lin_cfg(E_max=E_max)
    out = ps.closed_loop_switch(m, m, [a, b], cfg, sp, sp, horizon=6.0)
    assert len(out.applied_schedule) == 4
    assert out.energy_spent == pytest.approx(sum((t1 - t0) * mu for t0, t1, mu in out.applied_schedule))
    assert out.energy_spent <= E_max * (1 + 1e-12)
    assert [e["tau"] for e in out.epochs] == [2.0, 1.5, 1.0, 0.5]


def test_closed_loop_budget_exhausted(lin):
    m, sp = lin
    cfg = _lin_cfg(E_max=0.1, mu_grid=[1.0, 2.0])
    out = ps.closed_loop_switch(m, m, [-1.0, 0.0], cfg, sp, sp, horizon=6.0)
    assert out.budget_exhausted and out.energy_spent == 0.0
    assert all(e["rule"] == "budget_exhausted" for e in out.epochs)


def test_closed_loop_success_judged_by_true_model(lin):
    m, sp = lin
    out = ps.closed_loop_switch(m, m, [-1.0, 0.0], _lin_cfg(), sp, sp, horizon=6.0)
    assert out.success == (abs(out.final_s1) <= 1e-2)
    s_true = ps.s1(m, sp, out.trajectory.final_state).value
    assert out.final_s1 == pytest.approx(s_true, rel=1e-9, abs=1e-14)


def test_max_delay_examples():
    lam = -0.5
    assert ps.max_delay([0.3, 0.3 * math.e], lam) == pytest.approx(2.0, rel=1e-14)
    assert ps.max_delay([-1.0, -1.0], lam) == 0.0
    assert ps.max_delay([0.1, -0.1], lam) == math.inf
    assert ps.max_delay([0.1, math.inf], lam) == math.inf


@given(st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=6), st.floats(1e-3, 1e3))
def test_max_delay_scale_free(vals, c):
    a = ps.max_delay(vals, -0.3)
    assert ps.max_delay([c * v for v in vals], -0.3) == pytest.approx(a, rel=1e-9, abs=1e-9)
    assert ps.max_delay([-v for v in vals], -0.3) == pytest.approx(a, rel=1e-12, abs=1e-12)


def _table(values):
    values = np.asarray(values, dtype=float)
    ax = np.array([0.0, 1.0])
    return ps.RTable(ax, ax, np.arange(values.shape[2]) + 1.0, np.arange(values.shape[3]) + 1.0,
                     values)


def test_rtable_bilinear_and_clamped():
    ax = np.array([0.0, 1.0, 3.0])
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    vals = (2 * X + 3 * Y + 1)[:, :, None, None]
    t = ps.RTable(ax, ax, np.array([1.0]), np.array([1.0]), vals)
    assert t.at([0.5, 2.0])[0, 0] == pytest.approx(2 * 0.5 + 3 * 2.0 + 1)
    assert t.at([-5.0, 9.0])[0, 0] == pytest.approx(0 + 3 * 3.0 + 1)


def test_rtable_save_load(tmp_path):
    t = _table(np.random.default_rng(0).uniform(size=(2, 2, 3, 4)))
    t.save(tmp_path / "t.npz")
    u = ps.RTable.load(tmp_path / "t.npz")
    assert np.array_equal(u.values, t.values) and np.array_equal(u.tau_axis, t.tau_axis)


def test_sync_select_identical_cells_takes_first_pair():
    t = _table(np.full((2, 2, 3, 2), 0.4))
    p = ps.sync_select(ps.EnsembleState([[0.2, 0.2], [0.2, 0.2]]), t)
    assert (p.mu, p.tau) == (1.0, 1.0)


def test_sync_select_prefers_smaller_ratio():
    # cell 0 sits at state (0, 0), cell 1 at (1, 1)
    v = np.ones((2, 2, 2, 1))
    v[1, 1, 0, 0] = math.e ** 2
    v[1, 1, 1, 0] = math.e
    p = ps.sync_select(ps.EnsembleState([[0.0, 0.0], [1.0, 1.0]]), _table(v))
    assert p.mu == 2.0


def test_sync_select_excludes_mixed_signs():
    v = np.ones((2, 2, 2, 1))
    v[1, 1, 0, 0] = -1.0
    v[1, 1, 1, 0] = 5.0
    cells = ps.EnsembleState([[0.0, 0.0], [1.0, 1.0]])
    assert ps.sync_select(cells, _table(v)).mu == 2.0
    v[1, 1, 1, 0] = math.inf
    with pytest.raises(NoValidCandidateError):
        ps.sync_select(cells, _table(v))


def test_ensemble_state_validation():
    with pytest.raises(ValueError):
        ps.EnsembleState([[0.0, math.nan]])
    a = ps.EnsembleState.uniform(5, [0, 0], [2, 2], seed=3)
    b = ps.EnsembleState.uniform(5, [0, 0], [2, 2], seed=3)
    assert a.count == 5 and np.array_equal(a.states, b.states)
    assert np.all((a.states >= 0) & (a.states <= 2))


@pytest.fixture(scope="module")
def small_fhn_table(fhn, tmp_path_factory):
    m, sp = fhn
    import os
    old = os.environ.get("PULSESWITCH_CACHE")
    os.environ["PULSESWITCH_CACHE"] = str(tmp_path_factory.mktemp("cache"))
    try:
        axes = (np.array([0.0, 2.0]), np.array([0.0, 2.0]), np.array([0.1, 0.3]),
                np.array([5.0, 10.0]))
        t1 = ps.build_r_table(m, sp, *axes)
        files = list(cache_dir().glob("rtable-*.npz"))
        t2 = ps.build_r_table(m, sp, *axes)
    finally:
        if old is None:
            del os.environ["PULSESWITCH_CACHE"]
        else:
            os.environ["PULSESWITCH_CACHE"] = old
    return t1, t2, files


def test_r_table_cached(small_fhn_table):
    t1, t2, files = small_fhn_table
    assert len(files) == 1
    assert np.array_equal(t1.values, t2.values)
    assert t1.values.shape == (2, 2, 2, 2)


def test_r_table_entries_match_r(fhn, small_fhn_table):
    m, sp = fhn
    t = small_fhn_table[0]
    assert t.values[1, 0, 1, 0] == pytest.approx(ps.r(m, sp, [2.0, 0.0], 0.3, 5.0), rel=1e-9)


def test_synchronize_identical_cells(fhn, small_fhn_table):
    m, sp = fhn
    cells = ps.EnsembleState([[0.7, 0.4]] * 3)
    res = ps.synchronize(m, cells, 20.0, 2, small_fhn_table[0], sp)
    assert len(res.delays) == len(res.pulses) == 2
    assert np.all(res.delays == 0.0) and res.initial_delay == 0.0


def test_synchronize_preconditions(fhn, small_fhn_table):
    m, sp = fhn
    cells = ps.EnsembleState([[0.7, 0.4], [0.2, 0.1]])
    with pytest.raises(ValueError):
        ps.synchronize(m, cells, 8.0, 2, small_fhn_table[0], sp)
    with pytest.raises(ValueError):
        ps.synchronize(m, cells, 20.0, 0, small_fhn_table[0], sp)


def test_free_run_delay_invariant(rep):
    m, sp = rep
    cells = ps.EnsembleState([sp.x_star + 0.3, sp.x_star + 0.9])
    res = ps.periodic_baseline(m, cells, ps.ZERO_PULSE, 4.0, 3, sp)
    assert np.all(np.abs(res.delays - res.initial_delay) <= 1e-4)
    assert res.initial_delay > 0.1
