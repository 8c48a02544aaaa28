"""Switching and synchronization controllers built on the pulse control function.

Closed-loop switching replans every ``t_samp`` time units from the observed
state of the true system, but only ever consults the nominal model's
spectrum and r. Success is judged with the true model's eigenfunction.
"""
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import NoValidCandidateError
from .koopman import DEFAULT_ESTIMATOR, s1, s1_many
from .models import Pulse, ZERO_PULSE
from .ode import Trajectory, integrate, raise_for_status
from .pulse_control import r_values, t_conv


@dataclass(frozen=True)
class ClosedLoopConfig:
    t_samp: float = 2.0
    E_max: float = 100.0
    epsilon: float = 1e-2
    mu_grid: np.ndarray = field(default_factory=lambda: np.linspace(2.0, 10.0, 100))
    tau0: float = 20.0
    mu0: float = 3.53

    def __post_init__(self):
        if not self.t_samp > 0:
            raise ValueError("t_samp must be positive")
        if not self.E_max > 0:
            raise ValueError("E_max must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        steps = self.tau0 / self.t_samp
        if self.tau0 < 0 or abs(steps - round(steps)) > 1e-9:
            raise ValueError("tau0 must be a nonnegative multiple of t_samp")
        grid = np.asarray(self.mu_grid, dtype=float)
        if grid.ndim != 1 or len(grid) == 0 or np.any(grid < 0):
            raise ValueError("mu_grid must be a nonempty list of magnitudes >= 0")
        object.__setattr__(self, "mu_grid", grid)


@dataclass(frozen=True)
class SwitchOutcome:
    success: bool
    trajectory: Trajectory
    energy_spent: float
    applied_schedule: list  # (t_start, t_end, mu)
    final_s1: float
    epochs: list = field(default_factory=list)
    budget_exhausted: bool = False

    def peak(self, index=0):
        return float(np.max(self.trajectory.states[:, index]))


def _join(pieces, pulse):
    times = np.concatenate([pieces[0].times] + [p.times[1:] for p in pieces[1:]])
    states = np.vstack([pieces[0].states] + [p.states[1:] for p in pieces[1:]])
    return Trajectory(times, states, pulse)


def _shift(traj, t0):
    return Trajectory(traj.times + t0, traj.states, traj.input_used)


def _final_s1(model, spec, x, cfg):
    return s1(model, spec, x, cfg).value


def open_loop_switch(true_model, nominal_pulse, x0, spec_true, epsilon, horizon,
                     cfg=DEFAULT_ESTIMATOR):
    """Apply a fixed pulse to the true system and check the epsilon-isostable at ``horizon``."""
    traj = integrate(true_model, x0, nominal_pulse, horizon, cfg.integrator, spec_true.x_star)
    final = _final_s1(true_model, spec_true, traj.final_state, cfg)
    sched = [(0.0, nominal_pulse.tau, nominal_pulse.mu)] if nominal_pulse.mu > 0 else []
    return SwitchOutcome(bool(abs(final) <= epsilon), traj, nominal_pulse.energy, sched, final)


def _choose_mu(mus, rv, spec, tau, epsilon):
    """Replanning rule; returns (mu, rule)."""
    neg = np.isfinite(rv) & (rv < 0)
    if neg.any():
        tc = np.array([t_conv(spec, v, tau, epsilon) if ok else np.inf for v, ok in zip(rv, neg)])
        return mus[int(np.argmin(tc))], "min_tconv"
    pos = np.isfinite(rv) & (rv > 0)
    if pos.any():
        # every affordable pulse overshoots; take the mildest overshoot
        return mus[int(np.argmin(np.where(pos, rv, np.inf)))], "min_overshoot"
    return mus[-1], "max_affordable"


def closed_loop_switch(true_model, nominal_model, x0, cfg, spec_nominal, spec_true,
                       horizon=100.0, est=DEFAULT_ESTIMATOR):
    x = np.asarray(x0, dtype=float)
    ic = est.integrator
    n_epochs = int(round(cfg.tau0 / cfg.t_samp))
    spent = 0.0
    pieces, schedule, epochs = [], [], []
    exhausted = False
    t = 0.0
    for k in range(n_epochs):
        tau_k = cfg.tau0 - k * cfg.t_samp
        budget = cfg.E_max - spent
        mus = cfg.mu_grid[cfg.mu_grid * tau_k <= budget * (1 + 1e-12)]
        if exhausted or len(mus) == 0:
            exhausted = True
            mu, rule = 0.0, "budget_exhausted"
        else:
            rv = np.array([r_values(nominal_model, spec_nominal, x, m, [tau_k], est)[0] for m in mus])
            mu, rule = _choose_mu(mus, rv, spec_nominal, tau_k, cfg.epsilon)
        seg = integrate(true_model, x, Pulse(mu, cfg.t_samp), cfg.t_samp, ic, spec_true.x_star)
        pieces.append(_shift(seg, t))
        epochs.append(dict(t=t, tau=tau_k, mu=float(mu), budget=budget, rule=rule))
        schedule.append((t, t + cfg.t_samp, float(mu)))
        spent += mu * cfg.t_samp
        t += cfg.t_samp
        x = seg.final_state
    if horizon > t:
        pieces.append(_shift(integrate(true_model, x, ZERO_PULSE, horizon - t, ic, spec_true.x_star), t))
    traj = _join(pieces, ZERO_PULSE) if pieces else integrate(true_model, x, ZERO_PULSE, 0.0, ic)
    final = _final_s1(true_model, spec_true, traj.final_state, est)
    return SwitchOutcome(bool(abs(final) <= cfg.epsilon), traj, spent, schedule, final, epochs,
                         exhausted)


# --- ensemble synchronization -------------------------------------------------

@dataclass(frozen=True)
class EnsembleState:
    states: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.states, dtype=float))
        if not np.all(np.isfinite(s)):
            raise ValueError("ensemble states must be finite")
        object.__setattr__(self, "states", s)

    @property
    def count(self):
        return self.states.shape[0]

    @classmethod
    def uniform(cls, count, low, high, seed):
        rng = np.random.default_rng(seed)
        low, high = np.asarray(low, dtype=float), np.asarray(high, dtype=float)
        return cls(rng.uniform(low, high, size=(count, len(low))))


@dataclass(frozen=True)
class SyncResult:
    delays: np.ndarray
    pulses: list
    final_states: EnsembleState
    initial_delay: float = math.nan
    skipped: tuple = ()


def max_delay(s1_values, lambda1):
    """Largest isostable time lag within an ensemble; ``inf`` for mixed signs or escapes."""
    v = np.asarray(s1_values, dtype=float)
    if not np.all(np.isfinite(v)) or not (np.all(v > 0) or np.all(v < 0)):
        return math.inf
    a = np.abs(v)
    return math.log(a.max() / a.min()) / abs(lambda1)


@dataclass(frozen=True)
class RTable:
    """r tabulated on a rectangular 2-D state grid: ``values[i, j, mu, tau]``."""

    x_axis: np.ndarray
    y_axis: np.ndarray
    mu_axis: np.ndarray
    tau_axis: np.ndarray
    values: np.ndarray

    def at(self, state):
        """Bilinear interpolation in the state, clamped to the grid edges."""
        out = []
        for ax, v in ((self.x_axis, state[0]), (self.y_axis, state[1])):
            v = min(max(v, ax[0]), ax[-1])
            i = min(max(int(np.searchsorted(ax, v)) - 1, 0), len(ax) - 2)
            out.append((i, (v - ax[i]) / (ax[i + 1] - ax[i])))
        (i, a), (j, b) = out
        V = self.values
        terms = [((1 - a) * (1 - b), V[i, j]), (a * (1 - b), V[i + 1, j]),
                 ((1 - a) * b, V[i, j + 1]), (a * b, V[i + 1, j + 1])]
        # zero-weight corners are skipped so an escape marker there cannot leak in as nan
        return sum(w * v for w, v in terms if w != 0)

    def save(self, path):
        np.savez_compressed(path, x_axis=self.x_axis, y_axis=self.y_axis, mu_axis=self.mu_axis,
                            tau_axis=self.tau_axis, values=self.values)

    @classmethod
    def load(cls, path):
        with np.load(path) as d:
            return cls(d["x_axis"], d["y_axis"], d["mu_axis"], d["tau_axis"], d["values"])


# bump when the numerics behind cached tables change
_TABLE_FORMAT = 2


def cache_dir():
    return Path(os.environ.get("PULSESWITCH_CACHE", Path.home() / ".cache" / "pulseswitch"))


def build_r_table(model, spec, x_axis, y_axis, mu_axis, tau_axis, cfg=DEFAULT_ESTIMATOR,
                  cache=True):
    axes = [np.asarray(a, dtype=float) for a in (x_axis, y_axis, mu_axis, tau_axis)]
    key = json.dumps(dict(format=_TABLE_FORMAT, model=model.id, params=dict(model.params), axes=[a.tolist() for a in axes],
                          x_star=spec.x_star.tolist(), w1=spec.w1.tolist(),
                          est=[cfg.rel_tol, cfg.abs_tol, cfg.integrator.rel_tol,
                               cfg.integrator.abs_tol]), sort_keys=True)
    path = cache_dir() / f"rtable-{hashlib.sha256(key.encode()).hexdigest()[:16]}.npz"
    if cache and path.exists():
        return RTable.load(path)
    X, Y, M, T = axes
    values = np.empty((len(X), len(Y), len(M), len(T)))
    for i, xv in enumerate(X):
        for j, yv in enumerate(Y):
            for m, mu in enumerate(M):
                values[i, j, m] = r_values(model, spec, np.array([xv, yv]), mu, T, cfg)
    table = RTable(X, Y, M, T, values)
    if cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        table.save(tmp)
        os.replace(tmp, path)
    return table


def sync_select(ensemble, table):
    """Tabulated (mu, tau) minimizing ln(max_j r / min_j r) over the cells."""
    R = np.stack([table.at(x) for x in ensemble.states])  # cells x mu x tau
    finite = np.all(np.isfinite(R), axis=0)
    same = np.all(R > 0, axis=0) | np.all(R < 0, axis=0)
    ok = finite & same
    if not ok.any():
        raise NoValidCandidateError("no tabulated pulse keeps every cell on one side of s1 = 0")
    A = np.abs(np.where(ok, R, 1.0))
    obj = np.where(ok, np.log(A.max(axis=0) / A.min(axis=0)), np.inf)
    i, j = np.unravel_index(int(np.argmin(obj)), obj.shape)  # first index wins ties
    return Pulse(table.mu_axis[i], table.tau_axis[j])


def _advance_ensemble(model, states, pulse, T_p, ic, xref):
    p = model.param_vector
    out = states.copy()
    none, nosign = np.empty((0, model.n)), np.empty(0)
    segs = [(0.0, pulse.tau, pulse.mu), (pulse.tau, T_p, 0.0)] if pulse.mu > 0 else [(0.0, T_p, 0.0)]
    for c in range(len(out)):
        y = out[c] - xref
        for t0, t1, u in segs:
            st, tr, _, _ = _kernels.advance(model.code, p, xref, y, u, t0, t1, ic.rel_tol,
                                            ic.abs_tol, ic.max_step, ic.divergence_norm_bound,
                                            0.0, none, nosign, 0.0)
            raise_for_status(st, tr)
        out[c] = y + xref
    return out


def _run_train(model, ensemble0, T_p, N_p, spec, choose, cfg):
    if N_p < 1:
        raise ValueError("N_p must be >= 1")
    states = ensemble0.states.copy()
    lam1 = spec.lambda1
    delays, pulses, skipped = [], [], []
    initial = max_delay(s1_many(model, spec, states, cfg), lam1)
    for k in range(N_p):
        try:
            pulse = choose(EnsembleState(states))
        except NoValidCandidateError:
            pulse = ZERO_PULSE
            skipped.append(k)
        if pulse.tau > T_p:
            raise ValueError(f"pulse duration {pulse.tau} exceeds the period {T_p}")
        states = _advance_ensemble(model, states, pulse, T_p, cfg.integrator, spec.x_star)
        pulses.append(pulse)
        delays.append(max_delay(s1_many(model, spec, states, cfg), lam1))
    return SyncResult(np.array(delays), pulses, EnsembleState(states), initial, tuple(skipped))


def synchronize(model, ensemble0, T_p, N_p, r_table, spec, cfg=DEFAULT_ESTIMATOR):
    """Closed-loop pulse train: observe, select from the table, pulse, free-run to the period."""
    if T_p < r_table.tau_axis.max():
        raise ValueError("T_p must be at least the longest tabulated duration")
    return _run_train(model, ensemble0, T_p, N_p, spec, lambda e: sync_select(e, r_table), cfg)


def periodic_baseline(model, ensemble0, pulse, T_p, N_p, spec, cfg=DEFAULT_ESTIMATOR):
    return _run_train(model, ensemble0, T_p, N_p, spec, lambda e: pulse, cfg)
