"""Integration of controlled models under a single pulse.

The step mesh is restarted at ``t = tau`` so that no step straddles the
input discontinuity.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DivergenceError, NonFiniteStateError, StepUnderflowError, IntegrationError
from .models import ZERO_PULSE, Pulse

_NO_SIGNS = np.empty(0)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    divergence_norm_bound: float = 1e6

    def __post_init__(self):
        if not 1e-14 <= self.rel_tol <= 1e-6:
            raise ValueError(f"rel_tol must lie in [1e-14, 1e-6], got {self.rel_tol}")
        if self.abs_tol <= 0:
            raise ValueError("abs_tol must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if self.divergence_norm_bound <= 0:
            raise ValueError("divergence_norm_bound must be positive")

    def tightened(self, factor=10.0):
        return IntegratorConfig(max(self.rel_tol / factor, 1e-14), self.abs_tol / factor,
                                self.max_step, self.divergence_norm_bound)


DEFAULT_CONFIG = IntegratorConfig()


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    input_used: Pulse

    @property
    def final_state(self):
        return self.states[-1]

    def inputs(self):
        """Input value on each accepted step (left-continuous at tau)."""
        return np.where(self.times <= self.input_used.tau, self.input_used.mu, 0.0) \
            if self.input_used.mu > 0 else np.zeros_like(self.times)


def raise_for_status(status, t):
    if status == _kernels.OK:
        return
    if status == _kernels.DIVERGED:
        raise DivergenceError(f"state left the modelled region at t={t:.6g}")
    if status == _kernels.UNDERFLOW:
        raise StepUnderflowError(f"step size underflow at t={t:.6g}")
    if status == _kernels.NONFINITE:
        raise NonFiniteStateError(f"non-finite state at t={t:.6g}")
    raise IntegrationError(f"integration failed with status {status} at t={t:.6g}")


def _check_inputs(model, x0, pulse, t_end):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n,):
        raise ValueError(f"initial state must have shape ({model.n},), got {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise NonFiniteStateError("initial state must be finite")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    return x0, pulse or ZERO_PULSE


def _segments(pulse, t_end):
    """(t0, t1, u) pieces; zero-length pieces are dropped."""
    if pulse.mu == 0 or pulse.tau == 0:
        return [(0.0, t_end, 0.0)]
    t_switch = min(pulse.tau, t_end)
    segs = [(0.0, t_switch, pulse.mu)]
    if t_end > t_switch:
        segs.append((t_switch, t_end, 0.0))
    return segs


def integrate(model, x0, pulse=None, t_end=0.0, cfg=DEFAULT_CONFIG, reference=None):
    """Solve ``dx/dt = f(x, mu h(t, tau))`` on ``[0, t_end]`` and return the step mesh.

    ``reference`` (default: the origin) is the point the solver measures
    relative error against; pass the target equilibrium for trajectories that
    approach it closely.
    """
    x0, pulse = _check_inputs(model, x0, pulse, t_end)
    xref = np.zeros(model.n) if reference is None else np.asarray(reference, dtype=float)
    p = model.param_vector
    y = x0 - xref
    times, states = [np.array([0.0])], [y[None, :]]
    h = 0.0
    for t0, t1, u in _segments(pulse, t_end):
        status, ts, ys, _ = _kernels.advance_record(
            model.code, p, xref, y, u, t0, t1, cfg.rel_tol, cfg.abs_tol,
            cfg.max_step, cfg.divergence_norm_bound, h)
        raise_for_status(status, ts[-1])
        times.append(ts[1:])
        states.append(ys[1:])
        y = ys[-1].copy()
        h = 0.0  # restart the mesh after the discontinuity
    return Trajectory(np.concatenate(times), np.vstack(states) + xref, pulse)


def flow_at(model, x0, pulse=None, t=0.0, cfg=DEFAULT_CONFIG, reference=None):
    """State reached at time ``t``; same numbers as the end of ``integrate``."""
    x0, pulse = _check_inputs(model, x0, pulse, t)
    xref = np.zeros(model.n) if reference is None else np.asarray(reference, dtype=float)
    segs = _segments(pulse, t)
    bounds = [s[0] for s in segs] + [segs[-1][1]]
    return integrate_signal(model, x0, bounds, [s[2] for s in segs], cfg, xref)


def integrate_signal(model, x0, breakpoints, values, cfg=DEFAULT_CONFIG, reference=None):
    """Final state under a piecewise-constant input.

    ``values[k]`` is applied on ``[breakpoints[k], breakpoints[k+1]]``.
    """
    x0 = np.asarray(x0, dtype=float)
    xref = np.zeros(model.n) if reference is None else np.asarray(reference, dtype=float)
    y = x0 - xref
    p = model.param_vector
    none = np.empty((0, model.n))
    for k, u in enumerate(values):
        t0, t1 = float(breakpoints[k]), float(breakpoints[k + 1])
        status, t_reached, _, _ = _kernels.advance(
            model.code, p, xref, y, float(u), t0, t1, cfg.rel_tol, cfg.abs_tol, cfg.max_step,
            cfg.divergence_norm_bound, 0.0, none, _NO_SIGNS, 0.0)
        raise_for_status(status, t_reached)
    return y + xref
