"""Equilibria, Jacobian spectra and the dominant Koopman eigenfunction.

The eigenfunction ``s1`` is estimated with the Laplace-average limit

    s1(x) = lim_{t -> inf} w1 . (phi(t, x, 0) - x*) exp(-lambda1 t)

evaluated on a checkpoint schedule (see ``EstimatorConfig``).
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (DefectiveError, DominanceTieError, HorizonExceededError, BadOrderError,
                     NoConvergenceError, NonFiniteStateError, NonNegativeLambdaError,
                     NotStableError)
from .models import eval_field, to_cone_coords, precedes
from .ode import DEFAULT_CONFIG, IntegratorConfig, raise_for_status


def jacobian(model, x, h_scale=1e-5):
    """Central-difference Jacobian of ``f(., 0)`` with steps ``h_scale (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError("Jacobian requested at a non-finite state")
    J = np.empty((model.n, model.n))
    for i in range(model.n):
        h = h_scale * (1.0 + abs(x[i]))
        e = np.zeros(model.n)
        e[i] = h
        J[:, i] = (eval_field(model, x + e) - eval_field(model, x - e)) / (2 * h)
    return J


def find_equilibrium(model, guess, tol=1e-10, max_iter=100):
    """Stable equilibrium reached by damped Newton from ``guess``."""
    x = np.asarray(guess, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError("guess must be finite")
    lower = np.array(model.state_lower_bounds)
    f = eval_field(model, x)
    for _ in range(max_iter):
        res = np.max(np.abs(f))
        step = np.linalg.solve(jacobian(model, x), -f)
        lam = 1.0
        while lam > 1e-6:
            trial = np.maximum(x + lam * step, lower)
            f_trial = eval_field(model, trial)
            if np.max(np.abs(f_trial)) < res or res < tol:
                break
            lam *= 0.5
        else:
            raise NoConvergenceError(f"Newton stalled at residual {res:.3g}")
        x, f = trial, f_trial
        # keep polishing until the update drops to round-off
        if np.max(np.abs(f)) < tol and np.max(np.abs(lam * step)) <= 1e-13 * (1 + np.max(np.abs(x))):
            break
    if np.max(np.abs(f)) >= tol:
        raise NoConvergenceError(f"residual {np.max(np.abs(f)):.3g} above {tol:g}")
    growth = np.max(np.linalg.eigvals(jacobian(model, x)).real)
    if growth >= 0:
        raise NotStableError(f"equilibrium {x} has an eigenvalue with real part {growth:.3g}")
    return x


@dataclass(frozen=True)
class Spectrum:
    """Linearization at a stable equilibrium.

    ``others`` holds the other stable equilibria used for basin-escape
    detection, with ``other_signs[k]`` the sign of the escape marker
    (``-1`` when that equilibrium lies below ``x_star`` in the cone order).
    """

    x_star: np.ndarray
    lambdas: np.ndarray
    v1: np.ndarray
    w1: np.ndarray
    others: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    other_signs: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def lambda1(self):
        return float(self.lambdas[0].real)

    def scaled(self, c):
        """Same spectrum with ``w1`` multiplied by ``c > 0`` (so ``s1`` scales by ``c``)."""
        if c <= 0:
            raise ValueError("scale must be positive")
        return Spectrum(self.x_star, self.lambdas, self.v1 / c, self.w1 * c,
                        self.others, self.other_signs)


def spectrum(model, x_star, others=(), residual_tol=1e-8, tie_tol=1e-9):
    x_star = np.asarray(x_star, dtype=float)
    J = jacobian(model, x_star)
    lam, V = np.linalg.eig(J)
    order = np.lexsort((-lam.imag, -lam.real))
    lam, V = lam[order], V[:, order]
    if np.linalg.cond(V) > 1e10:
        raise DefectiveError("Jacobian is not diagonalizable to working precision")
    if lam[0].real >= 0:
        raise NotStableError(f"dominant eigenvalue {lam[0]} has nonnegative real part")
    tie = model.n > 1 and abs(lam[0].real - lam[1].real) <= tie_tol
    if tie or abs(lam[0].imag) > tie_tol:
        msg = f"dominant eigenvalue {lam[0]} is complex or not strictly dominant"
        if model.monotone:
            raise DominanceTieError(msg)
        warnings.warn(msg, stacklevel=2)
    W = np.linalg.inv(V)  # rows are left eigenvectors with W V = I
    v1, w1 = V[:, 0].real.copy(), W[0].real.copy()
    if to_cone_coords(model, v1).sum() < 0:
        v1, w1 = -v1, -w1
    w1 /= w1 @ v1
    lam1 = lam[0].real
    res = max(np.max(np.abs(J @ v1 - lam1 * v1)) / np.max(np.abs(v1)),
              np.max(np.abs(w1 @ J - lam1 * w1)) / np.max(np.abs(w1)))
    if res > residual_tol:
        raise DefectiveError(f"eigenvector residual {res:.3g} above {residual_tol:g}")
    others = np.asarray(others, dtype=float).reshape(-1, model.n)
    signs = np.array([-1.0 if precedes(model, o, x_star) else 1.0 for o in others])
    return Spectrum(x_star, lam, v1, w1, others, signs)


def target_spectrum(model, target, seeds=None):
    """Spectrum at the equilibrium grown from named state ``target``.

    The remaining named states (or ``seeds``) are polished to equilibria and
    registered as escape destinations when they are stable and distinct.
    """
    x_star = find_equilibrium(model, model.state(target))
    seeds = seeds if seeds is not None else [model.state(k) for k in model.named_states if k != target]
    others = []
    for s in seeds:
        try:
            o = find_equilibrium(model, s)
        except (NotStableError, NoConvergenceError):
            continue
        if np.max(np.abs(o - x_star)) > 1e-6:
            others.append(o)
    return spectrum(model, x_star, others)


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings for the Laplace-average estimator.

    The estimate is read at ``t_first + k * spacing`` (spacing defaults to
    ``ln 2 / |lambda1|``) and accepted after two consecutive differences fall
    under ``rel_tol |s1| + abs_tol``, scaled down by the geometric tail factor
    of the slowest decaying error term.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-12
    t_first: float = None
    spacing: float = None
    max_checks: int = 400
    escape_radius: float = 1e-3
    integrator: IntegratorConfig = DEFAULT_CONFIG

    def schedule(self, spec):
        lam1 = spec.lambda1
        spacing = self.spacing or math.log(2.0) / abs(lam1)
        t_first = spacing if self.t_first is None else self.t_first
        # the leading error term shrinks by rho per checkpoint; a difference d
        # then bounds the remaining error by d / (1 - rho)
        rho = 0.5
        if len(spec.lambdas) > 1:
            rho = max(rho, math.exp((spec.lambdas[1].real - lam1) * spacing))
        return t_first, spacing, (1.0 - rho)


DEFAULT_ESTIMATOR = EstimatorConfig()


@dataclass(frozen=True)
class EigenfunctionValue:
    """``value`` is ``+-inf`` when the trajectory escaped (sign = side of escape)."""

    value: float
    horizon_used: float
    converged: bool

    @property
    def escaped(self):
        return math.isinf(self.value)


def _kernel_args(model, spec, cfg):
    t_first, spacing, shrink = cfg.schedule(spec)
    ic = cfg.integrator
    others = spec.others if spec.others.size else np.empty((0, model.n))
    return (t_first, spacing, cfg.rel_tol * shrink, cfg.abs_tol * shrink, cfg.max_checks,
            ic.rel_tol, ic.abs_tol, ic.max_step, ic.divergence_norm_bound,
            others, spec.other_signs.astype(float), cfg.escape_radius)


def _wrap(value, horizon, status):
    if status in (_kernels.OK, _kernels.NOISE_FLOOR):
        return EigenfunctionValue(float(value), float(horizon), True)
    if status in (_kernels.ESCAPED, _kernels.DIVERGED):
        return EigenfunctionValue(float(value), float(horizon), False)
    if status == _kernels.HORIZON:
        raise HorizonExceededError(f"estimate did not settle by t={horizon:.6g} (last {value:.6g})")
    raise_for_status(status, horizon)
    raise AssertionError("unreachable")


def s1(model, spec, x, cfg=DEFAULT_ESTIMATOR):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError("state must be finite")
    return _wrap(*s1_deviations(model, spec, (x - spec.x_star)[None, :], cfg)[:, 0])


def s1_deviations(model, spec, ys, cfg=DEFAULT_ESTIMATOR):
    """Raw kernel output (values, horizons, status) for deviations ``ys`` from ``x_star``."""
    ys = np.ascontiguousarray(ys, dtype=float)
    vals, hz, st = _kernels.s1_batch(model.code, model.param_vector, spec.x_star, spec.w1,
                                     spec.lambda1, ys, *_kernel_args(model, spec, cfg))
    return np.vstack([vals, hz, st.astype(float)])


def s1_many(model, spec, xs, cfg=DEFAULT_ESTIMATOR):
    """Vector of ``s1`` values; escapes are ``+-inf``, failed estimates ``nan``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    vals, _, st = s1_deviations(model, spec, xs - spec.x_star, cfg)
    ok = np.isin(st, (_kernels.OK, _kernels.NOISE_FLOOR, _kernels.ESCAPED, _kernels.DIVERGED))
    return np.where(ok, vals, np.nan)


def isostable_time(alpha1, alpha2, lambda1):
    """Time for the free flow to go from isostable ``alpha1`` to ``alpha2``."""
    if np.real(lambda1) >= 0:
        raise NonNegativeLambdaError(f"lambda1 must have negative real part, got {lambda1}")
    if not alpha2 > 0:
        raise BadOrderError("alpha2 must be positive")
    if alpha2 > alpha1:
        raise BadOrderError(f"alpha2={alpha2} exceeds alpha1={alpha1}")
    return math.log(alpha1 / alpha2) / abs(np.real(lambda1))
