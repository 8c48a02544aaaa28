"""Pulse control function r(x, mu, tau) = s1(phi(tau, x, mu)) and what is built on it.

Escape conventions: a pulse whose endpoint leaves the target basin gives
``-inf`` (fell back below the target in the cone order) or ``+inf``
(ended above it, or diverged). Failed evaluations are ``nan``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import NoBracketError, PreconditionViolatedError, UnreachableError
from .koopman import DEFAULT_ESTIMATOR, s1_deviations


@dataclass(frozen=True)
class RGrid:
    x: np.ndarray
    mu_axis: np.ndarray
    tau_axis: np.ndarray
    values: np.ndarray  # [mu, tau]

    def __post_init__(self):
        for name in ("mu_axis", "tau_axis"):
            ax = getattr(self, name)
            if ax.ndim != 1 or np.any(np.diff(ax) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        if self.values.shape != (len(self.mu_axis), len(self.tau_axis)):
            raise ValueError("values must have shape (len(mu_axis), len(tau_axis))")


@dataclass(frozen=True)
class LevelSet:
    alpha: float
    points: np.ndarray  # rows (mu, tau), ascending mu
    bracket_width: np.ndarray

    @property
    def mus(self):
        return self.points[:, 0]

    @property
    def taus(self):
        return self.points[:, 1]

    def is_strictly_decreasing(self):
        return bool(np.all(np.diff(self.taus) < 0))


@dataclass(frozen=True)
class OptimizeResult:
    mu_star: float
    tau_star: float
    gamma_star: float
    T_conv: float
    active_constraints: frozenset
    feasible: bool
    r_star: float = math.nan


def _axis(values, name):
    a = np.atleast_1d(np.asarray(values, dtype=float))
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite and >= 0")
    return a


def r_values(model, spec, x, mu, taus, cfg=DEFAULT_ESTIMATOR):
    """r(x, mu, tau) for every tau in ``taus`` (any order) from one pulsed run."""
    taus = _axis(taus, "tau")
    if mu < 0 or not math.isfinite(mu):
        raise ValueError("mu must be finite and >= 0")
    order = np.argsort(taus, kind="stable")
    ic = cfg.integrator
    y0 = np.asarray(x, dtype=float) - spec.x_star
    ends, st = _kernels.pulse_endpoints(model.code, model.param_vector, spec.x_star, y0,
                                        float(mu), np.ascontiguousarray(taus[order]),
                                        ic.rel_tol, ic.abs_tol, ic.max_step,
                                        ic.divergence_norm_bound)
    vals, _, sst = s1_deviations(model, spec, ends, cfg)
    good = np.isin(sst, (_kernels.OK, _kernels.NOISE_FLOOR, _kernels.ESCAPED, _kernels.DIVERGED))
    out_sorted = np.where(good, vals, np.nan)
    out_sorted[st == _kernels.DIVERGED] = np.inf
    out = np.empty_like(out_sorted)
    out[order] = out_sorted
    return out


def r(model, spec, x, mu, tau, cfg=DEFAULT_ESTIMATOR):
    return float(r_values(model, spec, x, mu, [tau], cfg)[0])


def r_grid(model, spec, x, mu_axis, tau_axis, cfg=DEFAULT_ESTIMATOR):
    mu_axis, tau_axis = _axis(mu_axis, "mu_axis"), _axis(tau_axis, "tau_axis")
    values = np.vstack([r_values(model, spec, x, mu, tau_axis, cfg) for mu in mu_axis])
    return RGrid(np.asarray(x, dtype=float), mu_axis, tau_axis, values)


def _first_crossing(fun, taus, vals, alpha, tol):
    """Smallest tau with fun(tau) = alpha, given fun sampled as ``vals`` on ``taus``.

    ``-inf`` counts as below every level and ``+inf`` above; nan samples are
    skipped. Returns None when no sign change is seen.
    """
    ok = ~np.isnan(vals)
    t, v = taus[ok], vals[ok] - alpha
    if len(t) == 0:
        return None
    if v[0] == 0:
        return t[0]
    change = np.nonzero(np.sign(v[1:]) != np.sign(v[:-1]))[0]
    if len(change) == 0:
        return None
    i = change[0]
    lo, hi, flo = t[i], t[i + 1], v[i]
    g = lambda s: fun(s) - alpha
    # shrink until both ends are finite, then hand off to Brent
    while hi - lo > tol:
        fhi = v[i + 1] if hi == t[i + 1] else g(hi)
        if math.isfinite(flo) and math.isfinite(fhi):
            return brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
        mid = 0.5 * (lo + hi)
        fm = g(mid)
        if math.isnan(fm):
            return None
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _scan(tau_bracket, n_scan):
    lo, hi = map(float, tau_bracket)
    if not 0 <= lo < hi:
        raise ValueError("tau_bracket must satisfy 0 <= lo < hi")
    return np.linspace(lo, hi, n_scan)


def level_set(model, spec, x, alpha, mu_axis, tau_bracket, tol_tau=1e-8, n_scan=64,
              cfg=DEFAULT_ESTIMATOR):
    """Curve ``r(x, mu, tau) = alpha`` as the smallest root in tau for each mu."""
    mu_axis = _axis(mu_axis, "mu_axis")
    taus = _scan(tau_bracket, n_scan)
    points = []
    for mu in mu_axis:
        vals = r_values(model, spec, x, mu, taus, cfg)
        tau = _first_crossing(lambda s: r(model, spec, x, mu, s, cfg), taus, vals, alpha, tol_tau)
        if tau is not None:
            points.append((mu, tau))
    if not points:
        raise NoBracketError(f"level {alpha:g} not crossed for any mu in the bracket {tau_bracket}")
    pts = np.array(points)
    return LevelSet(float(alpha), pts, np.full(len(pts), tol_tau))


def min_time_to_isostable(model, spec, x, mu, beta, tau_bracket, tol_tau=1e-10, n_scan=64,
                          cfg=DEFAULT_ESTIMATOR):
    """Shortest pulse duration at magnitude ``mu`` that lands on isostable ``beta``."""
    if r(model, spec, x, mu, 0.0, cfg) >= beta:
        return 0.0
    taus = _scan(tau_bracket, n_scan)
    vals = r_values(model, spec, x, mu, taus, cfg)
    tau = _first_crossing(lambda s: r(model, spec, x, mu, s, cfg), taus, vals, beta, tol_tau)
    if tau is None:
        raise UnreachableError(f"r(x, {mu:g}, .) does not reach {beta:g} within {tau_bracket}")
    return float(tau)


def _objective(spec, rv, tau):
    return math.log(abs(rv)) / abs(spec.lambda1) + tau


def _pick(cands, spec, epsilon):
    """Best (objective, mu, tau, r, active) candidate; ties go to smaller mu then tau."""
    if not cands:
        return OptimizeResult(math.nan, math.nan, math.inf, math.inf, frozenset(), False)
    gam, mu, tau, rv, active = min(cands, key=lambda c: (c[0], c[1], c[2]))
    return OptimizeResult(mu, tau, gam, gam - math.log(epsilon) / abs(spec.lambda1),
                          frozenset(active), True, rv)


def optimize(model, spec, x, epsilon, E_max, mu_axis, tau_bracket=(0.0, 50.0), tau_fixed=None,
             tol_tau=1e-8, n_scan=64, cfg=DEFAULT_ESTIMATOR):
    """Minimize ``ln|r| / |lambda1| + tau`` subject to ``r <= -epsilon`` and ``mu tau <= E_max``.

    The objective decreases in both mu and tau on the feasible set, so for
    each mu only the largest admissible duration ``min(tau_eps(mu), E_max / mu)``
    is examined, where ``tau_eps`` is the first crossing of ``r = -epsilon``.
    With ``tau_fixed`` the duration is pinned and only mu is searched.
    """
    if not epsilon > 0 or not E_max > 0:
        raise ValueError("epsilon and E_max must be positive")
    mu_axis = _axis(mu_axis, "mu_axis")
    s1x = r(model, spec, x, 0.0, 0.0, cfg)
    if not s1x <= -epsilon:
        raise PreconditionViolatedError(f"s1(x) = {s1x:.6g} is above -epsilon = {-epsilon:g}")
    cands = []
    if tau_fixed is not None:
        for mu in mu_axis:
            if mu * tau_fixed > E_max * (1 + 1e-12):
                continue
            rv = r(model, spec, x, mu, tau_fixed, cfg)
            if math.isfinite(rv) and rv <= -epsilon:
                cands.append((_objective(spec, rv, tau_fixed), mu, tau_fixed, rv, ()))
        return _pick(cands, spec, epsilon)

    taus = _scan(tau_bracket, n_scan)
    for mu in mu_axis:
        vals = r_values(model, spec, x, mu, taus, cfg)
        tau_eps = _first_crossing(lambda s: r(model, spec, x, mu, s, cfg), taus, vals,
                                  -epsilon, tol_tau)
        tau_eps = math.inf if tau_eps is None else tau_eps
        tau_E = E_max / mu if mu > 0 else math.inf
        tau = min(tau_eps, tau_E, taus[-1])
        if tau <= 0:
            continue
        rv = r(model, spec, x, mu, tau, cfg)
        if not math.isfinite(rv):
            continue
        if rv > -epsilon:
            # landed on the level curve from the feasible side up to tolerance
            if rv > -epsilon + 1e-6 * epsilon:
                continue
            rv = -epsilon
        active = []
        if abs(tau - tau_eps) <= 2 * tol_tau:
            active.append("isostable")
        if abs(tau - tau_E) <= 2 * tol_tau:
            active.append("energy")
        cands.append((_objective(spec, rv, tau), mu, tau, rv, active))
    return _pick(cands, spec, epsilon)


def brute_force_optimize(grid, spec, epsilon, E_max):
    """Exhaustive minimization over a precomputed ``RGrid`` with the same admissibility rule."""
    M, T = np.meshgrid(grid.mu_axis, grid.tau_axis, indexing="ij")
    ok = np.isfinite(grid.values) & (grid.values <= -epsilon) & (M * T <= E_max) & (T > 0)
    cands = []
    for i, j in zip(*np.nonzero(ok)):
        rv = grid.values[i, j]
        cands.append((_objective(spec, rv, T[i, j]), M[i, j], T[i, j], rv, ()))
    return _pick(cands, spec, epsilon)


def t_conv(spec, rv, tau, epsilon):
    """Total time to reach the epsilon-isostable after a pulse of duration tau landing on rv."""
    if not (math.isfinite(rv) and rv < 0):
        return math.inf
    return math.log(abs(rv) / epsilon) / abs(spec.lambda1) + tau
