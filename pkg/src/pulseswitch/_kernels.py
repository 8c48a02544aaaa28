"""Compiled numerical core: vector fields and an adaptive DOP853 integrator.

Everything here is ``numba.njit`` code operating on plain float arrays.
States are integrated as deviations ``y = x - xref`` from a reference point
(usually the target equilibrium), so that the relative tolerance acts on the
distance to the equilibrium rather than on the absolute state.
"""
import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

# Butcher tableau of the 8(5,3) Dormand-Prince pair (12 stages + FSAL).
_A = np.ascontiguousarray(_dop.A[:12, :12])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:12])
_E3 = np.ascontiguousarray(_dop.E3)
_E5 = np.ascontiguousarray(_dop.E5)

LINEAR = 0
REPRESSILATOR = 1
FHN = 2

OK = 0
DIVERGED = 1
UNDERFLOW = 2
NONFINITE = 3
ESCAPED = 4
MAXSTEPS = 5
HORIZON = 6
NOISE_FLOOR = 7

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_MAX_STEPS = 5_000_000


@njit(cache=True)
def field(code, p, x, u, out):
    if code == LINEAR:
        out[0] = p[0] * x[0] + p[2] * u
        out[1] = p[1] * x[1] + p[3] * u
    elif code == REPRESSILATOR:
        n = x.shape[0]
        for i in range(n):
            prev = x[n - 1] if i == 0 else x[i - 1]
            k = 5 * i
            out[i] = p[k] / (1.0 + (prev / p[k + 1]) ** p[k + 2]) + p[k + 3] - p[k + 4] * x[i]
        out[0] += u
    else:
        v = x[0]
        w = x[1]
        out[0] = p[0] * v * (v - p[1]) * (1.0 - v) - p[2] * v * w + u
        out[1] = p[3] * (v - w)


@njit(cache=True)
def _reference_field(code, p, xref, out):
    """f(xref), set to zero when it is round-off so xref is treated as an exact equilibrium."""
    field(code, p, xref, 0.0, out)
    scale = 1.0
    for i in range(xref.shape[0]):
        scale = max(scale, abs(xref[i]))
    small = True
    for i in range(out.shape[0]):
        if abs(out[i]) > 1e3 * 2.220446049250313e-16 * scale:
            small = False
    if small:
        out[:] = 0.0


@njit(cache=True)
def _shifted_field(code, p, xref, y, u, fref, out):
    """f(xref + y) written as fref + [f(xref + y) - f(xref)] with the bracket in closed form.

    The difference never cancels, so tiny deviations keep their relative accuracy.
    """
    if code == LINEAR:
        out[0] = fref[0] + p[0] * y[0] + p[2] * u
        out[1] = fref[1] + p[1] * y[1] + p[3] * u
    elif code == REPRESSILATOR:
        n = y.shape[0]
        for i in range(n):
            j = n - 1 if i == 0 else i - 1
            k = 5 * i
            a = xref[j]
            b = a + y[j]
            qa = (a / p[k + 1]) ** p[k + 2]
            qb = (b / p[k + 1]) ** p[k + 2]
            if a > 0.0 and b > 0.0:
                dq = qa * np.expm1(p[k + 2] * np.log1p(y[j] / a))
            else:
                dq = qb - qa
            out[i] = fref[i] - p[k] * dq / ((1.0 + qa) * (1.0 + qb)) - p[k + 4] * y[i]
        out[0] += u
    else:
        v0 = xref[0]
        w0 = xref[1]
        dv = y[0]
        dw = y[1]
        a = p[1]
        dg = (-(3.0 * v0 * v0 * dv + 3.0 * v0 * dv * dv + dv * dv * dv)
              + (1.0 + a) * (2.0 * v0 * dv + dv * dv) - a * dv)
        out[0] = fref[0] + p[0] * dg - p[2] * (v0 * dw + dv * w0 + dv * dw) + u
        out[1] = fref[1] + p[3] * (dv - dw)


@njit(cache=True)
def _rms(v):
    acc = 0.0
    for i in range(v.shape[0]):
        acc += v[i] * v[i]
    return np.sqrt(acc / v.shape[0])


@njit(cache=True)
def _initial_step(code, p, xref, y, f0, u, span, rtol, atol, fref, work):
    n = y.shape[0]
    scale = np.empty(n)
    for i in range(n):
        scale[i] = atol + abs(y[i]) * rtol
    d0 = _rms(y / scale)
    d1 = _rms(f0 / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y + h0 * f0
    _shifted_field(code, p, xref, y1, u, fref, work)
    d2 = _rms((work - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, span)


@njit(cache=True)
def _try_step(code, p, xref, y, f0, u, h, rtol, atol, K, ynew, fref):
    """One DOP853 step of size h; fills ynew and K[12] = f(ynew); returns the error norm."""
    n = y.shape[0]
    K[0, :] = f0
    ytmp = np.empty(n)
    for s in range(1, 12):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += _A[s, j] * K[j, i]
            ytmp[i] = y[i] + h * acc
        _shifted_field(code, p, xref, ytmp, u, fref, K[s])
    for i in range(n):
        acc = 0.0
        for j in range(12):
            acc += _B[j] * K[j, i]
        ynew[i] = y[i] + h * acc
    _shifted_field(code, p, xref, ynew, u, fref, K[12])
    e5 = 0.0
    e3 = 0.0
    for i in range(n):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        a5 = 0.0
        a3 = 0.0
        for j in range(13):
            a5 += _E5[j] * K[j, i]
            a3 += _E3[j] * K[j, i]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * n)


@njit(cache=True)
def _escape_check(xref, y, bound, others, other_sign, delta):
    """(status, sign): OK while inside the modelled region and away from other equilibria."""
    n = y.shape[0]
    dev = 0.0
    for i in range(n):
        if abs(xref[i] + y[i]) > bound:
            return DIVERGED, 1.0
        dev = max(dev, abs(y[i]))
    if dev <= delta:
        return OK, 0.0
    for k in range(others.shape[0]):
        dist = 0.0
        for i in range(n):
            dist = max(dist, abs(xref[i] + y[i] - others[k, i]))
        if dist < delta:
            return ESCAPED, other_sign[k]
    return OK, 0.0


@njit(cache=True)
def advance(code, p, xref, y, u, t0, t1, rtol, atol, hmax, bound, h,
            others, other_sign, delta):
    """Integrate y in place from t0 to t1 with constant input u.

    Returns (status, t_reached, h_next, escape_sign). ``h <= 0`` requests an
    automatic initial step. The last step is clipped to land on t1 exactly.
    """
    n = y.shape[0]
    fref = np.empty(n)
    f0 = np.empty(n)
    K = np.empty((13, n))
    ynew = np.empty(n)
    _reference_field(code, p, xref, fref)
    t = t0
    if t1 <= t0:
        return OK, t, h, 0.0
    _shifted_field(code, p, xref, y, u, fref, f0)
    if h <= 0.0:
        h = _initial_step(code, p, xref, y, f0, u, t1 - t0, rtol, atol, fref, ynew)
    h_next = h
    steps = 0
    while t < t1:
        h = min(h_next, hmax)
        last = False
        if t + h >= t1:
            h = t1 - t
            last = True
        rejected = False
        while True:
            if not last and h < 10.0 * np.abs(np.nextafter(t, np.inf) - t):
                return UNDERFLOW, t, h, 0.0
            err = _try_step(code, p, xref, y, f0, u, h, rtol, atol, K, ynew, fref)
            if not np.isfinite(err):
                h *= _MIN_FACTOR
                last = False
                rejected = True
                continue
            if err < 1.0:
                if err == 0.0:
                    fac = _MAX_FACTOR
                else:
                    fac = min(_MAX_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
                if rejected:
                    fac = min(1.0, fac)
                # keep the pre-clipping step size for the next segment
                if not last:
                    h_next = h * fac
                else:
                    h_next = max(h_next, h) if not rejected else h
                break
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
            last = False
            rejected = True
        t = t1 if last else t + h
        for i in range(n):
            y[i] = ynew[i]
            f0[i] = K[12, i]
        for i in range(n):
            if not np.isfinite(y[i]):
                return NONFINITE, t, h_next, 0.0
        st, esc = _escape_check(xref, y, bound, others, other_sign, delta)
        if st != OK:
            return st, t, h_next, esc
        steps += 1
        if steps > _MAX_STEPS:
            return MAXSTEPS, t, h_next, 0.0
    return OK, t, h_next, 0.0


@njit(cache=True)
def advance_record(code, p, xref, y0, u, t0, t1, rtol, atol, hmax, bound, h):
    """Like ``advance`` but returns the accepted mesh: (status, times, deviations, h_next)."""
    n = y0.shape[0]
    cap = 256
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    ts[0] = t0
    ys[0, :] = y0
    count = 1
    y = y0.copy()
    fref = np.empty(n)
    f0 = np.empty(n)
    K = np.empty((13, n))
    ynew = np.empty(n)
    status = OK
    t = t0
    if t1 > t0:
        _reference_field(code, p, xref, fref)
        _shifted_field(code, p, xref, y, u, fref, f0)
        if h <= 0.0:
            h = _initial_step(code, p, xref, y, f0, u, t1 - t0, rtol, atol, fref, ynew)
        h_next = h
        while t < t1:
            h = min(h_next, hmax)
            last = False
            if t + h >= t1:
                h = t1 - t
                last = True
            rejected = False
            failed = False
            while True:
                if not last and h < 10.0 * np.abs(np.nextafter(t, np.inf) - t):
                    status = UNDERFLOW
                    failed = True
                    break
                err = _try_step(code, p, xref, y, f0, u, h, rtol, atol, K, ynew, fref)
                if not np.isfinite(err):
                    h *= _MIN_FACTOR
                    last = False
                    rejected = True
                    continue
                if err < 1.0:
                    fac = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
                    if rejected:
                        fac = min(1.0, fac)
                    if not last:
                        h_next = h * fac
                    elif rejected:
                        h_next = h
                    break
                h *= max(_MIN_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
                last = False
                rejected = True
            if failed:
                break
            t = t1 if last else t + h
            for i in range(n):
                y[i] = ynew[i]
                f0[i] = K[12, i]
            if count == cap:
                cap *= 2
                ts2 = np.empty(cap)
                ys2 = np.empty((cap, n))
                ts2[:count] = ts[:count]
                ys2[:count] = ys[:count]
                ts = ts2
                ys = ys2
            ts[count] = t
            ys[count, :] = y
            count += 1
            bad = False
            for i in range(n):
                if not np.isfinite(y[i]):
                    bad = True
            if bad:
                status = NONFINITE
                break
            blown = False
            for i in range(n):
                if abs(xref[i] + y[i]) > bound:
                    blown = True
            if blown:
                status = DIVERGED
                break
            if count > _MAX_STEPS:
                status = MAXSTEPS
                break
    else:
        h_next = h
    return status, ts[:count].copy(), ys[:count].copy(), h_next


@njit(cache=True)
def s1_estimate(code, p, xstar, w1, lam1, y, t_first, spacing, s1_rtol, s1_atol,
                max_checks, rtol, atol, hmax, bound, others, other_sign, delta):
    """Dominant-eigenfunction value of the free flow started at deviation y.

    Evaluates w1.(x(t) - x*) exp(-lam1 t) at t_first, t_first + spacing, ...
    and stops once two consecutive differences are within tolerance. With
    spacing = ln 2 / |lam1| the leading bias halves between checkpoints, so
    the last difference bounds the remaining error. ``y`` is consumed.
    Returns (value, horizon, status); value is +-inf on escape.
    """
    n = y.shape[0]
    # the shifted field keeps relative accuracy, so only underflow limits the horizon
    floor = 1e-250
    horizon = t_first
    t = 0.0
    h = 0.0
    prev = np.nan
    hits = 0
    for _ in range(max_checks):
        # absolute tolerance shrinks with the expected decay e^{lam1 t}
        atol_t = max(atol * np.exp(lam1 * t), 1e-300)
        status, t, h, esc = advance(code, p, xstar, y, 0.0, t, horizon, rtol, atol_t,
                                    hmax, bound, h, others, other_sign, delta)
        if status == ESCAPED or status == DIVERGED:
            return esc * np.inf, t, status
        if status != OK:
            return np.nan, t, status
        acc = 0.0
        dev = 0.0
        for i in range(n):
            acc += w1[i] * y[i]
            dev = max(dev, abs(y[i]))
        est = acc * np.exp(-lam1 * t)
        if np.isfinite(prev) and abs(est - prev) <= s1_rtol * abs(est) + s1_atol:
            hits += 1
            if hits == 2:
                return est, t, OK
        else:
            hits = 0
            if dev < floor:
                # deviation is about to underflow: further checkpoints are noise
                return est, t, NOISE_FLOOR
        prev = est
        horizon += spacing
    return prev, t, HORIZON


@njit(cache=True)
def pulse_endpoints(code, p, xref, y0, mu, taus, rtol, atol, hmax, bound):
    """Deviation states at each (ascending) duration in taus under constant input mu."""
    n = y0.shape[0]
    out = np.empty((taus.shape[0], n))
    status = np.zeros(taus.shape[0], dtype=np.int64)
    y = y0.copy()
    none = np.empty((0, n))
    nosign = np.empty(0)
    t = 0.0
    h = 0.0
    dead = OK
    for k in range(taus.shape[0]):
        if dead != OK:
            out[k, :] = np.nan
            status[k] = dead
            continue
        st, t, h, esc = advance(code, p, xref, y, mu, t, taus[k], rtol, atol, hmax, bound, h,
                                none, nosign, 0.0)
        if st != OK:
            dead = st
            out[k, :] = np.nan
            status[k] = st
        else:
            out[k, :] = y
    return out, status


@njit(cache=True)
def s1_batch(code, p, xstar, w1, lam1, ys, t_first, spacing, s1_rtol, s1_atol, max_checks,
             rtol, atol, hmax, bound, others, other_sign, delta):
    m = ys.shape[0]
    vals = np.empty(m)
    horizons = np.empty(m)
    status = np.empty(m, dtype=np.int64)
    for j in range(m):
        if not np.isfinite(ys[j, 0]):
            vals[j] = np.nan
            horizons[j] = 0.0
            status[j] = NONFINITE
            continue
        y = ys[j].copy()
        v, hz, st = s1_estimate(code, p, xstar, w1, lam1, y, t_first, spacing, s1_rtol,
                                s1_atol, max_checks, rtol, atol, hmax, bound, others,
                                other_sign, delta)
        vals[j] = v
        horizons[j] = hz
        status[j] = st
    return vals, horizons, status
