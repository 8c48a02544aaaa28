"""Command line driver: ``pulseswitch run config.json [--output DIR] [--threads N] [--seed S]``.

A config is one JSON object. ``command`` picks the experiment; the other
keys are documented in the README. Exit status: 0 success, 2 invalid
config, 3 numerical failure, 4 well-posed but infeasible.
"""
import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .controllers import (ClosedLoopConfig, EnsembleState, build_r_table, closed_loop_switch,
                          open_loop_switch, periodic_baseline, synchronize)
from .dmd import SnapshotSet, dmd, dominant_mode, pulse_snapshots, r_from_data
from .errors import ConfigError, PreconditionViolatedError, PulseSwitchError
from .koopman import EstimatorConfig, find_equilibrium, s1, target_spectrum
from .models import MODELS, SETTINGS, Pulse, get_model, override_params
from .ode import IntegratorConfig, integrate
from .pulse_control import level_set, optimize, r_values
from .tables import read_table, write_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 2, 3, 4
COMMANDS = ("simulate", "spectrum", "rgrid", "levelset", "optimize", "switch-open",
            "switch-closed", "sync", "dmd")


class Infeasible(Exception):
    pass


# --- config access -------------------------------------------------------------

class Section:
    """Typed, path-aware view of a JSON object for error messages like ``pulse.mu``."""

    def __init__(self, data, path=""):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "expected an object")
        self.data, self.path = data, path

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data

    def raw(self, key, default=...):
        if key not in self.data:
            if default is ...:
                raise ConfigError(self._p(key), "required field is missing")
            return default
        return self.data[key]

    def section(self, key, default=...):
        v = self.raw(key, default)
        return Section(v if v is not None else {}, self._p(key))

    def number(self, key, default=..., lo=None, hi=None, strict_lo=False, integer=False):
        v = self.raw(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(self._p(key), f"expected a number, got {v!r}")
        if integer and int(v) != v:
            raise ConfigError(self._p(key), "expected an integer")
        if math.isnan(v):
            raise ConfigError(self._p(key), "must not be NaN")
        if lo is not None and (v < lo or (strict_lo and v == lo)):
            raise ConfigError(self._p(key), f"must be {'>' if strict_lo else '>='} {lo}, got {v}")
        if hi is not None and v > hi:
            raise ConfigError(self._p(key), f"must be <= {hi}, got {v}")
        return int(v) if integer else float(v)

    def axis(self, key, default=..., lo=0.0):
        """Either an explicit ascending list or ``{"start", "stop", "num"}``."""
        v = self.raw(key, default)
        p = self._p(key)
        if isinstance(v, dict):
            s = Section(v, p)
            num = s.number("num", lo=1, integer=True)
            a = np.linspace(s.number("start"), s.number("stop"), num)
        elif isinstance(v, list) and v and all(isinstance(x, (int, float)) for x in v):
            a = np.asarray(v, dtype=float)
        else:
            raise ConfigError(p, "expected a list of numbers or {start, stop, num}")
        if np.any(np.diff(a) <= 0):
            raise ConfigError(p, "values must be strictly increasing")
        if lo is not None and np.any(a < lo):
            raise ConfigError(p, f"values must be >= {lo}")
        return a

    def pair(self, key, default=...):
        v = self.raw(key, default)
        if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v)
                and 0 <= v[0] < v[1]):
            raise ConfigError(self._p(key), "expected [lo, hi] with 0 <= lo < hi")
        return float(v[0]), float(v[1])


def _model(cfg, key="model"):
    m = cfg.section(key)
    mid = m.raw("id")
    if mid not in MODELS:
        raise ConfigError(m._p("id"), f"unknown model {mid!r}; choose from {sorted(MODELS)}")
    overrides = dict(m.raw("overrides", {}) or {})
    setting = m.raw("setting", None)
    if setting is not None:
        if mid != "repressilator8" or setting not in SETTINGS:
            raise ConfigError(m._p("setting"), f"settings {sorted(SETTINGS)} exist for repressilator8 only")
        overrides = {**SETTINGS[setting], **overrides}
    try:
        model = get_model(mid)
        return override_params(model, overrides)
    except KeyError as e:
        raise ConfigError(m._p("overrides"), str(e)) from None


def _state(cfg, key, model, spec=None):
    """A state given as a list, a named model state, or ``"target"``/``"other"``."""
    v = cfg.raw(key)
    if isinstance(v, str):
        if v == "target" and spec is not None:
            return spec.x_star.copy()
        if v == "other" and spec is not None and len(spec.others):
            return spec.others[0].copy()
        if v in model.named_states:
            if spec is not None:
                # named states are seeds; snap them to the equilibria they belong to
                for e in [spec.x_star, *spec.others]:
                    if np.max(np.abs(e - model.state(v))) < 0.25 * (1 + np.max(np.abs(e))):
                        return e.copy()
            try:
                return find_equilibrium(model, model.state(v))
            except PulseSwitchError:
                return model.state(v)
        raise ConfigError(cfg._p(key), f"unknown state name {v!r}")
    if not (isinstance(v, list) and len(v) == model.n and all(isinstance(x, (int, float)) for x in v)):
        raise ConfigError(cfg._p(key), f"expected {model.n} numbers or a state name")
    return np.asarray(v, dtype=float)


def _integrator(cfg):
    s = cfg.section("integrator", {})
    try:
        return IntegratorConfig(s.number("rel_tol", 1e-10), s.number("abs_tol", 1e-12, lo=0, strict_lo=True),
                                s.number("max_step", math.inf, lo=0, strict_lo=True),
                                s.number("divergence_norm_bound", 1e6, lo=0, strict_lo=True))
    except ValueError as e:
        raise ConfigError("integrator", str(e)) from None


def _estimator(cfg):
    s = cfg.section("estimator", {})
    return EstimatorConfig(rel_tol=s.number("rel_tol", 1e-6, lo=0, strict_lo=True),
                           abs_tol=s.number("abs_tol", 1e-12, lo=0, strict_lo=True),
                           max_checks=s.number("max_checks", 400, lo=1, integer=True),
                           escape_radius=s.number("escape_radius", 1e-3, lo=0, strict_lo=True),
                           integrator=_integrator(cfg))


def _target(cfg, model):
    name = cfg.raw("target", None)
    if name is None:
        name = "upper" if "upper" in model.named_states else next(iter(model.named_states))
    if name not in model.named_states:
        raise ConfigError("target", f"unknown target {name!r}; known: {sorted(model.named_states)}")
    return target_spectrum(model, name)


# --- commands --------------------------------------------------------------------
# Each returns a list of (suffix, columns, rows, extra_meta); the first is the main table.

def cmd_simulate(cfg, ctx):
    model = _model(cfg)
    x0 = _state(cfg, "x0", model)
    p = cfg.section("pulse", {"mu": 0, "tau": 0})
    pulse = Pulse(p.number("mu", lo=0), p.number("tau", lo=0))
    t_end = cfg.number("t_end", lo=0)
    cfg_int = _integrator(cfg)
    tr = integrate(model, x0, pulse, t_end, cfg_int)
    cols = ["t"] + [f"x{i + 1}" for i in range(model.n)] + ["u"]
    rows = [[t, *x, pulse.value(t)] for t, x in zip(tr.times, tr.states)]
    return [("", cols, rows, {})]


def cmd_spectrum(cfg, ctx):
    model = _model(cfg)
    sp = _target(cfg, model)
    cols = ["index", "lambda_re", "lambda_im", "x_star", "v1", "w1"]
    rows = [[i + 1, l.real, l.imag, sp.x_star[i], sp.v1[i], sp.w1[i]]
            for i, l in enumerate(sp.lambdas)]
    return [("", cols, rows, {"lambda1": sp.lambda1, "others": sp.others})]


def _grid_rows(args):
    # models hold read-only mappings, so workers rebuild them from id and params
    (mid, params), spec, x, mu, taus, est = args
    return r_values(get_model(mid, params), spec, x, mu, taus, est)


def cmd_rgrid(cfg, ctx):
    model = _model(cfg)
    sp = _target(cfg, model)
    est = _estimator(cfg)
    x = _state(cfg, "x", model, sp)
    mus, taus = cfg.axis("mu_axis"), cfg.axis("tau_axis")
    jobs = [((model.id, dict(model.params)), sp, x, mu, taus, est) for mu in mus]
    if ctx["threads"] > 1:
        with ProcessPoolExecutor(ctx["threads"]) as pool:
            values = list(pool.map(_grid_rows, jobs))
    else:
        values = [_grid_rows(j) for j in jobs]
    rows = [[mu, tau, v] for mu, vals in zip(mus, values) for tau, v in zip(taus, vals)]
    return [("", ["mu", "tau", "r"], rows, {"lambda1": sp.lambda1})]


def cmd_levelset(cfg, ctx):
    model = _model(cfg)
    sp = _target(cfg, model)
    x = _state(cfg, "x", model, sp)
    alphas = cfg.raw("alpha")
    alphas = alphas if isinstance(alphas, list) else [alphas]
    if not alphas or not all(isinstance(a, (int, float)) for a in alphas):
        raise ConfigError("alpha", "expected a number or a list of numbers")
    mus, bracket = cfg.axis("mu_axis"), cfg.pair("tau_bracket")
    tol = cfg.number("tol_tau", 1e-8, lo=0, strict_lo=True)
    rows = []
    for a in alphas:
        ls = level_set(model, sp, x, float(a), mus, bracket, tol, cfg=_estimator(cfg))
        rows += [[a, mu, tau] for mu, tau in ls.points]
    return [("", ["alpha", "mu", "tau"], rows, {})]


def cmd_optimize(cfg, ctx):
    model = _model(cfg)
    sp = _target(cfg, model)
    x = _state(cfg, "x", model, sp)
    eps = cfg.number("epsilon", lo=0, strict_lo=True)
    e_max = cfg.number("E_max", lo=0, strict_lo=True)
    tau_fixed = cfg.number("tau_fixed", None, lo=0) if cfg.raw("tau_fixed", None) is not None else None
    res = optimize(model, sp, x, eps, e_max, cfg.axis("mu_axis"), cfg.pair("tau_bracket", [0, 50]),
                   tau_fixed=tau_fixed, cfg=_estimator(cfg))
    row = [res.mu_star, res.tau_star, res.gamma_star, res.T_conv, res.r_star,
           "isostable" in res.active_constraints, "energy" in res.active_constraints, res.feasible]
    out = [("", ["mu_star", "tau_star", "gamma_star", "T_conv", "r_star", "isostable_active",
                 "energy_active", "feasible"], [row], {})]
    if not res.feasible:
        raise Infeasible(out)
    return out


def _switch_rows(outcome, true_model, spec_true, est, horizon, energy_total):
    rows, spent = [], 0.0
    for t0, t1, mu in outcome.applied_schedule:
        idx = int(np.searchsorted(outcome.trajectory.times, t0))
        v = s1(true_model, spec_true, outcome.trajectory.states[idx], est).value
        rows.append([t0, mu, energy_total - spent, v, math.nan])
        spent += mu * (t1 - t0)
    rows.append([horizon, 0.0, energy_total - outcome.energy_spent, outcome.final_s1, outcome.success])
    return rows


def _switch_common(cfg):
    nominal = _model(cfg, "nominal_model") if cfg.has("nominal_model") else _model(cfg)
    true = _model(cfg, "true_model") if cfg.has("true_model") else nominal
    sp_nom = _target(cfg, nominal)
    sp_true = _target(cfg, true)
    x0 = _state(cfg, "x0", nominal, sp_nom)
    return nominal, true, sp_nom, sp_true, x0


def cmd_switch_open(cfg, ctx):
    nominal, true, sp_nom, sp_true, x0 = _switch_common(cfg)
    est = _estimator(cfg)
    eps = cfg.number("epsilon", 1e-2, lo=0, strict_lo=True)
    e_max = cfg.number("E_max", 100.0, lo=0, strict_lo=True)
    horizon = cfg.number("horizon", 100.0, lo=0, strict_lo=True)
    if cfg.has("pulse"):
        p = cfg.section("pulse")
        pulse = Pulse(p.number("mu", lo=0), p.number("tau", lo=0))
    else:
        plan = optimize(nominal, sp_nom, x0, eps, e_max, cfg.axis("mu_axis"),
                        tau_fixed=cfg.number("tau0", 20.0, lo=0, strict_lo=True), cfg=est)
        if not plan.feasible:
            raise Infeasible([("", ["t", "mu", "budget_remaining", "s1_true", "success"], [], {})])
        pulse = Pulse(plan.mu_star, plan.tau_star)
    out = open_loop_switch(true, pulse, x0, sp_true, eps, horizon, est)
    rows = _switch_rows(out, true, sp_true, est, horizon, e_max)
    meta = {"success": out.success, "energy_spent": out.energy_spent, "pulse": [pulse.mu, pulse.tau],
            "peak_x1": out.peak()}
    return [("", ["t", "mu", "budget_remaining", "s1_true", "success"], rows, meta)]


def cmd_switch_closed(cfg, ctx):
    nominal, true, sp_nom, sp_true, x0 = _switch_common(cfg)
    est = _estimator(cfg)
    try:
        cl = ClosedLoopConfig(t_samp=cfg.number("t_samp", 2.0, lo=0, strict_lo=True),
                              E_max=cfg.number("E_max", 100.0, lo=0, strict_lo=True),
                              epsilon=cfg.number("epsilon", 1e-2, lo=0, strict_lo=True),
                              mu_grid=cfg.axis("mu_grid", {"start": 2, "stop": 10, "num": 100}),
                              tau0=cfg.number("tau0", 20.0, lo=0))
    except ValueError as e:
        raise ConfigError("t_samp/tau0", str(e)) from None
    horizon = cfg.number("horizon", 100.0, lo=0, strict_lo=True)
    out = closed_loop_switch(true, nominal, x0, cl, sp_nom, sp_true, horizon, est)
    rows = _switch_rows(out, true, sp_true, est, horizon, cl.E_max)
    meta = {"success": out.success, "energy_spent": out.energy_spent,
            "budget_exhausted": out.budget_exhausted, "peak_x1": out.peak()}
    return [("", ["t", "mu", "budget_remaining", "s1_true", "success"], rows, meta)]


def cmd_sync(cfg, ctx):
    model = _model(cfg)
    sp = _target(cfg, model)
    est = _estimator(cfg)
    if cfg.has("ensemble_csv"):
        _, cols, data = read_table(cfg.raw("ensemble_csv"))
        want = [f"x{i + 1}" for i in range(model.n)]
        if not set(want) <= set(cols):
            raise ConfigError("ensemble_csv", f"table needs columns {want}")
        states = data[:, [cols.index(c) for c in want]]
    else:
        e = cfg.section("ensemble", {})
        low = e.raw("low", [0.0, 0.0])
        high = e.raw("high", [2.0, 2.0])
        states = EnsembleState.uniform(e.number("count", 20, lo=2, integer=True), low, high,
                                       ctx["seed"]).states
    ens = EnsembleState(states)
    T_p = cfg.number("T_p", 70.0, lo=0, strict_lo=True)
    N_p = cfg.number("N_p", 10, lo=1, integer=True)
    if cfg.has("pulse"):
        p = cfg.section("pulse")
        res = periodic_baseline(model, ens, Pulse(p.number("mu", lo=0), p.number("tau", lo=0, hi=T_p)),
                                T_p, N_p, sp, est)
    else:
        g = cfg.section("grid", {})
        axes = [g.axis(k, d) for k, d in (("x_axis", {"start": 0, "stop": 2, "num": 20}),
                                           ("y_axis", {"start": 0, "stop": 2, "num": 20}),
                                           ("mu_axis", {"start": 0, "stop": 0.5, "num": 51}),
                                           ("tau_axis", {"start": 10, "stop": 50, "num": 41}))]
        if T_p < axes[3][-1]:
            raise ConfigError("T_p", "must be at least the longest tabulated duration")
        table = build_r_table(model, sp, *axes, est)
        res = synchronize(model, ens, T_p, N_p, table, sp, est)
    rows = [[k + 1, p.mu, p.tau, d] for k, (p, d) in enumerate(zip(res.pulses, res.delays))]
    states = [[j, *x] for j, x in enumerate(res.final_states.states)]
    return [("", ["pulse", "mu", "tau", "max_delay"], rows,
             {"initial_delay": res.initial_delay, "skipped": list(res.skipped)}),
            ("_states", ["cell"] + [f"x{i + 1}" for i in range(model.n)], states, {})]


def cmd_dmd(cfg, ctx):
    thr = cfg.number("svd_threshold", 1e-10, lo=0, strict_lo=True, hi=1)
    if cfg.has("snapshots_csv"):
        path = cfg.raw("snapshots_csv")
        try:
            snaps = SnapshotSet.from_csv(path)
            k0 = float(read_table(path)[0].get("k_list", [0])[0])
        except (OSError, ValueError, KeyError) as e:
            raise ConfigError("snapshots_csv", str(e)) from None
        res = dmd(snaps, thr)
        l = dominant_mode(res)
        vals = (res.modes[:, l] * res.amplitudes[l] / res.nu[l] ** k0).real
        tags = snaps.seeds or [(math.nan, math.nan)] * len(vals)
        rows = [[t[0], t[1], v] for t, v in zip(tags, vals)]
        return [("", ["mu", "tau", "r"], rows, {"lambda": [res.lam[l].real, res.lam[l].imag]})]
    model = _model(cfg)
    sp = _target(cfg, model)
    x = _state(cfg, "x", model, sp)
    tags = cfg.raw("pulse_tags")
    if isinstance(tags, dict):
        s = cfg.section("pulse_tags")
        tags = [(m, t) for m in s.axis("mu_axis") for t in s.axis("tau_axis")]
    elif not (isinstance(tags, list) and all(isinstance(t, list) and len(t) == 2 for t in tags)):
        raise ConfigError("pulse_tags", "expected [[mu, tau], ...] or {mu_axis, tau_axis}")
    T_s = cfg.number("T_s", lo=0, strict_lo=True)
    k_list = cfg.raw("k_list", [1, 2, 3, 4])
    obs = lambda z: float(sp.w1 @ (z - sp.x_star))
    data = pulse_snapshots(model, x, tags, T_s, k_list, obs, _integrator(cfg), sp.x_star)
    est = r_from_data(model, x, tags, T_s, k_list, sp, data=data, svd_threshold=thr)
    snap_rows = [[*t, *row] for t, row in zip(tags, data)]
    return [("", ["mu", "tau", "r"], [list(e) for e in est], {"T_s": T_s, "k_list": k_list}),
            ("_snapshots", ["mu", "tau"] + [f"z{k}" for k in k_list], snap_rows,
             {"T_s": T_s, "k_list": k_list})]


HANDLERS = {"simulate": cmd_simulate, "spectrum": cmd_spectrum, "rgrid": cmd_rgrid,
            "levelset": cmd_levelset, "optimize": cmd_optimize, "switch-open": cmd_switch_open,
            "switch-closed": cmd_switch_closed, "sync": cmd_sync, "dmd": cmd_dmd}


def _write(outputs, out_dir, stem, meta):
    paths = []
    for suffix, cols, rows, extra in outputs:
        path = Path(out_dir) / f"{stem}{suffix}.csv"
        paths.append(write_table(path, cols, rows, {**meta, **extra}))
    return paths


def run(config_path, output=None, threads=None, seed=None):
    """Run one experiment; returns the exit status."""
    try:
        text = Path(config_path).read_text()
        raw = json.loads(text)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    threads = threads or int(os.environ.get("PULSESWITCH_THREADS", "1") or 1)
    try:
        cfg = Section(raw)
        command = cfg.raw("command")
        if command not in HANDLERS:
            raise ConfigError("command", f"unknown command {command!r}; choose from {list(COMMANDS)}")
        if seed is None:
            seed = cfg.number("seed", 0, integer=True)
        out_dir = Path(output or cfg.raw("output_path", "."))
        stem = cfg.raw("name", Path(config_path).stem)
        ctx = {"threads": max(1, threads), "seed": seed}
        meta = {"command": command, "config_sha256": hashlib.sha256(
            json.dumps(raw, sort_keys=True).encode()).hexdigest(), "seed": seed,
            "version": __version__}
        try:
            outputs = HANDLERS[command](cfg, ctx)
        except Infeasible as inf:
            _write(inf.args[0], out_dir, stem, {**meta, "feasible": False})
            print(f"{command}: infeasible", file=sys.stderr)
            return EXIT_INFEASIBLE
        for p in _write(outputs, out_dir, stem, meta):
            print(p)
        return EXIT_OK
    except (ConfigError, PreconditionViolatedError) as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (PulseSwitchError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"error: numerical failure in {raw.get('command')}: {type(e).__name__}: {e}",
              file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None):
    ap = argparse.ArgumentParser(prog="pulseswitch", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    rp = sub.add_parser("run", help="run the experiment described by a JSON config")
    rp.add_argument("config")
    rp.add_argument("--output", help="directory for the result tables")
    rp.add_argument("--threads", type=int, help="worker processes for grid evaluation")
    rp.add_argument("--seed", type=int, help="overrides the config's seed")
    args = ap.parse_args(argv)
    return run(args.config, args.output, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
