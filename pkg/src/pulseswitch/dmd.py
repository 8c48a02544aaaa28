"""Dynamic mode decomposition and data-driven estimates of r.

Each row of a snapshot matrix is the time series of a scalar observable
along one trajectory, so the components of a DMD mode sample the matching
Koopman eigenfunction across the trajectory seeds.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DefectiveTError, NoDominantRealModeError, RankDeficientError
from .koopman import DEFAULT_ESTIMATOR
from .models import Pulse
from .ode import flow_at
from .tables import read_table, write_table


@dataclass(frozen=True)
class SnapshotSet:
    data: np.ndarray  # m x N
    T_s: float
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.data, dtype=float))
        if d.shape[1] < 2:
            raise ValueError("need at least two snapshots per series")
        if not np.all(np.isfinite(d)):
            raise ValueError("snapshot data must be finite")
        if not self.T_s > 0:
            raise ValueError("T_s must be positive")
        object.__setattr__(self, "data", d)

    def drop_first(self):
        return SnapshotSet(self.data[:, 1:], self.T_s, self.seeds)

    def to_csv(self, path, k_list=None):
        """Table with one row per series: ``mu, tau`` tag columns then ``z<k>`` samples."""
        ks = list(k_list) if k_list is not None else list(range(1, self.data.shape[1] + 1))
        tags = self.seeds or [(math.nan, math.nan)] * len(self.data)
        rows = [[*t, *row] for t, row in zip(tags, self.data)]
        return write_table(path, ["mu", "tau"] + [f"z{k}" for k in ks], rows,
                           {"T_s": self.T_s, "k_list": ks})

    @classmethod
    def from_csv(cls, path):
        """Inverse of ``to_csv``; ``T_s`` comes from the metadata line."""
        meta, cols, data = read_table(path)
        if "T_s" not in meta:
            raise ValueError(f"{path}: metadata lacks T_s")
        zc = [i for i, c in enumerate(cols) if c.startswith("z")]
        seeds = []
        if "mu" in cols and "tau" in cols:
            seeds = [tuple(r) for r in data[:, [cols.index("mu"), cols.index("tau")]]]
        return cls(data[:, zc], float(meta["T_s"]), seeds)


@dataclass(frozen=True)
class DMDResult:
    modes: np.ndarray  # m x rank, column l is V_l
    nu: np.ndarray
    lam: np.ndarray
    amplitudes: np.ndarray
    rank_used: int

    @property
    def eigenfunction_samples(self):
        return self.modes


def dmd(snapshots, svd_threshold=1e-10):
    if not 0 < svd_threshold < 1:
        raise ValueError("svd_threshold must lie in (0, 1)")
    Z = snapshots.data
    X, Y = Z[:, :-1], Z[:, 1:]
    U, S, Vh = np.linalg.svd(X, full_matrices=False)
    if S[0] == 0:
        raise RankDeficientError("snapshot matrix is zero")
    keep = S > svd_threshold * S[0]
    U, S, V = U[:, keep], S[keep], Vh[keep].conj().T
    T = U.conj().T @ Y @ V / S
    nu, W = np.linalg.eig(T)
    if not np.all(np.isfinite(nu)) or np.linalg.cond(W) > 1e12:
        raise DefectiveTError("reduced propagator is not diagonalizable")
    modes = U @ W
    # amplitudes so that X[:, 0] = sum_l b_l V_l
    b = np.linalg.lstsq(modes, X[:, 0].astype(complex), rcond=None)[0]
    lam = np.log(nu.astype(complex)) / snapshots.T_s
    return DMDResult(modes, nu, lam, b, int(keep.sum()))


def dominant_mode(result, lambda1=None, tol_imag=1e-8):
    """Index of the real, negative mode nearest ``lambda1`` (or with the largest real part)."""
    real = (np.abs(result.lam.imag) <= tol_imag * np.maximum(1, np.abs(result.lam))) \
        & (result.lam.real < 0)
    if not real.any():
        raise NoDominantRealModeError(f"no real negative DMD eigenvalue among {result.lam}")
    idx = np.nonzero(real)[0]
    if lambda1 is None:
        return int(idx[np.argmax(result.lam[idx].real)])
    return int(idx[np.argmin(np.abs(result.lam[idx].real - lambda1))])


def pulse_snapshots(model, base_x, pulse_tags, T_s, k_list, observable, integrator=None,
                    reference=None):
    """Series ``g(phi(tau_j + k T_s, x, mu_j h))`` for each tag, one row per tag.

    ``reference`` is passed to the integrator; use the target equilibrium so the
    late, tiny deviations are resolved relative to it.
    """
    ic = integrator or DEFAULT_ESTIMATOR.integrator
    ks = np.asarray(k_list, dtype=float)
    if np.any(np.diff(ks) <= 0):
        raise ValueError("k_list must be increasing")
    rows = []
    for mu, tau in pulse_tags:
        end = flow_at(model, base_x, Pulse(mu, tau), tau, ic, reference)
        z, t_prev, row = end, 0.0, []
        for k in ks:
            z = flow_at(model, z, None, k * T_s - t_prev, ic, reference)
            t_prev = k * T_s
            row.append(observable(z))
        rows.append(row)
    return np.array(rows)


def r_from_data(model, base_x, pulse_tags, T_s, k_list, spec=None, observable=None,
                svd_threshold=1e-10, data=None, integrator=None):
    """Data-driven r(x, mu_j, tau_j) for each tag, sharing one scale across tags.

    With ``g = w1 . (x - x*)`` the dominant mode's amplitude fixes the scale
    to that of the Laplace-average eigenfunction; otherwise only the common
    positive scale is meaningful. Returns a list of (mu, tau, r).
    """
    if observable is None:
        if spec is None:
            observable = lambda z: z[0]
        else:
            observable = lambda z: float(spec.w1 @ (z - spec.x_star))
    if data is None:
        ref = None if spec is None else spec.x_star
        data = pulse_snapshots(model, base_x, pulse_tags, T_s, k_list, observable, integrator, ref)
    snaps = SnapshotSet(data, T_s, [tuple(t) for t in pulse_tags])
    res = dmd(snaps, svd_threshold)
    l = dominant_mode(res, None if spec is None else spec.lambda1)
    # undo the k_list[0] steps between the pulse end and the first snapshot
    vals = (res.modes[:, l] * res.amplitudes[l] / res.nu[l] ** float(k_list[0])).real
    j = int(np.argmax(np.abs(data[:, -1])))
    if np.sign(vals[j]) != np.sign(data[j, -1]) and data[j, -1] != 0:
        vals = -vals
    return [(float(mu), float(tau), float(v)) for (mu, tau), v in zip(pulse_tags, vals)]
