"""Vectorized Bellman sweeps over candidate stopping delays.

Both stage operators share the same structure: at a state with remaining
horizon c, scan candidate delays r on the z-lattice, accumulating

    integral_0^r  f(z) * [gain + E field(after catch at z)]  -  S(z) * drift(z)  dz

where f, S are the inter-arrival density and survival.  The density-weighted
part is integrated with a product-trapezoid rule (exact cdf increment per
panel, trapezoid on the bracket), which keeps the discrete operator's
contraction modulus at exactly F(t0); the drift part uses a plain trapezoid.
A golden-section pass refines the maximizer around strict interior peaks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Distribution

TIE_TOL = 1e-10
GOLDEN_ITERS = 24
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - np.sqrt(5.0)) / 2.0


@dataclass
class ZContext:
    """Inter-arrival law sampled on the shared z-lattice."""

    dist: Distribution
    z: np.ndarray        # lattice nodes, z[0] = 0
    cdf: np.ndarray
    surv: np.ndarray
    refine: bool = True

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0])


def build_zcontext(dist: Distribution, t0: float, n_nodes: int,
                   refine: bool = True) -> ZContext:
    z = np.linspace(0.0, t0, n_nodes)
    return ZContext(dist, z, np.asarray(dist.cdf(z), dtype=float),
                    np.asarray(dist.sf(z), dtype=float), refine)


def cumulative_profile(r_nodes: np.ndarray, u: np.ndarray, v: np.ndarray,
                       cdf: np.ndarray, surv: np.ndarray) -> np.ndarray:
    """Cumulative delay profile on arbitrary increasing r-nodes.

    ``u`` and ``v`` carry the bracket and drift samples on the trailing axis;
    ``cdf``/``surv`` are the arrival law at those nodes.  The first column of
    the result is exactly zero.
    """
    dF = np.diff(cdf)
    dr = np.diff(r_nodes)
    mid_u = 0.5 * (u[..., :-1] + u[..., 1:])
    sv = surv * v
    mid_sv = 0.5 * (sv[..., :-1] + sv[..., 1:])
    inc = dF * mid_u - dr * mid_sv
    prof = np.zeros(u.shape)
    np.cumsum(inc, axis=-1, out=prof[..., 1:])
    return prof


def optimize_profiles(u_line: np.ndarray, v_line: np.ndarray, ctx: ZContext,
                      k: int) -> tuple[np.ndarray, np.ndarray]:
    """Maximize the delay profile over r in [0, z_k] for a batch of states.

    ``u_line``/``v_line`` have shape (M, k+1): sample l sits at delay z_l.
    Ties within TIE_TOL resolve to the smallest r.  Returns (value, delay).
    """
    z = ctx.z[:k + 1]
    prof = cumulative_profile(z, u_line, v_line, ctx.cdf[:k + 1], ctx.surv[:k + 1])
    val = prof.max(axis=1)
    arg = (prof >= val[:, None] - TIE_TOL).argmax(axis=1)
    r_out = z[arg]

    if ctx.refine and k >= 2:
        left = np.take_along_axis(prof, np.maximum(arg - 1, 0)[:, None], 1)[:, 0]
        right = np.take_along_axis(prof, np.minimum(arg + 1, k)[:, None], 1)[:, 0]
        strict = ((arg >= 1) & (arg <= k - 1)
                  & (val > left + TIE_TOL) & (val > right + TIE_TOL))
        rows = np.nonzero(strict)[0]
        if rows.size:
            rv, rr = _golden_refine(prof[rows], u_line[rows], v_line[rows],
                                    arg[rows], ctx, k)
            better = rv > val[rows]
            val[rows] = np.where(better, rv, val[rows])
            r_out[rows] = np.where(better, rr, r_out[rows])
    return val, r_out


def _profile_at(r, prof_rows, u_rows, v_rows, ctx: ZContext, k: int):
    """Evaluate the piecewise profile between lattice nodes (vectorized)."""
    dz = ctx.dz
    l = np.clip((r / dz).astype(int), 0, k - 1)
    theta = r / dz - l
    take = lambda a, i: np.take_along_axis(a, i[:, None], 1)[:, 0]
    ul, ur = take(u_rows, l), take(u_rows, l + 1)
    vl, vr = take(v_rows, l), take(v_rows, l + 1)
    u_r = ul * (1.0 - theta) + ur * theta
    v_r = vl * (1.0 - theta) + vr * theta
    F_r = np.asarray(ctx.dist.cdf(r), dtype=float)
    S_r = np.asarray(ctx.dist.sf(r), dtype=float)
    base = take(prof_rows, l)
    return (base
            + (F_r - ctx.cdf[l]) * 0.5 * (ul + u_r)
            - (r - l * dz) * 0.5 * (ctx.surv[l] * vl + S_r * v_r))


def _golden_refine(prof_rows, u_rows, v_rows, arg, ctx: ZContext, k: int):
    """Golden-section pass on the bracket around each interior peak."""
    dz = ctx.dz
    lo = (arg - 1) * dz
    hi = (arg + 1) * dz
    best_v = np.take_along_axis(prof_rows, arg[:, None], 1)[:, 0].copy()
    best_r = arg * dz

    def consider(r, f):
        nonlocal best_v, best_r
        gain = f > best_v
        best_v = np.where(gain, f, best_v)
        best_r = np.where(gain, r, best_r)

    x1 = lo + _INVPHI2 * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = _profile_at(x1, prof_rows, u_rows, v_rows, ctx, k)
    f2 = _profile_at(x2, prof_rows, u_rows, v_rows, ctx, k)
    consider(x1, f1)
    consider(x2, f2)
    for _ in range(GOLDEN_ITERS):
        upper = f1 >= f2
        hi = np.where(upper, x2, hi)
        lo = np.where(upper, lo, x1)
        x1 = lo + _INVPHI2 * (hi - lo)
        x2 = lo + _INVPHI * (hi - lo)
        f1 = _profile_at(x1, prof_rows, u_rows, v_rows, ctx, k)
        f2 = _profile_at(x2, prof_rows, u_rows, v_rows, ctx, k)
        consider(x1, f1)
        consider(x2, f2)
    return best_v, best_r


def sweep_collapsed(values: np.ndarray, transition: np.ndarray, gain: np.ndarray,
                    drift_remaining: np.ndarray, ctx: ZContext):
    """One operator application on a (mass, remaining) field.

    ``drift_remaining[k]`` is the deterministic payoff drift when the
    remaining horizon sits at node k.  Returns (new_values, delay).
    """
    n_mass, n_rem = values.shape
    bracket = gain[:, None] + transition @ values
    out = np.zeros_like(values)
    delay = np.zeros_like(values)
    for k in range(1, n_rem):
        u_line = bracket[:, k::-1]
        v_line = np.broadcast_to(drift_remaining[k::-1], (n_mass, k + 1))
        out[:, k], delay[:, k] = optimize_profiles(u_line, v_line, ctx, k)
    return out, delay


def sweep_full(values: np.ndarray, transition: np.ndarray, gain: np.ndarray,
               drift_elapsed_ext: np.ndarray, ctx: ZContext):
    """One operator application on a (mass, elapsed, remaining) field.

    ``drift_elapsed_ext`` samples the drift on the elapsed lattice extended
    to 2*t0, since a sweep started at elapsed b reaches b + z <= 2*t0.
    Field lookups beyond the last elapsed node clamp to it; only states with
    elapsed + remaining > t0 (never visited by admissible trajectories) are
    affected.
    """
    n_mass, n_el, n_rem = values.shape
    bracket = gain[:, None, None] + np.tensordot(transition, values, axes=1)
    out = np.zeros_like(values)
    delay = np.zeros_like(values)
    j = np.arange(n_el)[:, None]
    for k in range(1, n_rem):
        l = np.arange(k + 1)[None, :]
        el_idx = np.minimum(j + l, n_el - 1)
        rem_idx = np.broadcast_to(k - l, el_idx.shape)
        u_line = bracket[:, el_idx, rem_idx]                   # (nA, nB, k+1)
        v_line = np.broadcast_to(drift_elapsed_ext[j + l], u_line.shape)
        val, r = optimize_profiles(u_line.reshape(-1, k + 1),
                                   v_line.reshape(-1, k + 1), ctx, k)
        out[:, :, k] = val.reshape(n_mass, n_el)
        delay[:, :, k] = r.reshape(n_mass, n_el)
    return out, delay
