"""Discretization substrate shared by both stage solvers.

Uniform grids over catch mass and time, multilinear value fields with a
plain-text serialization, Gauss-Legendre quadrature against the catch-size
law, hazard evaluation, and the running (cumulative) integral used by the
delay profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .model import ConvergenceError, Distribution, ProblemSpec, SiteModel

MASS_AXIS = "mass"
ELAPSED_AXIS = "elapsed"
REMAINING_AXIS = "remaining"


# ---------------------------------------------------------------------------
# axes and grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    """One uniform grid axis: ``n`` nodes spanning [lo, hi]."""

    name: str
    lo: float
    hi: float
    n: int

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)


def default_mass_cap(spec: ProblemSpec) -> float:
    """Mass-axis cap A with P(total catch > A) below ~1e-4.

    Treats each site's claim stream as (at worst) a Poisson stream at rate
    1 / E[inter-arrival] and bounds the compound total by its mean plus six
    compound-Poisson standard deviations, padded by a few mean catches.
    Clamping field lookups above A is then harmless: the tail carries less
    than 1e-4 of the probability mass.
    """
    t0 = spec.horizon
    lam = max(1.0 / spec.site1.inter_arrival.mean(),
              1.0 / spec.site2.inter_arrival.mean())
    nu = max(spec.site1.catch_size.mean(), spec.site2.catch_size.mean())
    m2 = max(spec.site1.catch_size.second_moment(),
             spec.site2.catch_size.second_moment())
    cap = lam * t0 * nu + 6.0 * math.sqrt(max(lam * t0 * m2, 1e-12)) + 5.0 * nu
    return max(cap, 1.0)


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution knobs.

    ``mass_cap`` may be None, in which case :func:`default_mass_cap` picks it.
    ``time_nodes`` is shared by the elapsed and remaining axes over [0, t0],
    so the solver's z-sweep lands exactly on grid nodes.
    ``quadrature_nodes`` is the node budget for each catch-size expectation.
    """

    mass_cap: float | None = None
    mass_nodes: int = 65
    time_nodes: int = 33
    quadrature_nodes: int = 64

    def resolve(self, spec: ProblemSpec) -> "GridSpec":
        if self.mass_cap is not None:
            return self
        return replace(self, mass_cap=default_mass_cap(spec))

    def mass_axis(self) -> Axis:
        if self.mass_cap is None:
            raise ValueError("grid not resolved: mass_cap is None")
        return Axis(MASS_AXIS, 0.0, float(self.mass_cap), self.mass_nodes)

    def time_axis(self, name: str, t0: float) -> Axis:
        return Axis(name, 0.0, float(t0), self.time_nodes)


# ---------------------------------------------------------------------------
# value fields
# ---------------------------------------------------------------------------

class ValueField:
    """Values tabulated on a product of uniform axes, queried multilinearly.

    Queries outside an axis range are clamped to it; in particular mass
    lookups above the cap read the boundary slice, which is safe because the
    utilities saturate.  Linear interpolation preserves monotonicity along
    each axis; node values are reproduced to within rounding (bit-exactly on
    axes whose step is a dyadic rational), and a slice that is constant along
    an axis is returned bit-for-bit, which keeps policies such as "wait out
    the whole remaining time" exact under interpolation.
    """

    def __init__(self, axes: Sequence[Axis], values: np.ndarray):
        self.axes = tuple(axes)
        values = np.asarray(values, dtype=float)
        if values.shape != tuple(ax.n for ax in self.axes):
            raise ValueError(f"values shape {values.shape} does not match axes")
        self.values = values

    # -- constructors -------------------------------------------------------
    @classmethod
    def zeros(cls, axes: Sequence[Axis]) -> "ValueField":
        return cls(axes, np.zeros(tuple(ax.n for ax in axes)))

    @classmethod
    def from_function(cls, axes: Sequence[Axis], fn: Callable[..., np.ndarray]) -> "ValueField":
        grids = np.meshgrid(*[ax.nodes() for ax in axes], indexing="ij")
        return cls(axes, np.asarray(fn(*grids), dtype=float))

    # -- basic queries ------------------------------------------------------
    @property
    def axis_names(self) -> tuple[str, ...]:
        return tuple(ax.name for ax in self.axes)

    def norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def diff_norm(self, other: "ValueField") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def evaluate(self, *coords) -> np.ndarray | float:
        """Multilinear interpolation at the given per-axis coordinates."""
        if len(coords) != len(self.axes):
            raise ValueError(f"expected {len(self.axes)} coordinates, got {len(coords)}")
        coords = [np.asarray(c, dtype=float) for c in coords]
        shape = np.broadcast_shapes(*[c.shape for c in coords])
        idx, frac = [], []
        for ax, c in zip(self.axes, coords):
            c = np.broadcast_to(c, shape)
            u = np.clip((c - ax.lo) / ax.step, 0.0, ax.n - 1.0)
            i = np.minimum(u.astype(int), ax.n - 2)
            idx.append(i)
            frac.append(u - i)
        def reduce(d: int, sel: tuple) -> np.ndarray:
            # Lerp anchored at the nearer corner: exact at both corners and
            # on slices where the field does not vary along this axis, so a
            # stored-constant slice round-trips bit-for-bit through queries.
            if d == len(self.axes):
                return self.values[sel]
            lo = reduce(d + 1, sel + (idx[d],))
            hi = reduce(d + 1, sel + (idx[d] + 1,))
            diff = hi - lo
            f = frac[d]
            return np.where(f <= 0.5, lo + f * diff, hi - (1.0 - f) * diff)

        out = np.broadcast_to(reduce(0, ()), shape)
        return float(out) if out.ndim == 0 else out

    def evaluate_named(self, **named) -> np.ndarray | float:
        """Evaluate with coordinates given by axis name; extras are ignored.

        Lets 3-axis and collapsed 2-axis fields be queried uniformly with
        (mass, elapsed, remaining) keywords.
        """
        try:
            coords = [named[ax.name] for ax in self.axes]
        except KeyError as exc:
            raise ValueError(f"missing coordinate for axis {exc}") from None
        return self.evaluate(*coords)

    # -- serialization ------------------------------------------------------
    def to_csv(self, path) -> None:
        """Flat text layout: one axis descriptor line per axis, then the
        row-major values with one line per leading index combination."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"axes,{len(self.axes)}\n")
            for ax in self.axes:
                fh.write(f"axis,{ax.name},{ax.lo:.17g},{ax.hi:.17g},{ax.n}\n")
            fh.write("values\n")
            flat = self.values.reshape(-1, self.axes[-1].n)
            for row in flat:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ValueField":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines or not lines[0].startswith("axes,"):
            raise ValueError(f"{path}: not a value-field file")
        n_axes = int(lines[0].split(",")[1])
        axes = []
        for ln in lines[1:1 + n_axes]:
            _, name, lo, hi, n = ln.split(",")
            axes.append(Axis(name, float(lo), float(hi), int(n)))
        if lines[1 + n_axes] != "values":
            raise ValueError(f"{path}: missing values section")
        data = [np.fromstring(ln, sep=",") for ln in lines[2 + n_axes:]]
        values = np.vstack(data).reshape(tuple(ax.n for ax in axes))
        return cls(axes, values)


# ---------------------------------------------------------------------------
# catch-size quadrature
# ---------------------------------------------------------------------------

_TAIL_EPS = 1e-12


class CatchQuadrature:
    """Gauss-Legendre rule for expectations against a catch-size law.

    The support is cut at the 1 - 1e-12 quantile and split into panels whose
    boundaries are equally spaced in probability, so nodes concentrate where
    the law puts mass.  Weights are renormalized to sum to one, making the
    rule exact for constants.
    """

    def __init__(self, dist: Distribution, n_nodes: int = 64):
        self.dist = dist
        if dist.is_degenerate:
            self.x = np.array([dist.mean()])
            self.w = np.array([1.0])
            return
        per_panel = 16
        n_panels = max(1, int(math.ceil(n_nodes / per_panel)))
        top = 1.0 if math.isfinite(dist.support_upper()) else 1.0 - _TAIL_EPS
        edges = dist.ppf(np.linspace(0.0, top, n_panels + 1))
        gl_x, gl_w = np.polynomial.legendre.leggauss(per_panel)
        xs, ws = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi <= lo:
                continue
            mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
            x = mid + half * gl_x
            xs.append(x)
            ws.append(half * gl_w * dist.pdf(x))
        self.x = np.concatenate(xs)
        w = np.concatenate(ws)
        self.w = w / w.sum()

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.sum(self.w * fn(self.x)))

    def mass_transition(self, mass_nodes: np.ndarray) -> np.ndarray:
        """Row-stochastic matrix T with (T @ v)[i] = E[v(a_i + X)] under
        linear interpolation of v on the mass grid, clamped at the cap."""
        n = mass_nodes.size
        step = mass_nodes[1] - mass_nodes[0]
        T = np.zeros((n, n))
        for xq, wq in zip(self.x, self.w):
            u = np.clip((mass_nodes + xq - mass_nodes[0]) / step, 0.0, n - 1.0)
            i = np.minimum(u.astype(int), n - 2)
            t = u - i
            np.add.at(T, (np.arange(n), i), wq * (1.0 - t))
            np.add.at(T, (np.arange(n), i + 1), wq * t)
        return T


# ---------------------------------------------------------------------------
# expectation primitives
# ---------------------------------------------------------------------------

def expected_utility_gain(site: SiteModel, mass, n_nodes: int = 64):
    """Mean utility increment of one more claim: E[g(a + X) - g(a)].

    Exact for uncapped linear utilities (slope times the mean catch);
    otherwise Gauss-Legendre against the catch density.  Always >= 0 and
    bounded by G - g(a).
    """
    a = np.asarray(mass, dtype=float)
    g = site.utility
    if g.kind == "linear" and not math.isfinite(g.cap):
        out = np.full_like(a, g.slope * site.catch_size.mean())
        return float(out) if out.ndim == 0 else out
    quad = CatchQuadrature(site.catch_size, n_nodes)
    vals = g(a[..., None] + quad.x) @ quad.w - g(a)
    out = np.maximum(vals, 0.0)
    return float(out) if out.ndim == 0 else out


def expect_field_after_catch(site: SiteModel, field: ValueField, mass,
                             elapsed=None, remaining=None, n_nodes: int = 64):
    """E[field(a + X, b, c)] over the catch size X, by quadrature.

    The elapsed coordinate is ignored for fields without that axis.
    """
    quad = CatchQuadrature(site.catch_size, n_nodes)
    a = np.asarray(mass, dtype=float)
    total = 0.0
    for xq, wq in zip(quad.x, quad.w):
        total = total + wq * field.evaluate_named(
            mass=a + xq, elapsed=elapsed, remaining=remaining)
    return total


def hazard(dist: Distribution, z):
    """Hazard rate f(z) / (1 - F(z)); raises when the survival hits zero."""
    sf = np.asarray(dist.sf(z), dtype=float)
    if np.any(sf <= 0.0):
        raise ValueError("hazard undefined: survival function is zero at z")
    out = dist.pdf(z) / sf
    return float(out) if np.ndim(out) == 0 else out


def running_integral(values: np.ndarray, dz: float,
                     survival: np.ndarray | None = None) -> np.ndarray:
    """Cumulative trapezoid of survival-weighted samples on a uniform z-grid.

    Output has the same length as the input and starts at exactly zero.
    """
    values = np.asarray(values, dtype=float)
    if survival is not None:
        values = values * np.asarray(survival, dtype=float)
    if values.shape[-1] == 1:
        return np.zeros_like(values)
    return cumulative_trapezoid(values, dx=dz, initial=0.0, axis=-1)


# ---------------------------------------------------------------------------
# fixed-point driver
# ---------------------------------------------------------------------------

def solve_fixed_point(apply_once: Callable[[ValueField], tuple[ValueField, ValueField]],
                      start: ValueField, modulus: float, tol: float,
                      max_iter: int | None = None):
    """Successive approximation for a sup-norm contraction.

    Iterates ``field <- apply_once(field)`` from ``start`` until the update
    norm drops below ``tol * (1 - q) / q``, which bounds the remaining
    distance to the fixed point by ``tol``.  Returns
    (field, delay, iterations, last_update_norm).
    """
    q = float(modulus)
    if not 0.0 <= q < 1.0:
        raise ValueError(f"contraction modulus must be in [0, 1), got {q}")
    if max_iter is None:
        if q <= 0.0:
            max_iter = 20
        else:
            max_iter = 10 * int(math.ceil(math.log(tol) / math.log(q)))
        max_iter = max(max_iter, 8)
    threshold = tol * (1.0 - q) / q if q > 0.0 else tol
    current = start
    for it in range(1, max_iter + 1):
        nxt, delay = apply_once(current)
        change = nxt.diff_norm(current)
        current = nxt
        if change <= threshold:
            return current, delay, it, change
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (last update {change:.3g}, "
        f"target {threshold:.3g})")
