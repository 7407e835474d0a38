"""Post-relocation stage: continuation values and optimal stopping delays.

After relocating at time s with mass m, the state is (a, b, c) = (mass
caught since arriving, time since arriving, time left to the horizon).  The
continuation value solves a fixed-point equation: applying one more claim's
worth of lookahead maps a candidate field delta to

    max over r in [0, c] of the cumulative integral of
        f(z) * [ E g(a + X) - g(a) + E delta(a + X, b + z, c - z) ]
        - S(z) * c'(b + z)

and this map is a sup-norm contraction with modulus F(t0) < 1.  Successive
approximation from zero converges geometrically; the maximizing delay of the
final sweep is the optimal extra wait at each state.

For costs with constant derivative the elapsed axis carries no information
and the solver drops it automatically, working on (mass, remaining) alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _sweep
from .model import ProblemSpec, SiteModel, require_valid
from .numerics import (CatchQuadrature, ELAPSED_AXIS, GridSpec, REMAINING_AXIS,
                       ValueField, expected_utility_gain, solve_fixed_point)


class StageTwoOperator:
    """Precomputed sweep machinery for one instance on one grid."""

    def __init__(self, spec: ProblemSpec, grid: GridSpec):
        grid = grid.resolve(spec)
        self.spec = spec
        self.grid = grid
        self.site: SiteModel = spec.site2
        self.collapsed = self.site.cost.has_constant_derivative
        self.mass_axis = grid.mass_axis()
        self.rem_axis = grid.time_axis(REMAINING_AXIS, spec.horizon)
        if self.collapsed:
            self.axes = (self.mass_axis, self.rem_axis)
        else:
            self.axes = (self.mass_axis,
                         grid.time_axis(ELAPSED_AXIS, spec.horizon),
                         self.rem_axis)
        self.ctx = _sweep.build_zcontext(self.site.inter_arrival, spec.horizon,
                                         grid.time_nodes)
        self.quad = CatchQuadrature(self.site.catch_size, grid.quadrature_nodes)
        mass_nodes = self.mass_axis.nodes()
        self.transition = self.quad.mass_transition(mass_nodes)
        self.gain = np.atleast_1d(expected_utility_gain(
            self.site, mass_nodes, grid.quadrature_nodes))
        if self.collapsed:
            self.drift = np.full(grid.time_nodes,
                                 float(self.site.cost.derivative(0.0)))
        else:
            ext = np.arange(2 * grid.time_nodes - 1) * self.ctx.dz
            self.drift = np.asarray(self.site.cost.derivative(ext), dtype=float)

    def zero_field(self) -> ValueField:
        return ValueField.zeros(self.axes)

    def apply(self, field: ValueField) -> tuple[ValueField, ValueField]:
        """One Bellman application; returns (new field, maximizing delays)."""
        if field.axis_names != tuple(ax.name for ax in self.axes):
            raise ValueError("field axes do not match this operator")
        if self.collapsed:
            vals, delay = _sweep.sweep_collapsed(
                field.values, self.transition, self.gain, self.drift, self.ctx)
        else:
            vals, delay = _sweep.sweep_full(
                field.values, self.transition, self.gain, self.drift, self.ctx)
        return ValueField(self.axes, vals), ValueField(self.axes, delay)

    def profile(self, field: ValueField, mass: float, elapsed: float,
                remaining: float) -> tuple[np.ndarray, np.ndarray]:
        """Sampled delay profile r -> phi at one (possibly off-grid) state.

        Sampling runs on the shared z-lattice truncated at the remaining
        horizon, with a final partial panel when the state sits off-grid.
        """
        c = float(remaining)
        if c < 0:
            raise ValueError("remaining horizon must be nonnegative")
        dz = self.ctx.dz
        n_full = min(int(np.floor(c / dz + 1e-12)), len(self.ctx.z) - 1)
        r_nodes = self.ctx.z[:n_full + 1]
        if c > r_nodes[-1] + 1e-12:
            r_nodes = np.append(r_nodes, c)
        dist = self.site.inter_arrival
        gain = expected_utility_gain(self.site, mass, self.grid.quadrature_nodes)
        x, w = self.quad.x, self.quad.w
        ev = field.evaluate_named(
            mass=mass + x[None, :],
            elapsed=elapsed + r_nodes[:, None],
            remaining=c - r_nodes[:, None])
        u = gain + np.asarray(ev) @ w
        v = np.asarray(self.site.cost.derivative(elapsed + r_nodes), dtype=float)
        prof = _sweep.cumulative_profile(
            r_nodes, u, v,
            np.asarray(dist.cdf(r_nodes), dtype=float),
            np.asarray(dist.sf(r_nodes), dtype=float))
        return r_nodes, prof


@dataclass
class Stage2Solution:
    """Fixed point of the post-relocation Bellman operator on a grid."""

    value: ValueField       # continuation value over the state axes
    delay: ValueField       # optimal extra wait from the final sweep
    iterations: int
    residual: float         # sup-norm of the last update
    modulus: float          # contraction modulus F2(t0)
    grid: GridSpec
    collapsed: bool

    def delay_at(self, mass, elapsed, remaining):
        d = self.delay.evaluate_named(mass=mass, elapsed=elapsed,
                                      remaining=remaining)
        return np.clip(d, 0.0, remaining)


def solve(spec: ProblemSpec, grid: GridSpec | None = None, tol: float = 1e-6,
          max_iter: int | None = None) -> Stage2Solution:
    """Iterate the operator from zero until within ``tol`` of its fixed point.

    Stops once the update norm falls below tol * (1 - q) / q, the usual
    geometric-series bound.  Raises ConvergenceError past the iteration cap
    and ValidationError for instances with q >= 1.
    """
    require_valid(spec)
    grid = (grid or GridSpec()).resolve(spec)
    op = StageTwoOperator(spec, grid)
    q = spec.contraction_modulus(2)
    field, delay, iters, resid = solve_fixed_point(
        op.apply, op.zero_field(), q, tol, max_iter)
    return Stage2Solution(field, delay, iters, resid, q, grid, op.collapsed)


def finite_claim_values(spec: ProblemSpec, grid: GridSpec | None = None,
                        claims: int = 1) -> list[ValueField]:
    """Values of the truncated problems that may use at most j more claims.

    Returns [y_0, ..., y_claims]; y_0 is identically zero and each step is
    one operator application, so the list increases pointwise and converges
    geometrically to the fixed point.
    """
    require_valid(spec)
    grid = (grid or GridSpec()).resolve(spec)
    op = StageTwoOperator(spec, grid)
    out = [op.zero_field()]
    for _ in range(claims):
        nxt, _ = op.apply(out[-1])
        out.append(nxt)
    return out


def post_switch_value(spec: ProblemSpec, sol: Stage2Solution, mass_at_switch: float,
                      switch_time: float, mass_total: float, t: float) -> float:
    """Value of holding state (mass_total, t) after relocating at switch_time.

    Stop-now reward plus the gridded continuation value; past the horizon it
    is the hard penalty -C.
    """
    s, t = float(switch_time), float(t)
    if t > spec.horizon:
        return -spec.penalty
    if not 0.0 <= s <= t:
        raise ValueError("need 0 <= switch_time <= t")
    m_s, m_t = float(mass_at_switch), float(mass_total)
    reward = (spec.site1.utility(m_s) - spec.site1.cost(s)
              + spec.site2.utility(m_t - m_s) - spec.site2.cost(t - s))
    cont = sol.value.evaluate_named(mass=m_t - m_s, elapsed=t - s,
                                    remaining=spec.horizon - t)
    return float(reward + cont)
