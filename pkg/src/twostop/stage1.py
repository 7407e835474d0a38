"""Pre-relocation stage: when to abandon site 1 and move.

Relocating at time s with site-1 mass m is worth

    u(m, s) = g1(m) - c1(s) + g2(0) - c2(0) + ybar(t0 - s)

where ybar(c) is the post-relocation continuation value started fresh (zero
mass, zero elapsed time) with horizon c.  The relocation timing problem is
then the same single-stop problem as stage 2, with the deterministic drift
c1'(t) augmented by the slope of ybar: waiting at site 1 burns both running
cost and the value of the shrinking post-relocation window.  Since ybar is
gridded, its slope enters through one-sided finite differences.

The stage-1 state is (mass, remaining); the start time is fixed at zero, so
no elapsed axis is needed.  The total value of the double problem is
u(0, 0) + y1(0, t0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _sweep
from .model import ProblemSpec, require_valid
from .numerics import (CatchQuadrature, GridSpec, MASS_AXIS, REMAINING_AXIS,
                       ValueField, expected_utility_gain, solve_fixed_point)
from .stage2 import Stage2Solution


@dataclass
class SwitchCurve:
    """ybar sampled on the remaining-horizon lattice, with one-sided slopes."""

    nodes: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    @classmethod
    def from_solution(cls, sol: Stage2Solution) -> "SwitchCurve":
        # remaining axis is always the last one
        c_nodes = sol.value.axes[-1].nodes()
        vals = np.atleast_1d(sol.value.evaluate_named(
            mass=np.zeros_like(c_nodes), elapsed=np.zeros_like(c_nodes),
            remaining=c_nodes))
        slopes = np.zeros_like(vals)
        if len(c_nodes) > 1:
            dz = c_nodes[1] - c_nodes[0]
            slopes[1:] = np.diff(vals) / dz          # left differences
            slopes[0] = slopes[1]
        return cls(c_nodes, vals, slopes)

    def __call__(self, remaining):
        return np.interp(remaining, self.nodes, self.values)

    def slope_at(self, remaining):
        return np.interp(remaining, self.nodes, self.slopes)


def switch_payoff(spec: ProblemSpec, curve: SwitchCurve, mass: float,
                  s: float):
    """u(m, s): stop-now reward at site 2's doorstep plus the continuation."""
    return (spec.site1.utility(mass) - spec.site1.cost(s)
            + spec.site2.utility(0.0) - spec.site2.cost(0.0)
            + curve(spec.horizon - np.asarray(s, dtype=float)))


class StageOneOperator:
    """Sweep machinery for the relocation-timing problem."""

    def __init__(self, spec: ProblemSpec, curve: SwitchCurve, grid: GridSpec):
        grid = grid.resolve(spec)
        self.spec = spec
        self.grid = grid
        self.site = spec.site1
        self.curve = curve
        self.mass_axis = grid.mass_axis()
        self.rem_axis = grid.time_axis(REMAINING_AXIS, spec.horizon)
        self.axes = (self.mass_axis, self.rem_axis)
        self.ctx = _sweep.build_zcontext(self.site.inter_arrival, spec.horizon,
                                         grid.time_nodes)
        self.quad = CatchQuadrature(self.site.catch_size, grid.quadrature_nodes)
        mass_nodes = self.mass_axis.nodes()
        self.transition = self.quad.mass_transition(mass_nodes)
        self.gain = np.atleast_1d(expected_utility_gain(
            self.site, mass_nodes, grid.quadrature_nodes))
        c_nodes = self.rem_axis.nodes()
        self.drift = (np.asarray(self.site.cost.derivative(spec.horizon - c_nodes),
                                 dtype=float) + curve.slopes)

    def zero_field(self) -> ValueField:
        return ValueField.zeros(self.axes)

    def apply(self, field: ValueField) -> tuple[ValueField, ValueField]:
        vals, delay = _sweep.sweep_collapsed(
            field.values, self.transition, self.gain, self.drift, self.ctx)
        return ValueField(self.axes, vals), ValueField(self.axes, delay)

    def profile(self, field: ValueField, mass: float,
                remaining: float) -> tuple[np.ndarray, np.ndarray]:
        """Sampled delay profile at one state, on the truncated z-lattice."""
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
        ev = field.evaluate_named(mass=mass + x[None, :],
                                  elapsed=None,
                                  remaining=c - r_nodes[:, None])
        u = gain + np.asarray(ev) @ w
        v = (np.asarray(self.site.cost.derivative(
                self.spec.horizon - c + r_nodes), dtype=float)
             + self.curve.slope_at(c - r_nodes))
        prof = _sweep.cumulative_profile(
            r_nodes, u, v,
            np.asarray(dist.cdf(r_nodes), dtype=float),
            np.asarray(dist.sf(r_nodes), dtype=float))
        return r_nodes, prof


@dataclass
class Stage1Solution:
    """Fixed point of the relocation-timing operator, plus the total value."""

    value: ValueField
    delay: ValueField
    curve: SwitchCurve
    total_value: float
    iterations: int
    residual: float
    modulus: float
    grid: GridSpec

    def delay_at(self, mass, remaining):
        d = self.delay.evaluate_named(mass=mass, elapsed=None,
                                      remaining=remaining)
        return np.clip(d, 0.0, remaining)


def solve(spec: ProblemSpec, stage2_sol: Stage2Solution,
          grid: GridSpec | None = None, tol: float = 1e-6,
          max_iter: int | None = None) -> Stage1Solution:
    """Solve the relocation stage on top of a stage-2 solution.

    The grid defaults to the one stage 2 was solved on, which keeps the
    remaining-horizon lattices aligned.
    """
    require_valid(spec)
    grid = (grid or stage2_sol.grid).resolve(spec)
    curve = SwitchCurve.from_solution(stage2_sol)
    op = StageOneOperator(spec, curve, grid)
    q = spec.contraction_modulus(1)
    field, delay, iters, resid = solve_fixed_point(
        op.apply, op.zero_field(), q, tol, max_iter)
    total = float(switch_payoff(spec, curve, 0.0, 0.0)
                  + field.evaluate_named(mass=0.0, elapsed=None,
                                         remaining=spec.horizon))
    return Stage1Solution(field, delay, curve, total, iters, resid, q, grid)


def switch_payoff_via_stage2(spec: ProblemSpec, sol: Stage2Solution,
                             mass: float, s: float) -> float:
    """u(m, s) computed through the post-relocation route (m_total = m, t = s).

    Exposed as a consistency check: relocating and stopping the clock at the
    same instant must be worth exactly the direct switch payoff.
    """
    from .stage2 import post_switch_value
    return post_switch_value(spec, sol, mass, s, mass, s)
