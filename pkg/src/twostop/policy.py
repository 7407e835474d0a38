"""Stopping policies in delay form.

A stage policy answers one question: given the post-claim state, how much
longer should the clock run if no further claim arrives?  The stopping rule
driven by that answer is the usual delay walk: after claim i compute the
planned extra wait R_i; if the next claim takes longer than R_i to arrive,
stop at T_i + R_i, otherwise absorb the claim and re-plan.  Since every
delay is capped by the remaining horizon, the walk never overshoots t0.

Four kinds are supported: fields of maximizing delays from the grid solver,
the closed-form hazard-vs-marginal-cost threshold rule (exponential
arrivals, concave utility, convex cost), and the two degenerate rules
stop-now / never-stop.  A multiplicative ``scale`` knob perturbs any of them
for dominance probing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .model import ProblemSpec, SiteModel, StateStage1, StateStage2
from .numerics import ValueField, expected_utility_gain
from .stage1 import Stage1Solution
from .stage2 import Stage2Solution

_BISECT_STEPS = 60


class UnsupportedPolicyError(ValueError):
    """The closed-form threshold rule does not cover this instance."""


@dataclass(frozen=True)
class StagePolicy:
    kind: str                      # gridded | threshold | stop-now | never-stop
    stage: int                     # 1 or 2
    horizon: float
    site: Optional[SiteModel] = None
    delay_field: Optional[ValueField] = None
    scale: float = 1.0

    # ------------------------------------------------------------------
    def delay_arrays(self, mass, elapsed, remaining):
        """Planned extra wait for vectors of states, clamped to [0, c]."""
        mass = np.asarray(mass, dtype=float)
        remaining = np.asarray(remaining, dtype=float)
        if self.kind == "stop-now":
            base = np.zeros(np.broadcast_shapes(mass.shape, remaining.shape))
        elif self.kind == "never-stop":
            base = remaining.astype(float, copy=True)
        elif self.kind == "gridded":
            base = np.asarray(self.delay_field.evaluate_named(
                mass=mass, elapsed=elapsed, remaining=remaining), dtype=float)
        elif self.kind == "threshold":
            base = self._threshold_delay(mass, elapsed, remaining)
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        return np.clip(self.scale * base, 0.0, remaining)

    def delay(self, state) -> float:
        """Planned extra wait for a single StateStage1 / StateStage2."""
        if self.stage == 1:
            if not isinstance(state, StateStage1):
                raise TypeError("stage-1 policy expects StateStage1")
            elapsed = self.horizon - state.remaining
        else:
            if not isinstance(state, StateStage2):
                raise TypeError("stage-2 policy expects StateStage2")
            elapsed = state.elapsed
        out = self.delay_arrays(np.asarray(state.mass),
                                np.asarray(elapsed),
                                np.asarray(state.remaining))
        return float(out)

    # ------------------------------------------------------------------
    def _threshold_delay(self, mass, elapsed, remaining):
        """Smallest r with hazard * mean-gain <= c'(time at stop).

        With exponential arrivals the hazard is flat, the mean gain only
        moves at claims, and the marginal cost is nondecreasing, so the rule
        reduces to a first-crossing time found by bisection (exact endpoints
        for flat costs).
        """
        site = self.site
        rate = site.inter_arrival.params[0]
        target = rate * np.asarray(
            expected_utility_gain(site, mass), dtype=float)
        if self.stage == 1:
            # stage clock == absolute clock; cost argument is t0 - c + r
            base_t = self.horizon - np.asarray(remaining, dtype=float)
        else:
            base_t = np.asarray(elapsed, dtype=float)
        c = np.asarray(remaining, dtype=float)
        shape = np.broadcast_shapes(target.shape, base_t.shape, c.shape)
        target = np.broadcast_to(target, shape)
        base_t = np.broadcast_to(base_t, shape)
        c = np.broadcast_to(c, shape)

        cost = site.cost
        lo = np.zeros(shape)
        hi = c.astype(float, copy=True)
        stop_now = target <= np.asarray(cost.derivative(base_t), dtype=float)
        never = target > np.asarray(cost.derivative(base_t + c), dtype=float)
        mid = np.zeros(shape)
        for _ in range(_BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            crossed = target <= np.asarray(cost.derivative(base_t + mid),
                                           dtype=float)
            hi = np.where(crossed, mid, hi)
            lo = np.where(crossed, lo, mid)
        out = np.where(stop_now, 0.0, np.where(never, c, hi))
        return out.reshape(shape)

    # ------------------------------------------------------------------
    def stop_index(self, claim_times, claim_masses, stage_start: float):
        """Walk the delay rule along a realized claim list.

        ``claim_times[0]`` must equal the stage start (the stage-opening
        pseudo-claim, mass 0); masses are per-claim increments.  Returns
        (index of the claim after which the clock stops, stop time).  Claims
        past the horizon are ignored; the stop time never exceeds it.
        """
        times = np.asarray(claim_times, dtype=float)
        masses = np.asarray(claim_masses, dtype=float)
        if times.size == 0:
            raise ValueError("claim list must at least contain the stage start")
        if abs(times[0] - stage_start) > 1e-9:
            raise ValueError("claim_times[0] must equal the stage start")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("claim times must be strictly increasing")
        keep = times <= self.horizon + 1e-12
        times, masses = times[keep], masses[keep]

        mass = 0.0
        for i, t in enumerate(times):
            if i > 0:
                mass += masses[i]
            remaining = self.horizon - t
            if self.stage == 1:
                elapsed = t
            else:
                elapsed = t - stage_start
            r = float(self.delay_arrays(np.asarray(mass), np.asarray(elapsed),
                                        np.asarray(remaining)))
            gap = times[i + 1] - t if i + 1 < times.size else np.inf
            if r < gap:
                return i, float(t + r)
        # unreachable: the last claim always has an infinite next gap
        raise AssertionError("delay walk failed to terminate")


@dataclass(frozen=True)
class DoublePolicy:
    """A relocation rule and a final stopping rule, applied in order."""

    stage1: StagePolicy
    stage2: StagePolicy


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def gridded_policy(spec: ProblemSpec, sol1: Stage1Solution,
                   sol2: Stage2Solution) -> DoublePolicy:
    """Wrap the two solved delay fields into an executable policy."""
    return DoublePolicy(
        StagePolicy("gridded", 1, spec.horizon, site=spec.site1,
                    delay_field=sol1.delay),
        StagePolicy("gridded", 2, spec.horizon, site=spec.site2,
                    delay_field=sol2.delay))


def threshold_policy(spec: ProblemSpec, stage: int) -> StagePolicy:
    """Closed-form first-crossing rule for one stage.

    Valid when that site has exponential inter-arrivals, a concave
    nondecreasing utility, and a convex cost; otherwise raises
    UnsupportedPolicyError.  The stage-1 variant deliberately prices waiting
    by the site-1 marginal cost alone, matching the textbook rule's scope.
    """
    site = spec.site1 if stage == 1 else spec.site2
    if site.inter_arrival.kind != "exponential":
        raise UnsupportedPolicyError(
            f"threshold rule needs exponential inter-arrivals at site {stage}")
    if not site.utility.is_concave:
        raise UnsupportedPolicyError(
            f"threshold rule needs a concave utility at site {stage}")
    if not site.cost.is_convex:
        raise UnsupportedPolicyError(
            f"threshold rule needs a convex cost at site {stage}")
    return StagePolicy("threshold", stage, spec.horizon, site=site)


def stop_now(spec: ProblemSpec, stage: int) -> StagePolicy:
    return StagePolicy("stop-now", stage, spec.horizon)


def never_stop(spec: ProblemSpec, stage: int) -> StagePolicy:
    return StagePolicy("never-stop", stage, spec.horizon)


def scale_policy(policy: DoublePolicy, factor: float) -> DoublePolicy:
    """Multiply both stages' delays by ``factor`` (still clamped to [0, c])."""
    return DoublePolicy(
        replace(policy.stage1, scale=policy.stage1.scale * factor),
        replace(policy.stage2, scale=policy.stage2.scale * factor))


# ---------------------------------------------------------------------------
# boundary extraction
# ---------------------------------------------------------------------------

def stop_boundary(policy: StagePolicy, mass_nodes: np.ndarray,
                  remaining_nodes: np.ndarray, elapsed: float = 0.0,
                  tol: float = 1e-9) -> np.ndarray:
    """Smallest mass at which the policy stops immediately, per horizon node.

    Scans the mass lattice at fixed elapsed time; NaN where the policy keeps
    waiting at every tabulated mass.  This is the stop/continue frontier in
    (mass, remaining)-space, ready for plotting.
    """
    out = np.full(remaining_nodes.shape, np.nan)
    for k, c in enumerate(remaining_nodes):
        if c <= 0:
            out[k] = mass_nodes[0]
            continue
        d = policy.delay_arrays(mass_nodes, np.full_like(mass_nodes, elapsed),
                                np.full_like(mass_nodes, c))
        hits = np.nonzero(d <= tol)[0]
        if hits.size:
            out[k] = mass_nodes[hits[0]]
    return out
