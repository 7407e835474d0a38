"""Monte Carlo harness: trajectory sampling, policy rollout, estimation.

All sampling is inverse-cdf on uniform draws.  Replications are laid out as
rows of fixed-order draw blocks, so replication k's randomness is a pure
function of (seed, k): serial and chunked evaluation agree bit-for-bit, and
re-running any policy against the same seed reuses identical claim streams
(common random numbers).  Site 1 and site 2 consume independent child
streams of the seed so a policy change at one stage cannot shift the
other's draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ProblemSpec, SiteModel
from .policy import DoublePolicy, StagePolicy, scale_policy

_MAX_WALK_STEPS = 100_000


@dataclass
class Trajectory:
    """One realized path: claims, relocation, stop, and its payoff."""

    site1_times: np.ndarray     # claim instants at site 1 (stage start excluded)
    site1_masses: np.ndarray
    switch_time: float
    site2_times: np.ndarray
    site2_masses: np.ndarray
    stop_time: float
    mass_at_switch: float
    mass_total: float
    payoff: float


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    n: int
    seed: int


@dataclass
class ProbeRow:
    factor: float
    mean: float
    diff_mean: float            # perturbed minus base, paired
    diff_stderr: float
    beats_base: bool            # diff_mean > 3 * diff_stderr


@dataclass
class DominanceReport:
    base_mean: float
    base_stderr: float
    n: int
    seed: int
    rows: list[ProbeRow] = field(default_factory=list)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_claims(site: SiteModel, start: float, horizon: float,
                  rng: np.random.Generator):
    """Claim times and sizes for one site over (start, horizon].

    Inter-arrival gaps and catch sizes come from inverse-cdf transforms of
    uniform draws, one (gap, size) pair per claim in arrival order.
    """
    times, masses = [], []
    t = float(start)
    while True:
        gap = float(site.inter_arrival.ppf(rng.random()))
        t += gap
        if t > horizon:
            break
        times.append(t)
        masses.append(float(site.catch_size.ppf(rng.random())))
    return np.asarray(times), np.asarray(masses)


class _ClaimBlocks:
    """Row-indexed claim matrices with deterministic block extension."""

    def __init__(self, site: SiteModel, n: int, horizon: float,
                 rng: np.random.Generator):
        self.site = site
        self.rng = rng
        mean_gap = site.inter_arrival.mean()
        width = max(8, int(math.ceil(3.0 * horizon / mean_gap)) + 8)
        self.width = width
        self.gaps = site.inter_arrival.ppf(rng.random((n, width)))
        self.sizes = site.catch_size.ppf(rng.random((n, width)))

    def ensure(self, cols: int) -> None:
        while self.gaps.shape[1] <= cols:
            n = self.gaps.shape[0]
            self.gaps = np.hstack(
                [self.gaps, self.site.inter_arrival.ppf(self.rng.random((n, self.width)))])
            self.sizes = np.hstack(
                [self.sizes, self.site.catch_size.ppf(self.rng.random((n, self.width)))])


def _walk_stage(policy: StagePolicy, blocks: _ClaimBlocks, start_times: np.ndarray,
                horizon: float):
    """Run the delay walk for all replications of one stage in lockstep.

    Returns (stop_times, stage_mass, claims_taken).  Delays are capped by
    the remaining horizon, so no stop time can overshoot it.
    """
    t = start_times.astype(float).copy()
    n = t.size
    a = np.zeros(n)
    stop = np.full(n, np.nan)
    final_mass = np.zeros(n)
    taken = np.zeros(n, dtype=int)
    alive = np.ones(n, dtype=bool)
    j = 0
    while alive.any():
        if j >= _MAX_WALK_STEPS:
            raise RuntimeError("delay walk failed to terminate")
        blocks.ensure(j)
        remaining = horizon - t
        if policy.stage == 1:
            elapsed = t
        else:
            elapsed = t - start_times
        r = np.minimum(policy.delay_arrays(a, elapsed, remaining), remaining)
        gap = blocks.gaps[:, j]
        stopping = alive & (r < gap)
        stop[stopping] = t[stopping] + r[stopping]
        final_mass[stopping] = a[stopping]
        taken[stopping] = j
        alive &= ~stopping
        t = np.where(alive, t + gap, t)
        a = np.where(alive, a + blocks.sizes[:, j], a)
        j += 1
    return stop, final_mass, taken


def _batch(spec: ProblemSpec, policy: DoublePolicy, n: int, seed: int):
    """Simulate n replications; returns payoffs plus per-path summaries."""
    child1, child2 = np.random.SeedSequence(seed).spawn(2)
    blocks1 = _ClaimBlocks(spec.site1, n, spec.horizon,
                           np.random.default_rng(child1))
    switch, mass1, taken1 = _walk_stage(policy.stage1, blocks1,
                                        np.zeros(n), spec.horizon)
    blocks2 = _ClaimBlocks(spec.site2, n, spec.horizon,
                           np.random.default_rng(child2))
    stop, mass2, taken2 = _walk_stage(policy.stage2, blocks2, switch,
                                      spec.horizon)
    total = mass1 + mass2
    # written as (total - mass1) so recomputing the payoff from a stored
    # trajectory reproduces these floats bit-for-bit
    payoff = (np.asarray(spec.site1.utility(mass1)) - np.asarray(spec.site1.cost(switch))
              + np.asarray(spec.site2.utility(total - mass1))
              - np.asarray(spec.site2.cost(stop - switch)))
    return {
        "payoff": payoff, "switch": switch, "stop": stop,
        "mass1": mass1, "mass2": mass2,
        "taken1": taken1, "taken2": taken2,
        "blocks1": blocks1, "blocks2": blocks2,
    }


def _trajectory_from_batch(spec: ProblemSpec, batch: dict, k: int) -> Trajectory:
    t1 = np.cumsum(batch["blocks1"].gaps[k, :batch["taken1"][k]])
    m1 = batch["blocks1"].sizes[k, :batch["taken1"][k]].copy()
    t2 = batch["switch"][k] + np.cumsum(batch["blocks2"].gaps[k, :batch["taken2"][k]])
    m2 = batch["blocks2"].sizes[k, :batch["taken2"][k]].copy()
    return Trajectory(
        site1_times=t1, site1_masses=m1,
        switch_time=float(batch["switch"][k]),
        site2_times=t2, site2_masses=m2,
        stop_time=float(batch["stop"][k]),
        mass_at_switch=float(batch["mass1"][k]),
        mass_total=float(batch["mass1"][k] + batch["mass2"][k]),
        payoff=float(batch["payoff"][k]))


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def rollout(spec: ProblemSpec, policy: DoublePolicy, seed) -> Trajectory:
    """Simulate a single path under the policy; deterministic in the seed."""
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(0, 2 ** 63 - 1))
    batch = _batch(spec, policy, 1, int(seed))
    return _trajectory_from_batch(spec, batch, 0)


def rollouts(spec: ProblemSpec, policy: DoublePolicy, n: int,
             seed: int) -> list[Trajectory]:
    """First n trajectories of the seeded batch, in replication order."""
    batch = _batch(spec, policy, n, int(seed))
    return [_trajectory_from_batch(spec, batch, k) for k in range(n)]


def estimate(spec: ProblemSpec, policy: DoublePolicy, n: int,
             seed: int) -> MCEstimate:
    """Mean payoff under the policy with its standard error."""
    payoff = _batch(spec, policy, int(n), int(seed))["payoff"]
    stderr = float(payoff.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MCEstimate(float(payoff.mean()), stderr, int(n), int(seed))


def dominance_probe(spec: ProblemSpec, policy: DoublePolicy, factors,
                    n: int, seed: int) -> DominanceReport:
    """Compare the policy to delay-scaled perturbations of itself.

    Every policy sees the same claim streams (common random numbers), so the
    per-path payoff differences are paired; a perturbation only counts as
    beating the base when its paired mean gain exceeds three standard errors
    plus a small absolute floor (a perturbation whose paths are numerically
    identical to the base produces last-ulp differences, which must not
    register as a win over a zero standard error).
    """
    base = _batch(spec, policy, int(n), int(seed))["payoff"]
    b_stderr = float(base.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    report = DominanceReport(float(base.mean()), b_stderr, int(n), int(seed))
    floor = 1e-9 * (1.0 + abs(float(base.mean())))
    for f in factors:
        pert = scale_policy(policy, float(f))
        pay = _batch(spec, pert, int(n), int(seed))["payoff"]
        d = pay - base
        d_se = float(d.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        dm = float(d.mean())
        report.rows.append(ProbeRow(float(f), float(pay.mean()), dm, d_se,
                                    bool(dm > 3.0 * d_se + floor)))
    return report
