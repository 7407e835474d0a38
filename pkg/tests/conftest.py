"""Shared fixtures: model instances and cached solver runs.

Solver runs are session-scoped because they are the expensive part of the
suite; tests must treat the returned solution objects as read-only.
"""

from __future__ import annotations

import pytest

from twostop import stage1, stage2
from twostop.model import Cost, Distribution, ProblemSpec, SiteModel, Utility
from twostop.numerics import GridSpec


def _site(arrival: Distribution, catch: Distribution, utility: Utility, cost: Cost) -> SiteModel:
    return SiteModel(inter_arrival=arrival, catch_size=catch, utility=utility, cost=cost)


def _solve_both(spec: ProblemSpec, grid: GridSpec):
    sol2 = stage2.solve(spec, grid)
    sol1 = stage1.solve(spec, sol2, grid)
    return sol2, sol1


# --- problem instances -----------------------------------------------------
#
# All instances use horizon 1.0.  The "lin_*" family has linear utility and
# cost at both sites with exponential arrivals and catches, so stage values
# have simple closed forms: with arrival rate a, mean catch v and cost rate k,
# the per-unit-time surplus is rho = a * v - k and the optimal value of a
# stage with remaining time c is max(rho, 0) * c.


@pytest.fixture(scope="session")
def lin_stay() -> ProblemSpec:
    # rho1 = 2 * 1 - 0.5 = 1.5, rho2 = 1.5 * 0.5 - 0.55 = 0.2 -> stay at site 1.
    site1 = _site(
        Distribution.exponential(2.0),
        Distribution.exponential(1.0),
        Utility.linear(1.0),
        Cost.linear(0.5),
    )
    site2 = _site(
        Distribution.exponential(1.5),
        Distribution.exponential(2.0),
        Utility.linear(1.0),
        Cost.linear(0.55),
    )
    return ProblemSpec(site1=site1, site2=site2, horizon=1.0)


@pytest.fixture(scope="session")
def lin_switch() -> ProblemSpec:
    # rho1 = 0.35 < rho2 = 0.55 -> switching immediately is optimal.
    site1 = _site(
        Distribution.exponential(1.0),
        Distribution.exponential(1.0),
        Utility.linear(1.0),
        Cost.linear(0.65),
    )
    site2 = _site(
        Distribution.exponential(1.0),
        Distribution.exponential(1.0),
        Utility.linear(1.0),
        Cost.linear(0.45),
    )
    return ProblemSpec(site1=site1, site2=site2, horizon=1.0)


@pytest.fixture(scope="session")
def lin_unprofitable() -> ProblemSpec:
    # rho = 0.5 - 0.8 < 0 at both sites -> waiting never pays, value 0.
    def site() -> SiteModel:
        return _site(
            Distribution.exponential(0.5),
            Distribution.exponential(1.0),
            Utility.linear(1.0),
            Cost.linear(0.8),
        )

    return ProblemSpec(site1=site(), site2=site(), horizon=1.0)


@pytest.fixture(scope="session")
def threshold_conc() -> ProblemSpec:
    # Saturating-exponential utility with unit catch rate: the marginal gain
    # of a catch at accumulated mass a is exp(-a) / 2, so with arrival rate 3
    # and cost rate 0.5 the stop threshold sits at a = ln(3).
    def site() -> SiteModel:
        return _site(
            Distribution.exponential(3.0),
            Distribution.exponential(1.0),
            Utility.saturating_exponential(1.0, 1.0),
            Cost.linear(0.5),
        )

    return ProblemSpec(site1=site(), site2=site(), horizon=1.0)


@pytest.fixture(scope="session")
def smooth1() -> ProblemSpec:
    # No closed form: mixed distributions and a strictly convex site-2 cost
    # (exercises the three-axis solver route).
    site1 = _site(
        Distribution.exponential(2.0),
        Distribution.exponential(1.0),
        Utility.saturating_exponential(2.0, 1.0),
        Cost.linear(0.4),
    )
    site2 = _site(
        Distribution.weibull(1.5, 0.5),
        Distribution.gamma(2.0, 0.5),
        Utility.saturating_exponential(2.0, 1.0),
        Cost.quadratic(0.1, 0.3),
    )
    return ProblemSpec(site1=site1, site2=site2, horizon=1.0)


@pytest.fixture(scope="session")
def smooth2() -> ProblemSpec:
    # No closed form: uniform arrivals and catches with capped power utility.
    site1 = _site(
        Distribution.uniform(0.1, 1.8),
        Distribution.uniform(0.5, 1.5),
        Utility.power_capped(0.8, 0.7, 2.0),
        Cost.linear(0.3),
    )
    site2 = _site(
        Distribution.uniform(0.2, 2.5),
        Distribution.uniform(0.0, 2.0),
        Utility.power_capped(1.0, 0.5, 1.8),
        Cost.linear(0.25),
    )
    return ProblemSpec(site1=site1, site2=site2, horizon=1.0)


# --- cached solver runs ----------------------------------------------------


@pytest.fixture(scope="session")
def solved_lin_stay(lin_stay):
    return _solve_both(lin_stay, GridSpec(mass_nodes=65, time_nodes=33))


@pytest.fixture(scope="session")
def solved_lin_switch(lin_switch):
    return _solve_both(lin_switch, GridSpec(mass_nodes=65, time_nodes=33))


@pytest.fixture(scope="session")
def solved_lin_unprofitable(lin_unprofitable):
    return _solve_both(lin_unprofitable, GridSpec(mass_nodes=65, time_nodes=33))


@pytest.fixture(scope="session")
def solved_threshold(threshold_conc):
    return _solve_both(threshold_conc, GridSpec(mass_cap=4.0, mass_nodes=129, time_nodes=33))


@pytest.fixture(scope="session")
def solved_smooth1(smooth1):
    return _solve_both(smooth1, GridSpec(mass_nodes=81, time_nodes=41))


@pytest.fixture(scope="session")
def solved_smooth2(smooth2):
    return _solve_both(smooth2, GridSpec(mass_nodes=129, time_nodes=65))
