"""Problem instances for the two-site sequential catch problem.

A decision maker collects random catches at site 1, may relocate once to
site 2, and must stop for good no later than the horizon ``t0``.  Stopping
at time ``t`` with accumulated masses pays utility of mass minus a running
time cost; overshooting the horizon costs the full penalty ``C``.

This module holds the declarative part of the package: small catalogs of
inter-arrival / catch-size distributions, utility curves and cost curves,
the per-site bundle :class:`SiteModel`, the full :class:`ProblemSpec`, the
exact payoff functions, and :func:`validate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats


class ValidationError(ValueError):
    """Raised when a ProblemSpec fails hard validation.

    Carries the list of :class:`Diagnostic` objects that triggered it.
    """

    def __init__(self, diagnostics: Sequence["Diagnostic"]):
        self.diagnostics = list(diagnostics)
        msg = "; ".join(d.message for d in self.diagnostics if d.level == "error")
        super().__init__(msg or "invalid problem specification")


class ConvergenceError(RuntimeError):
    """Raised when a fixed-point solve exceeds its iteration cap."""


@dataclass(frozen=True)
class Diagnostic:
    level: str      # "error" or "warning"
    code: str       # short machine-readable tag
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"[{self.level}] {self.code}: {self.message}"


# ---------------------------------------------------------------------------
# distribution catalog
# ---------------------------------------------------------------------------

_DIST_KINDS = ("exponential", "weibull", "uniform", "gamma")


@dataclass(frozen=True)
class Distribution:
    """Nonnegative continuous law from a small closed catalog.

    Used both for inter-arrival times and catch sizes.  Parameters by kind:

    * ``exponential`` -- (rate,)
    * ``weibull``     -- (shape, scale)
    * ``uniform``     -- (low, high); ``low == high`` degenerates to a point
      mass, which is acceptable for catch sizes but not for inter-arrivals
    * ``gamma``       -- (shape, scale)
    """

    kind: str
    params: tuple[float, ...]

    # -- constructors -------------------------------------------------------
    @classmethod
    def exponential(cls, rate: float) -> "Distribution":
        return cls("exponential", (float(rate),))

    @classmethod
    def weibull(cls, shape: float, scale: float) -> "Distribution":
        return cls("weibull", (float(shape), float(scale)))

    @classmethod
    def uniform(cls, low: float, high: float) -> "Distribution":
        return cls("uniform", (float(low), float(high)))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "Distribution":
        return cls("gamma", (float(shape), float(scale)))

    # -- scipy plumbing -----------------------------------------------------
    def _frozen(self):
        k, p = self.kind, self.params
        if k == "exponential":
            return stats.expon(scale=1.0 / p[0])
        if k == "weibull":
            return stats.weibull_min(p[0], scale=p[1])
        if k == "uniform":
            return stats.uniform(loc=p[0], scale=p[1] - p[0])
        if k == "gamma":
            return stats.gamma(p[0], scale=p[1])
        raise ValueError(f"unknown distribution kind {k!r}")

    @property
    def is_degenerate(self) -> bool:
        return self.kind == "uniform" and self.params[0] == self.params[1]

    # -- evaluation ---------------------------------------------------------
    def cdf(self, x):
        if self.is_degenerate:
            return np.where(np.asarray(x, dtype=float) >= self.params[0], 1.0, 0.0)
        return self._frozen().cdf(x)

    def sf(self, x):
        if self.is_degenerate:
            return np.where(np.asarray(x, dtype=float) >= self.params[0], 0.0, 1.0)
        return self._frozen().sf(x)

    def pdf(self, x):
        if self.is_degenerate:
            raise ValueError("point-mass distribution has no density")
        return self._frozen().pdf(x)

    def ppf(self, u):
        if self.is_degenerate:
            return np.full_like(np.asarray(u, dtype=float), self.params[0])
        return self._frozen().ppf(u)

    def mean(self) -> float:
        if self.is_degenerate:
            return self.params[0]
        return float(self._frozen().mean())

    def second_moment(self) -> float:
        if self.is_degenerate:
            return self.params[0] ** 2
        fr = self._frozen()
        return float(fr.var() + fr.mean() ** 2)

    def support_upper(self) -> float:
        """Upper end of the support (inf for unbounded laws)."""
        if self.kind == "uniform":
            return self.params[1]
        return math.inf

    def check(self, role: str) -> list[Diagnostic]:
        out = []
        if self.kind not in _DIST_KINDS:
            out.append(Diagnostic("error", "distribution-kind",
                                  f"{role}: unknown distribution kind {self.kind!r}"))
            return out
        if any((not math.isfinite(p)) for p in self.params):
            out.append(Diagnostic("error", "distribution-params",
                                  f"{role}: non-finite distribution parameter"))
            return out
        if self.kind == "uniform":
            lo, hi = self.params
            if lo < 0 or hi < lo:
                out.append(Diagnostic("error", "distribution-params",
                                      f"{role}: uniform needs 0 <= low <= high"))
        elif any(p <= 0 for p in self.params):
            out.append(Diagnostic("error", "distribution-params",
                                  f"{role}: parameters must be positive"))
        return out


# ---------------------------------------------------------------------------
# utility catalog
# ---------------------------------------------------------------------------

_UTIL_KINDS = ("linear", "saturating-exponential", "power-capped")


@dataclass(frozen=True)
class Utility:
    """Nondecreasing utility of accumulated catch mass, g: [0, inf) -> [0, G].

    Kinds:

    * ``linear``                  g(x) = offset + slope * x, optionally capped
    * ``saturating-exponential``  g(x) = offset + level * (1 - exp(-rate * x))
    * ``power-capped``            g(x) = offset + min(coeff * x**exponent, cap)

    ``offset`` (= g(0)) defaults to zero but is carried through every payoff
    formula, matching the general contract where g(0) need not vanish.
    """

    kind: str
    slope: float = 1.0          # linear slope / power coeff / sat-exp level
    shape: float = 1.0          # power exponent / sat-exp rate (unused: linear)
    cap: float = math.inf       # bound on the x-dependent part
    offset: float = 0.0

    @classmethod
    def linear(cls, slope: float, cap: float = math.inf, offset: float = 0.0) -> "Utility":
        return cls("linear", slope=float(slope), cap=float(cap), offset=float(offset))

    @classmethod
    def saturating_exponential(cls, level: float, rate: float, offset: float = 0.0) -> "Utility":
        return cls("saturating-exponential", slope=float(level), shape=float(rate),
                   cap=float(level), offset=float(offset))

    @classmethod
    def power_capped(cls, coeff: float, exponent: float, cap: float, offset: float = 0.0) -> "Utility":
        return cls("power-capped", slope=float(coeff), shape=float(exponent),
                   cap=float(cap), offset=float(offset))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            val = np.minimum(self.slope * x, self.cap)
        elif self.kind == "saturating-exponential":
            val = self.slope * -np.expm1(-self.shape * x)
        elif self.kind == "power-capped":
            with np.errstate(invalid="ignore"):
                val = np.minimum(self.slope * np.power(x, self.shape), self.cap)
        else:
            raise ValueError(f"unknown utility kind {self.kind!r}")
        out = self.offset + val
        return float(out) if out.ndim == 0 else out

    @property
    def bound(self) -> float:
        """Least upper bound G of the utility (may be inf for uncapped linear)."""
        if self.kind == "linear":
            return self.offset + (self.cap if math.isfinite(self.cap) else math.inf)
        return self.offset + self.cap

    @property
    def is_concave(self) -> bool:
        if self.kind == "linear":
            return True
        if self.kind == "saturating-exponential":
            return True
        if self.kind == "power-capped":
            return self.shape <= 1.0
        return False

    @property
    def is_convex(self) -> bool:
        # the cap introduces a concave kink, so capped curves only count as
        # convex below the cap when the exponent demands it
        if self.kind == "linear":
            return not math.isfinite(self.cap)
        if self.kind == "power-capped":
            return self.shape >= 1.0 and not math.isfinite(self.cap)
        return False

    def check(self, role: str) -> list[Diagnostic]:
        out = []
        if self.kind not in _UTIL_KINDS:
            out.append(Diagnostic("error", "utility-kind",
                                  f"{role}: unknown utility kind {self.kind!r}"))
            return out
        if self.slope < 0 or self.shape < 0 or self.cap < 0 or self.offset < 0:
            out.append(Diagnostic("error", "utility-monotone",
                                  f"{role}: utility parameters must be nonnegative "
                                  "(negative values would break monotonicity)"))
        if self.kind != "linear" and not math.isfinite(self.cap):
            out.append(Diagnostic("error", "utility-bound",
                                  f"{role}: utility bound must be finite"))
        return out


# ---------------------------------------------------------------------------
# cost catalog
# ---------------------------------------------------------------------------

_COST_KINDS = ("linear", "quadratic", "power")


@dataclass(frozen=True)
class Cost:
    """Nondecreasing differentiable time cost on [0, t0].

    Kinds:

    * ``linear``     c(t) = offset + rate * t
    * ``quadratic``  c(t) = offset + rate * t + quad * t**2
    * ``power``      c(t) = offset + rate * t**exponent

    The formulas extend smoothly beyond t0, which the solver exploits when a
    grid cell straddles the end of the horizon.
    """

    kind: str
    rate: float = 0.0
    quad: float = 0.0
    exponent: float = 1.0
    offset: float = 0.0

    @classmethod
    def linear(cls, rate: float, offset: float = 0.0) -> "Cost":
        return cls("linear", rate=float(rate), offset=float(offset))

    @classmethod
    def quadratic(cls, rate: float, quad: float, offset: float = 0.0) -> "Cost":
        return cls("quadratic", rate=float(rate), quad=float(quad), offset=float(offset))

    @classmethod
    def power(cls, rate: float, exponent: float, offset: float = 0.0) -> "Cost":
        return cls("power", rate=float(rate), exponent=float(exponent), offset=float(offset))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            val = self.offset + self.rate * t
        elif self.kind == "quadratic":
            val = self.offset + self.rate * t + self.quad * t * t
        elif self.kind == "power":
            with np.errstate(invalid="ignore"):
                val = self.offset + self.rate * np.power(t, self.exponent)
        else:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        return float(val) if val.ndim == 0 else val

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            val = np.full_like(t, self.rate)
        elif self.kind == "quadratic":
            val = self.rate + 2.0 * self.quad * t
        elif self.kind == "power":
            with np.errstate(invalid="ignore", divide="ignore"):
                val = self.rate * self.exponent * np.power(t, self.exponent - 1.0)
        else:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        return float(val) if val.ndim == 0 else val

    @property
    def has_constant_derivative(self) -> bool:
        """True when c' does not depend on t (lets the solver drop an axis)."""
        if self.kind == "linear":
            return True
        if self.kind == "quadratic":
            return self.quad == 0.0
        if self.kind == "power":
            return self.exponent == 1.0
        return False

    def bound_over(self, t0: float) -> float:
        """Max of the cost over [0, t0]; the curve is nondecreasing."""
        return float(self(t0))

    @property
    def is_convex(self) -> bool:
        if self.kind == "linear":
            return True
        if self.kind == "quadratic":
            return self.quad >= 0.0
        if self.kind == "power":
            return self.exponent >= 1.0
        return False

    @property
    def is_concave(self) -> bool:
        if self.kind == "linear":
            return True
        if self.kind == "quadratic":
            return self.quad <= 0.0
        if self.kind == "power":
            return self.exponent <= 1.0
        return False

    def check(self, role: str) -> list[Diagnostic]:
        out = []
        if self.kind not in _COST_KINDS:
            out.append(Diagnostic("error", "cost-kind",
                                  f"{role}: unknown cost kind {self.kind!r}"))
            return out
        if (self.rate < 0 or self.quad < 0 or self.exponent <= 0 or self.offset < 0):
            out.append(Diagnostic("error", "cost-monotone",
                                  f"{role}: cost parameters must be nonnegative "
                                  "with a positive exponent"))
        return out


# ---------------------------------------------------------------------------
# sites and the full problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SiteModel:
    """Everything one site contributes: arrival law, catch law, economics."""

    inter_arrival: Distribution
    catch_size: Distribution
    utility: Utility
    cost: Cost


@dataclass(frozen=True)
class ProblemSpec:
    """A complete instance: two sites and the hard horizon t0."""

    site1: SiteModel
    site2: SiteModel
    horizon: float

    @property
    def penalty(self) -> float:
        """Overshoot penalty C = C1 + C2, the sum of the two cost bounds."""
        return (self.site1.cost.bound_over(self.horizon)
                + self.site2.cost.bound_over(self.horizon))

    def contraction_modulus(self, stage: int) -> float:
        """P(next claim arrives within the horizon) for the given stage's site."""
        site = self.site1 if stage == 1 else self.site2
        return float(site.inter_arrival.cdf(self.horizon))


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateStage1:
    """Pre-relocation state: mass caught so far, time left to the horizon."""

    mass: float
    remaining: float


@dataclass(frozen=True)
class StateStage2:
    """Post-relocation state measured from the relocation instant."""

    mass: float        # mass caught at site 2 since relocating
    elapsed: float     # time since relocating
    remaining: float   # time left to the horizon


# ---------------------------------------------------------------------------
# payoffs
# ---------------------------------------------------------------------------

def pre_switch_payoff(spec: ProblemSpec, mass: float, t: float) -> float:
    """Reward for stopping at site 1: g1(mass) - c1(t).

    Raises ValueError for t outside [0, t0] or negative mass.
    """
    if not 0.0 <= t <= spec.horizon:
        raise ValueError(f"time {t} outside [0, {spec.horizon}]")
    if np.any(np.asarray(mass) < 0):
        raise ValueError("mass must be nonnegative")
    return spec.site1.utility(mass) - spec.site1.cost(t)


def total_payoff(spec: ProblemSpec, switch_time: float, stop_time: float,
                 mass_at_switch: float, mass_total: float) -> float:
    """Realized payoff of a (relocate at s, stop at t) pair.

    * stop after the horizon: -C (full penalty, both cost bounds)
    * stop before relocating (t < s): site-1 reward on the total mass
    * stop after relocating:   g1(m_s) - c1(s) + g2(m_t - m_s) - c2(t - s)
    """
    s, t = float(switch_time), float(stop_time)
    m_s, m_t = float(mass_at_switch), float(mass_total)
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    if m_s < 0 or m_t < m_s:
        raise ValueError("need 0 <= mass_at_switch <= mass_total")
    if t > spec.horizon:
        return -spec.penalty
    if t < s:
        return float(spec.site1.utility(m_t) - spec.site1.cost(t))
    return float(spec.site1.utility(m_s) - spec.site1.cost(s)
                 + spec.site2.utility(m_t - m_s) - spec.site2.cost(t - s))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate(spec: ProblemSpec) -> list[Diagnostic]:
    """Check an instance before solving.

    Errors (fatal): non-positive horizon, malformed catalogs, a degenerate
    inter-arrival law, or a contraction modulus >= 1 at either site (a claim
    would arrive within the horizon with probability one, so the successive
    approximation scheme loses its geometric rate).  Warnings: modulus above
    0.99, meaning contraction is valid but slow.
    """
    out: list[Diagnostic] = []
    if not (math.isfinite(spec.horizon) and spec.horizon > 0):
        out.append(Diagnostic("error", "horizon", "horizon must be positive and finite"))
        return out

    for idx, site in ((1, spec.site1), (2, spec.site2)):
        tag = f"site{idx}"
        out.extend(site.inter_arrival.check(f"{tag}.inter_arrival"))
        out.extend(site.catch_size.check(f"{tag}.catch_size"))
        out.extend(site.utility.check(f"{tag}.utility"))
        out.extend(site.cost.check(f"{tag}.cost"))
        if site.inter_arrival.is_degenerate:
            out.append(Diagnostic("error", "interarrival-degenerate",
                                  f"{tag}: inter-arrival law must have a density"))

    if not any(d.level == "error" for d in out):
        for idx in (1, 2):
            q = spec.contraction_modulus(idx)
            if q >= 1.0 - 1e-12:
                out.append(Diagnostic(
                    "error", "contraction",
                    f"site{idx}: contraction violated, F(t0) = {q:.6g} >= 1"))
            elif q > 0.99:
                out.append(Diagnostic(
                    "warning", "slow-contraction",
                    f"site{idx}: F(t0) = {q:.4f} > 0.99, convergence will be slow"))
    return out


def require_valid(spec: ProblemSpec) -> list[Diagnostic]:
    """Run validate() and raise ValidationError if any error-level finding."""
    diags = validate(spec)
    if any(d.level == "error" for d in diags):
        raise ValidationError(diags)
    return diags
