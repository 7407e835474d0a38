"""Two-site sequential search with one relocation and optimal stopping.

Solves the two-stage problem by value iteration on each stage's contraction
operator, exposes the solved delay rules as executable policies, and checks
them by Monte Carlo simulation.  See the README for the model and the CLI.

Submodules are imported on first attribute access so that the command-line
entry point can configure threading environment variables before the
numerical stack loads.
"""

from __future__ import annotations

__version__ = "0.1.0"

_EXPORTS = {
    "model": ["Cost", "Diagnostic", "Distribution", "ProblemSpec", "SiteModel",
              "StateStage1", "StateStage2", "Utility", "ValidationError",
              "ConvergenceError", "pre_switch_payoff", "total_payoff",
              "validate", "require_valid"],
    "numerics": ["Axis", "GridSpec", "ValueField", "CatchQuadrature",
                 "default_mass_cap", "solve_fixed_point"],
    "stage2": ["Stage2Solution", "StageTwoOperator", "finite_claim_values",
               "post_switch_value", "solve_stage2"],
    "stage1": ["Stage1Solution", "StageOneOperator", "SwitchCurve",
               "switch_payoff", "solve_stage1"],
    "policy": ["DoublePolicy", "StagePolicy", "UnsupportedPolicyError",
               "gridded_policy", "threshold_policy", "stop_now", "never_stop",
               "scale_policy", "stop_boundary"],
    "sim": ["MCEstimate", "Trajectory", "DominanceReport", "ProbeRow",
            "rollout", "rollouts", "estimate", "dominance_probe",
            "sample_claims"],
}
# the two stage solvers are both named `solve` in their modules
_ALIASES = {"solve_stage2": ("stage2", "solve"), "solve_stage1": ("stage1", "solve")}

_ATTR_TO_MODULE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_ATTR_TO_MODULE) + ["__version__"]


def __getattr__(name: str):
    import importlib

    if name in _ALIASES:
        mod_name, attr = _ALIASES[name]
        value = getattr(importlib.import_module(f".{mod_name}", __name__), attr)
    elif name in _ATTR_TO_MODULE:
        mod = importlib.import_module(f".{_ATTR_TO_MODULE[name]}", __name__)
        value = getattr(mod, name)
    elif name in _EXPORTS or name in ("cli", "report", "numerics"):
        value = importlib.import_module(f".{name}", __name__)
    else:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    globals()[name] = value  # cache so the lookup runs once
    return value


def __dir__():
    return sorted(set(globals()) | set(__all__))
