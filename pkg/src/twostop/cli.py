"""Command-line front end: solve, simulate, compare, and sweep.

The tool reads a single YAML configuration file describing the two-site
problem (catalog names + parameter maps for the inter-arrival law, the catch
law, the reward, and the waiting cost of each site), the grid resolution,
tolerances, and per-command settings.  Unknown keys anywhere in the file are
rejected so typos fail loudly instead of silently picking defaults.

Artifact contract
-----------------
Record-style outputs (``summary``, ``estimate``, ``report``) are always
written as sorted, indented JSON; ``--format csv`` adds a flattened
``key,value`` copy.  Grids, curves, and tables are always CSV.  Figures are
rendered to ``figures/`` beside them.  Every record carries the tool version,
a hash of the full effective configuration, and a hash of just the
problem/grid/tolerance sections (so simulation settings do not invalidate
solver artifacts).  Running the same command twice with the same
configuration and seed reproduces every artifact byte for byte.

Exit codes: 0 success, 2 configuration or model validation failure,
3 solver non-convergence, 4 required artifact missing or stale.  A sweep
with per-point failures finishes the remaining points and exits 1.

Only the standard library is imported at module level; the numerical stack
loads inside the command handlers, after ``--threads`` has had a chance to
cap the BLAS pools via environment variables.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
from pathlib import Path
from typing import Any

from . import __version__

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_MISSING = 4

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS")


class ConfigError(ValueError):
    """The configuration file is malformed or inconsistent."""


class MissingArtifactError(RuntimeError):
    """A command needs an artifact a previous command should have written."""


# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------

_DISTRIBUTIONS = {
    "exponential": (("rate",), ()),
    "weibull": (("shape", "scale"), ()),
    "uniform": (("low", "high"), ()),
    "gamma": (("shape", "scale"), ()),
}
_UTILITIES = {
    "linear": (("slope",), ("cap", "offset")),
    "saturating-exponential": (("level", "rate"), ("offset",)),
    "power-capped": (("coeff", "exponent", "cap"), ("offset",)),
}
_COSTS = {
    "linear": (("rate",), ("offset",)),
    "quadratic": (("rate", "quad"), ("offset",)),
    "power": (("rate", "exponent"), ("offset",)),
}

_DEFAULTS: dict[str, dict[str, Any]] = {
    "grid": {"mass_cap": None, "mass_nodes": 65, "time_nodes": 33,
             "quadrature_nodes": 64},
    "tolerances": {"fixed_point": 1e-6},
    "simulation": {"n": 10000, "seed": 12345, "policy": "solved",
                   "trajectories": 0},
    "compare": {"max_claims": 10, "factors": [0.5, 0.9, 1.1, 2.0]},
    "sweep": {"parameter": None, "values": []},
    "output": {"directory": "out", "format": "csv"},
}

_POLICY_SOURCES = ("solved", "threshold", "baseline")
_FORMATS = ("csv", "json")


def _require_map(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a mapping")
    return value


def _check_keys(mapping: dict, where: str, required, optional=()) -> None:
    unknown = sorted(set(mapping) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"unknown key(s) under {where}: {', '.join(unknown)}")
    missing = sorted(set(required) - set(mapping))
    if missing:
        raise ConfigError(f"missing key(s) under {where}: {', '.join(missing)}")


def _number(value, where: str, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _integer(value, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{where} must be >= {minimum}, got {value}")
    return int(value)


def _catalog_entry(raw, where: str, catalog: dict) -> dict:
    entry = dict(_require_map(raw, where))
    kind = entry.pop("kind", None)
    if kind not in catalog:
        known = ", ".join(sorted(catalog))
        raise ConfigError(f"{where}.kind must be one of: {known} (got {kind!r})")
    required, optional = catalog[kind]
    _check_keys(entry, where, required, optional)
    params = {k: _number(v, f"{where}.{k}") for k, v in entry.items()}
    return {"kind": kind, **params}


def _site_section(raw, where: str) -> dict:
    site = _require_map(raw, where)
    _check_keys(site, where, ("inter_arrival", "catch_size", "utility", "cost"))
    return {
        "inter_arrival": _catalog_entry(site["inter_arrival"],
                                        f"{where}.inter_arrival", _DISTRIBUTIONS),
        "catch_size": _catalog_entry(site["catch_size"],
                                     f"{where}.catch_size", _DISTRIBUTIONS),
        "utility": _catalog_entry(site["utility"], f"{where}.utility", _UTILITIES),
        "cost": _catalog_entry(site["cost"], f"{where}.cost", _COSTS),
    }


def normalize_config(raw) -> dict:
    """Validate a parsed YAML document and merge in the defaults.

    Returns the effective configuration: every section present, every value
    type-checked, unknown keys rejected.  This dict is what gets hashed and
    what ``emit_config`` writes back out.
    """
    top = _require_map(raw, "configuration")
    _check_keys(top, "configuration", ("problem",), tuple(_DEFAULTS))

    problem = _require_map(top["problem"], "problem")
    _check_keys(problem, "problem", ("horizon", "site1", "site2"))
    horizon = _number(problem["horizon"], "problem.horizon")
    if not horizon > 0:
        raise ConfigError("problem.horizon must be positive")
    cfg: dict[str, Any] = {
        "problem": {
            "horizon": horizon,
            "site1": _site_section(problem["site1"], "problem.site1"),
            "site2": _site_section(problem["site2"], "problem.site2"),
        }
    }

    for section, defaults in _DEFAULTS.items():
        given = _require_map(top.get(section, {}), section)
        _check_keys(given, section, (), tuple(defaults))
        merged = {**defaults, **given}
        cfg[section] = merged

    g = cfg["grid"]
    g["mass_cap"] = _number(g["mass_cap"], "grid.mass_cap", allow_none=True)
    for key in ("mass_nodes", "time_nodes", "quadrature_nodes"):
        g[key] = _integer(g[key], f"grid.{key}", minimum=2)

    tol = _number(cfg["tolerances"]["fixed_point"], "tolerances.fixed_point")
    if not tol > 0:
        raise ConfigError("tolerances.fixed_point must be positive")
    cfg["tolerances"]["fixed_point"] = tol

    s = cfg["simulation"]
    s["n"] = _integer(s["n"], "simulation.n", minimum=1)
    s["seed"] = _integer(s["seed"], "simulation.seed")
    s["trajectories"] = _integer(s["trajectories"], "simulation.trajectories")
    if s["policy"] not in _POLICY_SOURCES:
        raise ConfigError("simulation.policy must be one of: "
                          + ", ".join(_POLICY_SOURCES))

    c = cfg["compare"]
    c["max_claims"] = _integer(c["max_claims"], "compare.max_claims", minimum=1)
    if not isinstance(c["factors"], list):
        raise ConfigError("compare.factors must be a list of numbers")
    c["factors"] = [_number(v, "compare.factors[]") for v in c["factors"]]

    w = cfg["sweep"]
    if w["parameter"] is not None and not isinstance(w["parameter"], str):
        raise ConfigError("sweep.parameter must be a string")
    if not isinstance(w["values"], list):
        raise ConfigError("sweep.values must be a list of numbers")
    w["values"] = [_number(v, "sweep.values[]") for v in w["values"]]

    o = cfg["output"]
    if not isinstance(o["directory"], str) or not o["directory"]:
        raise ConfigError("output.directory must be a non-empty string")
    if o["format"] not in _FORMATS:
        raise ConfigError("output.format must be one of: " + ", ".join(_FORMATS))
    return cfg


def load_config(path) -> dict:
    import yaml

    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {p}: {exc}") from exc
    return normalize_config(raw)


def emit_config(cfg: dict) -> str:
    """Serialize an effective configuration; re-parsing it is a no-op."""
    import yaml

    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def config_hash(cfg: dict) -> str:
    """Hash of everything that can change a command's numerical output."""
    slim = {k: v for k, v in cfg.items() if k != "output"}
    blob = json.dumps(slim, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def problem_hash(cfg: dict) -> str:
    """Hash of just the sections a solver artifact depends on."""
    slim = {k: cfg[k] for k in ("problem", "grid", "tolerances")}
    blob = json.dumps(slim, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# model construction from config
# ---------------------------------------------------------------------------

def build_problem(cfg: dict):
    from .model import Cost, Distribution, ProblemSpec, SiteModel, Utility

    def dist(entry):
        params = {k: v for k, v in entry.items() if k != "kind"}
        return getattr(Distribution, entry["kind"])(**params)

    def site(entry):
        u = entry["utility"]
        uc = getattr(Utility, u["kind"].replace("-", "_"))
        c = entry["cost"]
        cc = getattr(Cost, c["kind"])
        return SiteModel(
            inter_arrival=dist(entry["inter_arrival"]),
            catch_size=dist(entry["catch_size"]),
            utility=uc(**{k: v for k, v in u.items() if k != "kind"}),
            cost=cc(**{k: v for k, v in c.items() if k != "kind"}),
        )

    p = cfg["problem"]
    return ProblemSpec(site(p["site1"]), site(p["site2"]), p["horizon"])


def build_grid(cfg: dict):
    from .numerics import GridSpec

    g = cfg["grid"]
    return GridSpec(mass_cap=g["mass_cap"], mass_nodes=g["mass_nodes"],
                    time_nodes=g["time_nodes"],
                    quadrature_nodes=g["quadrature_nodes"])


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_text(path: Path, text: str) -> None:
    path.write_text(text)


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v.replace(",", ";"))
            elif isinstance(v, bool):
                cells.append("true" if v else "false")
            elif isinstance(v, int):
                cells.append(str(v))
            else:
                cells.append(_fmt(v))
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def _flatten(obj, prefix: str = ""):
    rows = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            rows.extend(_flatten(obj[k], f"{prefix}{k}."))
    else:
        rows.append((prefix.rstrip("."), json.dumps(obj)))
    return rows


def _write_record(outdir: Path, name: str, obj: dict, fmt: str) -> None:
    _write_json(outdir / f"{name}.json", obj)
    if fmt == "csv":
        _write_rows(outdir / f"{name}.csv", ("key", "value"), _flatten(obj))


def _figures_dir(outdir: Path) -> Path:
    d = outdir / "figures"
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def _solve_both(spec, cfg):
    from . import stage1, stage2

    tol = cfg["tolerances"]["fixed_point"]
    sol2 = stage2.solve(spec, build_grid(cfg), tol=tol)
    sol1 = stage1.solve(spec, sol2, tol=tol)
    return sol1, sol2


def _boundaries(spec, sol1, sol2):
    import numpy as np

    from .numerics import REMAINING_AXIS
    from .policy import gridded_policy, stop_boundary

    pol = gridded_policy(spec, sol1, sol2)
    grid = sol2.grid
    mass = grid.mass_axis().nodes()
    rem = grid.time_axis(REMAINING_AXIS, spec.horizon).nodes()
    b1 = stop_boundary(pol.stage1, mass, rem)
    b2 = stop_boundary(pol.stage2, mass, rem)
    return pol, rem, b1, b2


def cmd_solve(cfg: dict, outdir: Path, fmt: str) -> int:
    from . import report

    spec = build_problem(cfg)
    sol1, sol2 = _solve_both(spec, cfg)
    pol, rem, b1, b2 = _boundaries(spec, sol1, sol2)

    sol2.value.to_csv(outdir / "stage2_value.csv")
    sol2.delay.to_csv(outdir / "stage2_delay.csv")
    sol1.value.to_csv(outdir / "stage1_value.csv")
    sol1.delay.to_csv(outdir / "stage1_delay.csv")
    curve = sol1.curve
    _write_rows(outdir / "switch_curve.csv",
                ("remaining", "value", "slope"),
                zip(curve.nodes, curve.values, curve.slopes))
    _write_rows(outdir / "boundary_stage1.csv", ("remaining", "stop_mass"),
                zip(rem, b1))
    _write_rows(outdir / "boundary_stage2.csv", ("remaining", "stop_mass"),
                zip(rem, b2))

    grid = sol2.grid
    summary = {
        "tool": "twostop",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "problem_hash": problem_hash(cfg),
        "total_value": sol1.total_value,
        "stage1": {"iterations": sol1.iterations, "residual": sol1.residual,
                   "modulus": sol1.modulus},
        "stage2": {"iterations": sol2.iterations, "residual": sol2.residual,
                   "modulus": sol2.modulus, "collapsed": sol2.collapsed},
        "grid": {"mass_cap": grid.mass_cap, "mass_nodes": grid.mass_nodes,
                 "time_nodes": grid.time_nodes,
                 "quadrature_nodes": grid.quadrature_nodes},
    }
    _write_record(outdir, "summary", summary, fmt)

    figs = _figures_dir(outdir)
    report.value_heatmap(sol2.value, sol2.delay, figs / "stage2_value.png",
                         "continuation value after relocating")
    report.value_heatmap(sol1.value, sol1.delay, figs / "stage1_value.png",
                         "continuation value before relocating")
    report.switch_curve_plot(curve.nodes, curve.values, curve.slopes,
                             figs / "switch_curve.png")
    report.boundary_plot({"before relocation": (rem, b1),
                          "after relocation": (rem, b2)},
                         figs / "boundary.png")
    print(f"total value {sol1.total_value:.8g} "
          f"(stage2: {sol2.iterations} iterations, residual {sol2.residual:.3g}; "
          f"stage1: {sol1.iterations} iterations, residual {sol1.residual:.3g})")
    return EXIT_OK


def _load_solved_policy(spec, cfg: dict, outdir: Path):
    from .numerics import ValueField
    from .policy import DoublePolicy, StagePolicy

    needed = [outdir / "summary.json", outdir / "stage1_delay.csv",
              outdir / "stage2_delay.csv"]
    missing = [str(p) for p in needed if not p.is_file()]
    if missing:
        raise MissingArtifactError(
            "missing solver artifact(s): " + ", ".join(missing)
            + " — run `twostop solve` with this config first")
    stored = json.loads((outdir / "summary.json").read_text())
    if stored.get("problem_hash") != problem_hash(cfg):
        raise MissingArtifactError(
            "solver artifacts in the output directory were produced from a "
            "different problem/grid section — re-run `twostop solve`")
    d1 = ValueField.from_csv(outdir / "stage1_delay.csv")
    d2 = ValueField.from_csv(outdir / "stage2_delay.csv")
    return DoublePolicy(
        StagePolicy("gridded", 1, spec.horizon, site=spec.site1, delay_field=d1),
        StagePolicy("gridded", 2, spec.horizon, site=spec.site2, delay_field=d2))


def cmd_simulate(cfg: dict, outdir: Path, fmt: str) -> int:
    from . import report, sim
    from .model import require_valid
    from .policy import DoublePolicy, stop_now, threshold_policy

    spec = build_problem(cfg)
    require_valid(spec)
    s = cfg["simulation"]
    source = s["policy"]
    if source == "solved":
        pol = _load_solved_policy(spec, cfg, outdir)
    elif source == "threshold":
        pol = DoublePolicy(threshold_policy(spec, 1), threshold_policy(spec, 2))
    else:
        pol = DoublePolicy(stop_now(spec, 1), stop_now(spec, 2))

    n, seed = s["n"], s["seed"]
    payoff = sim._batch(spec, pol, n, seed)["payoff"]
    mean = float(payoff.mean())
    stderr = float(payoff.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    record = {
        "tool": "twostop",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "problem_hash": problem_hash(cfg),
        "policy": source,
        "mean": mean,
        "stderr": stderr,
        "n": n,
        "seed": seed,
    }
    _write_record(outdir, "estimate", record, fmt)
    report.payoff_histogram(payoff, mean, _figures_dir(outdir) / "payoffs.png")

    k = min(s["trajectories"], n)
    if k > 0:
        claims, summary = [], []
        for i, tr in enumerate(sim.rollouts(spec, pol, k, seed)):
            for j, (t, m) in enumerate(zip(tr.site1_times, tr.site1_masses), 1):
                claims.append((i, 1, j, t, m))
            for j, (t, m) in enumerate(zip(tr.site2_times, tr.site2_masses), 1):
                claims.append((i, 2, j, t, m))
            summary.append((i, tr.switch_time, tr.stop_time, tr.mass_at_switch,
                            tr.mass_total, tr.payoff))
        _write_rows(outdir / "trajectories.csv",
                    ("replication", "stage", "claim_index", "time", "mass"),
                    claims)
        _write_rows(outdir / "trajectory_summary.csv",
                    ("replication", "switch_time", "stop_time",
                     "mass_at_switch", "mass_total", "payoff"), summary)
    print(f"policy {source}: mean payoff {mean:.8g} +- {stderr:.3g} "
          f"(n={n}, seed={seed})")
    return EXIT_OK


def cmd_compare(cfg: dict, outdir: Path, fmt: str) -> int:
    import numpy as np

    from . import report, sim, stage2
    from .policy import gridded_policy

    spec = build_problem(cfg)
    sol1, sol2 = _solve_both(spec, cfg)
    pol = gridded_policy(spec, sol1, sol2)

    max_claims = cfg["compare"]["max_claims"]
    truncations = stage2.finite_claim_values(spec, sol2.grid,
                                             claims=max_claims)
    decay = []
    prev = None
    for k, field in enumerate(truncations):
        dist = field.diff_norm(sol2.value)
        ratio = (dist / prev) if prev and prev > 0 else math.nan
        decay.append({"claims": k, "distance": dist, "ratio": ratio})
        prev = dist

    n, seed = cfg["simulation"]["n"], cfg["simulation"]["seed"]
    est = sim.estimate(spec, pol, n, seed)
    probe = sim.dominance_probe(spec, pol, cfg["compare"]["factors"], n, seed)
    winners = [row.factor for row in probe.rows if row.beats_base]

    rep = {
        "tool": "twostop",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "problem_hash": problem_hash(cfg),
        "solver": {"total_value": sol1.total_value,
                   "stage2_residual": sol2.residual,
                   "stage2_modulus": sol2.modulus,
                   "stage2_iterations": sol2.iterations},
        "mc": {"mean": est.mean, "stderr": est.stderr, "n": est.n,
               "seed": est.seed,
               "gap_to_solver": abs(est.mean - sol1.total_value),
               "gap_limit": 3.0 * est.stderr},
        "decay": decay,
        "dominance": {"base_mean": probe.base_mean,
                      "base_stderr": probe.base_stderr,
                      "rows": [{"factor": r.factor, "mean": r.mean,
                                "diff_mean": r.diff_mean,
                                "diff_stderr": r.diff_stderr,
                                "beats_base": r.beats_base}
                               for r in probe.rows],
                      "winners": winners},
    }
    _write_json(outdir / "report.json", rep)
    _write_rows(outdir / "decay.csv", ("claims", "distance", "ratio"),
                [(d["claims"], d["distance"], d["ratio"]) for d in decay])
    _write_rows(outdir / "dominance.csv",
                ("factor", "mean", "diff_mean", "diff_stderr", "beats_base"),
                [(r.factor, r.mean, r.diff_mean, r.diff_stderr, r.beats_base)
                 for r in probe.rows])
    if fmt == "csv":
        flat = {k: v for k, v in rep.items() if k not in ("decay", "dominance")}
        _write_rows(outdir / "report.csv", ("key", "value"), _flatten(flat))

    ks = np.array([d["claims"] for d in decay])
    dists = np.array([d["distance"] for d in decay])
    report.decay_plot(ks, dists, sol2.modulus,
                      _figures_dir(outdir) / "decay.png")
    print(f"solver {sol1.total_value:.8g} vs MC {est.mean:.8g} +- {est.stderr:.3g}; "
          f"{len(winners)} perturbation(s) beat the solved policy")
    return EXIT_OK


def _set_by_path(cfg: dict, dotted: str, value: float) -> None:
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"sweep.parameter {dotted!r} is not addressable")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"sweep.parameter {dotted!r} is not addressable")
    node[leaf] = value


def cmd_sweep(cfg: dict, outdir: Path, fmt: str) -> int:
    import numpy as np

    from . import report

    values = cfg["sweep"]["values"]
    param = cfg["sweep"]["parameter"]
    if values and not param:
        raise ConfigError("sweep.values given without sweep.parameter")
    if param:
        _set_by_path(copy.deepcopy(cfg), param, 0.0)  # addressability check

    header = ("parameter", "value", "total_value", "stage1_stop_mass",
              "stage2_stop_mass", "status", "message")
    rows = []
    good_v, good_total = [], []
    failed = False
    for v in values:
        point = copy.deepcopy(cfg)
        _set_by_path(point, param, v)
        try:
            spec = build_problem(point)
            sol1, sol2 = _solve_both(spec, point)
            _, rem, b1, b2 = _boundaries(spec, sol1, sol2)
            rows.append((param, v, sol1.total_value, b1[-1], b2[-1], "ok", ""))
            good_v.append(v)
            good_total.append(sol1.total_value)
        except Exception as exc:  # per-point failure: record and keep going
            failed = True
            rows.append((param, v, math.nan, math.nan, math.nan, "error",
                         f"{type(exc).__name__}: {exc}"))
    _write_rows(outdir / "sweep.csv", header, rows)
    if good_v:
        report.sweep_plot(np.array(good_v), np.array(good_total), param,
                          _figures_dir(outdir) / "sweep.png")
    n_ok = len(good_v)
    print(f"sweep over {param!r}: {n_ok}/{len(values)} point(s) solved")
    return 1 if failed else EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twostop",
        description="Solve, simulate, and study two-site optimal stopping "
                    "problems with a single relocation.")
    parser.add_argument("--version", action="version",
                        version=f"twostop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("solve", "solve both stages and export the solution"),
                       ("simulate", "Monte Carlo rollout of a policy"),
                       ("compare", "solver vs simulation vs perturbations"),
                       ("sweep", "re-solve along a parameter path")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--out", default=None,
                       help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, default=None,
                       help="simulation seed (overrides simulation.seed)")
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS/OpenMP worker threads")
        p.add_argument("--format", choices=_FORMATS, default=None,
                       help="record format (overrides output.format)")
    return parser


_HANDLERS = {"solve": cmd_solve, "simulate": cmd_simulate,
             "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_VALIDATION
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["simulation"]["seed"] = _integer(args.seed, "--seed")
        if args.out is not None:
            cfg["output"]["directory"] = args.out
        if args.format is not None:
            cfg["output"]["format"] = args.format
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    from .model import ConvergenceError, ValidationError
    from .policy import UnsupportedPolicyError

    outdir = Path(cfg["output"]["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        return _HANDLERS[args.command](cfg, outdir, cfg["output"]["format"])
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValidationError as exc:
        for diag in exc.diagnostics:
            print(f"error: {diag}", file=sys.stderr)
        return EXIT_VALIDATION
    except UnsupportedPolicyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    raise SystemExit(main())
