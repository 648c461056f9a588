"""Command-line front end.

Subcommands
-----------
solve, analyze, certify, sweep, reproduce-figure.  Every subcommand writes its
artifacts into the output directory (``--output-dir``, overridden by the
``PEO_OUTPUT_DIR`` environment variable) and exits with 0 on success, 2 when a
solve did not converge and 1 on configuration errors.

Floats are written in shortest round-trip form, so identical inputs give
byte-identical files.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytic, firstorder, forward, measure, profiles, solver
from .solver import SolverConfig

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2

# Three values per figure; fig2_jump is the atom-mass sweep.
FIGURES = {
    "fig1": ("fig1", (2.0, 8.0, 20.0)),
    "fig2": ("fig2_sawtooth", (0.2, 1.0, 6.0)),
    "fig2_jump": ("fig2_sawtooth", tuple(np.geomspace(0.05, 10.0, 25))),
    "fig3": ("fig3_rising_sawtooth", (1.0, 4.0, 10.0)),
    "fig4": ("fig4_square", (1.0, 4.0, 10.0)),
    "fig6": ("fig6_tent", (0.5, 2.0, 6.0)),
}


class ConfigError(ValueError):
    """Bad command line or run configuration."""


@dataclass
class RunConfig:
    """Everything one invocation needs."""

    command: str
    problem: object
    grid_size: int = 2000
    eta_bar: float = None
    eta_list: list = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: Path = Path(".")
    profile_path: Path = None
    figure: str = None


def _clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(doc):
    """Deterministic JSON text (sorted keys, round-trip floats, trailing newline)."""
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def _csv_text(header, rows):
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def run_csv(problem, profile, diag=None):
    """Per-node table with columns t, alpha, eta, S, psi, h."""
    I = forward.integrals(problem, profile)
    diag = firstorder.certificate(problem, profile) if diag is None else diag
    rows = zip(profile.grid.t, profile.alpha, profile.node_density, I.S, diag.psi, diag.h)
    return _csv_text(["t", "alpha", "eta", "S", "psi", "h"], rows)


def _eta_bar_m(problem):
    eta_m = analytic.eta_bar_threshold(problem)
    return float(eta_m) if np.isfinite(eta_m) else None


def _solve_doc(rep):
    doc = rep.to_dict()
    doc["eta_bar_m"] = _eta_bar_m(rep.problem)
    return doc


def _emit_solve(rep, out_dir):
    _write(out_dir / "run.csv", run_csv(rep.problem, rep.profile, rep.certificate))
    _write(out_dir / "report.json", dumps(_solve_doc(rep)))


# -- subcommands ------------------------------------------------------------

def cmd_solve(cfg):
    problem = cfg.problem.with_eta_bar(cfg.eta_bar)
    grid = profiles.build_grid(problem, cfg.grid_size)
    rep = solver.solve(problem, grid, cfg.solver)
    _emit_solve(rep, cfg.output_dir)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_analyze(cfg):
    eta = cfg.eta_bar if cfg.eta_bar is not None else cfg.problem.eta_bar
    problem = cfg.problem.with_eta_bar(eta)
    grid = profiles.build_grid(problem, cfg.grid_size)
    _write(cfg.output_dir / "report.json", dumps(analytic.analyze(problem, grid)))
    return EXIT_OK


def _read_profile(problem, path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read profile {path}: {exc}") from exc
    try:
        return measure.EffortProfile.from_csv(text, problem.period)
    except ValueError as exc:
        raise ConfigError(f"bad profile {path}: {exc}") from exc


def cmd_certify(cfg):
    problem = cfg.problem.with_eta_bar(cfg.eta_bar)
    if cfg.profile_path is None:
        raise ConfigError("certify needs --profile")
    profile = _read_profile(problem, cfg.profile_path)
    if abs(profile.mass - problem.mass) > 1e-6 * max(problem.mass, 1.0):
        raise ConfigError(f"profile mass {profile.mass!r} differs from T*eta_bar = {problem.mass!r}")
    profile = profile.rescaled(problem.mass)
    diag = firstorder.certificate(problem, profile)
    doc = {
        "eta_bar": problem.eta_bar,
        "eta_bar_m": _eta_bar_m(problem),
        "phi": forward.cost(problem, profile),
        "lambda": solver.lambda_estimate(problem, profile)[0],
        "support": measure.support(profile, firstorder.SUPPORT_RTOL * problem.eta_bar).to_dict(),
        "atoms": [{"t": t, "mass": m} for t, m in measure.detect_atoms(profile)],
        **diag.to_dict(),
    }
    _write(cfg.output_dir / "run.csv", run_csv(problem, profile, diag))
    _write(cfg.output_dir / "report.json", dumps(doc))
    return EXIT_OK


def sweep_csv(result):
    points = result.atom_points
    header = ["eta_bar", "phi", "support_measure", "converged", "dominance_violation"]
    header += [f"atom_mass_t={float(d)!r}" for d in points]
    rows = ([r["eta_bar"], r["phi"], r["support_measure"], r["converged"],
             r["dominance_violation"], *r["atom_masses"]] for r in result.rows())
    return _csv_text(header, rows)


def _run_sweep(problem, eta_list, K, solver_cfg, out_dir):
    grid = profiles.build_grid(problem, K)
    result = solver.sweep_eta(problem, grid, eta_list, solver_cfg)
    for i, rep in enumerate(result.reports):
        _emit_solve(rep, out_dir / f"eta_{i:02d}")
    _write(out_dir / "sweep.csv", sweep_csv(result))
    doc = {
        "analysis": analytic.analyze(problem.with_eta_bar(eta_list[0]), grid),
        "runs": [_solve_doc(rep) for rep in result.reports],
        "dominance_violations": result.dominance_violations,
    }
    _write(out_dir / "report.json", dumps(doc))
    return all(rep.converged for rep in result.reports)


def cmd_sweep(cfg):
    ok = _run_sweep(cfg.problem, cfg.eta_list, cfg.grid_size, cfg.solver, cfg.output_dir)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_reproduce(cfg):
    name, etas = FIGURES[cfg.figure]
    problem = profiles.preset(name)
    out = cfg.output_dir / cfg.figure
    ok = _run_sweep(problem, list(etas), cfg.grid_size, cfg.solver, out)
    # uniform-effort comparison runs
    grid = profiles.build_grid(problem, cfg.grid_size)
    for i, eta in enumerate(etas):
        p = problem.with_eta_bar(eta)
        uni = measure.uniform(grid, p.mass)
        rows = zip(grid.t, uni.alpha, uni.node_density, forward.periodic_state(p, uni).S)
        _write(out / f"eta_{i:02d}" / "uniform.csv", _csv_text(["t", "alpha", "eta", "S"], rows))
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


COMMANDS = {
    "solve": cmd_solve,
    "analyze": cmd_analyze,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "reproduce-figure": cmd_reproduce,
}


# -- argument handling --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(
        prog="periodic-effort",
        description="Optimal periodic allocation of effort: solve, analyze and certify.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, eta=True):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--preset", help=f"built-in instance: {', '.join(sorted(profiles.PRESETS))}")
        src.add_argument("--problem", type=Path, help="problem JSON file")
        p.add_argument("--config", type=Path, help="run configuration JSON file")
        p.add_argument("--K", type=int, dest="grid_size", help="number of grid gaps (default 2000)")
        p.add_argument("--output-dir", type=Path, help="artifact directory (default .)")
        if eta:
            p.add_argument("--eta-bar", type=float, help="mean effort per unit time")

    common(sub.add_parser("solve", help="minimize the cost for one eta_bar"))
    common(sub.add_parser("analyze", help="closed-form quantities only"))
    p = sub.add_parser("certify", help="first-order check of a given profile")
    common(p)
    p.add_argument("--profile", type=Path, help="profile CSV with t, alpha columns")
    p = sub.add_parser("sweep", help="warm-started solves over increasing eta_bar")
    common(p, eta=False)
    p.add_argument("--eta-list", help="comma-separated increasing eta_bar values")
    p = sub.add_parser("reproduce-figure", help="data behind one of the worked examples")
    p.add_argument("--figure", required=True, choices=sorted(FIGURES))
    p.add_argument("--config", type=Path, help="run configuration JSON file")
    p.add_argument("--K", type=int, dest="grid_size", help="number of grid gaps (default 2000)")
    p.add_argument("--output-dir", type=Path, help="artifact directory (default .)")
    return parser


def _load_json(path, what):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed {what} JSON {path}: {exc}") from exc


def _problem_from(entry):
    if isinstance(entry, str):
        return profiles.preset(entry)
    if isinstance(entry, dict):
        doc = dict(entry)
        doc.setdefault("eta_bar", 1.0)
        return profiles.ProblemData.from_dict(doc)
    raise ConfigError("problem must be a preset name or an object")


def _positive(x, what):
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {x!r}") from None
    if not (x > 0 and math.isfinite(x)):
        raise ConfigError(f"{what} must be positive and finite, got {x!r}")
    return x


def make_config(args, environ=None):
    """Merge the command line, the optional config file and the environment."""
    environ = os.environ if environ is None else environ
    doc = _load_json(args.config, "config") if getattr(args, "config", None) else {}
    if not isinstance(doc, dict):
        raise ConfigError("config JSON must be an object")
    known = {"problem", "grid_size", "eta_bar", "eta_list", "solver", "output_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        solver_cfg = SolverConfig.from_dict(doc.get("solver", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    cmd = args.command
    problem = None
    try:
        if cmd == "reproduce-figure":
            problem = profiles.preset(FIGURES[args.figure][0])
        elif args.preset:
            problem = profiles.preset(args.preset)
        elif args.problem:
            problem = _problem_from(_load_json(args.problem, "problem"))
        elif "problem" in doc:
            problem = _problem_from(doc["problem"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if problem is None:
        raise ConfigError("no problem given: use --preset, --problem or a 'problem' config entry")

    K = args.grid_size if args.grid_size is not None else doc.get("grid_size", 2000)
    if not isinstance(K, int) or isinstance(K, bool) or K < 2:
        raise ConfigError(f"grid size must be an integer >= 2, got {K!r}")

    eta_bar = getattr(args, "eta_bar", None)
    eta_list = None
    if getattr(args, "eta_list", None):
        try:
            eta_list = [float(s) for s in args.eta_list.split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse --eta-list {args.eta_list!r}") from None
    if eta_bar is None and eta_list is None:
        eta_bar, eta_list = doc.get("eta_bar"), doc.get("eta_list")
    if eta_bar is not None and eta_list is not None:
        raise ConfigError("give exactly one of eta_bar and eta_list")
    if cmd in ("solve", "certify"):
        if eta_list is not None:
            raise ConfigError(f"{cmd} takes a single eta_bar")
        eta_bar = _positive(problem.eta_bar if eta_bar is None else eta_bar, "eta_bar")
    elif cmd == "analyze":
        if eta_list is not None:
            raise ConfigError("analyze takes a single eta_bar")
        if eta_bar is not None:
            eta_bar = _positive(eta_bar, "eta_bar")
    elif cmd == "sweep":
        if eta_list is None:
            raise ConfigError("sweep needs --eta-list or an 'eta_list' config entry")
        if not isinstance(eta_list, list) or not eta_list:
            raise ConfigError("eta_list must be a non-empty list")
        eta_list = [_positive(e, "eta_list entry") for e in eta_list]
        if any(b <= a for a, b in zip(eta_list, eta_list[1:])):
            raise ConfigError("eta_list must be strictly increasing")

    out = environ.get("PEO_OUTPUT_DIR") or args.output_dir or doc.get("output_dir") or "."
    return RunConfig(command=cmd, problem=problem, grid_size=K, eta_bar=eta_bar,
                     eta_list=eta_list, solver=solver_cfg, output_dir=Path(out),
                     profile_path=getattr(args, "profile", None),
                     figure=getattr(args, "figure", None))


def run(cfg):
    """Execute ``cfg`` and return the exit status."""
    return COMMANDS[cfg.command](cfg)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        status = run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (analytic.HypothesisError, analytic.SubThresholdError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(str(cfg.output_dir))
    return status


if __name__ == "__main__":
    sys.exit(main())
