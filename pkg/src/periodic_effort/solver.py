"""Projected-gradient solver for the optimal effort profile.

The discrete cost is convex in the node values of ``alpha``.  Two feasible-set
geometries are available:

``"isotonic"`` (default)
    Works on the node values with the trapezoid weights ``w_k`` as metric, so
    the steepest-descent direction is the discrete ``h``.  Node ``0`` and node
    ``K`` are the same point of the circle (``alpha_K = alpha_0 + T eta_bar``),
    which removes the constant shift of ``alpha``: the cost ignores it, and
    pinning both ends would turn it into a direction of curvature ``O(h)``.
    The projection is a weighted isotonic regression clipped to a window of
    width ``T eta_bar``.
``"simplex"``
    Works on the increments ``d_j`` with the Euclidean metric and projects onto
    ``{d >= 0, sum d = T eta_bar}``.  Simple, but the metric is badly scaled
    for fine grids.

Steps are Barzilai-Borwein with an Armijo safeguard.  Once the change in cost
is at rounding level the Armijo test uses the trapezoid estimate
``(g_old + g_new) . s / 2`` of the change instead, which is exact up to
``O(|s|^3)`` and immune to cancellation.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator
from sklearn.isotonic import isotonic_regression
from sklearn.utils.validation import check_is_fitted

from . import measure
from .firstorder import certificate, gradient
from .forward import integrals, log_cost
from .measure import EffortProfile, alpha_at, detect_atoms, support
from .profiles import build_grid

logger = logging.getLogger(__name__)

GEOMETRIES = ("isotonic", "simplex")
# Relative cost change below which function values are too noisy for Armijo.
_NOISE_RTOL = 1e-11
_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    Attributes
    ----------
    max_iterations : int
    tolerance : float
        Bound on the scaled gradient-mapping norm; also ``tolerance**2`` bounds
        the relative cost decrease over ``stall_window`` iterations.
    armijo_c, armijo_shrink : float
        Sufficient-decrease constant and backtracking factor, both in (0, 1).
    initial_step : float
        First trial step, relative to the scale of the first gradient.
    restart_profile : EffortProfile, optional
        Starting point; transferred to the solve grid and rescaled to the
        required mass.  Defaults to the uniform profile.
    geometry : {"isotonic", "simplex"}
    warm_start : bool
        Sweeps start each solve from the previous solution.
    n_jobs : int
        Parallel solves in a sweep; only used when ``warm_start`` is off.
    stall_window : int
    """

    max_iterations: int = 50000
    tolerance: float = 1e-8
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    initial_step: float = 1.0
    restart_profile: Optional[EffortProfile] = None
    geometry: str = "isotonic"
    warm_start: bool = True
    n_jobs: int = 1
    stall_window: int = 10

    def __post_init__(self):
        if not isinstance(self.max_iterations, (int, np.integer)) or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        for name in ("tolerance", "initial_step"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("armijo_c", "armijo_shrink"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}, got {self.geometry!r}")
        if self.n_jobs < 1 or self.stall_window < 1:
            raise ValueError("n_jobs and stall_window must be positive")

    @classmethod
    def from_dict(cls, doc):
        known = {f for f in cls.__dataclass_fields__ if f != "restart_profile"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "restart_profile"}


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one solve."""

    problem: object
    profile: EffortProfile
    phi: float
    iterations: int
    gradient_map_norm: float
    converged: bool
    status: str
    certificate: object
    support: object
    atoms: list
    lambda_estimate: float
    lambda_spread: float
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "eta_bar": self.problem.eta_bar,
            "phi": self.phi,
            "iterations": self.iterations,
            "gradient_map_norm": self.gradient_map_norm,
            "converged": self.converged,
            "status": self.status,
            "lambda": self.lambda_estimate,
            "lambda_rel_spread": self.lambda_spread,
            "support": self.support.to_dict(),
            "support_measure": self.support.measure,
            "atoms": [{"t": t, "mass": m} for t, m in self.atoms],
            **self.certificate.to_dict(),
        }


def project_simplex(d, mass):
    """Euclidean projection onto ``{x >= 0, sum x = mass}`` (sort and threshold)."""
    d = np.asarray(d, dtype=float)
    if not mass > 0:
        raise ValueError("mass must be positive")
    u = np.sort(d)[::-1]
    css = np.cumsum(u) - mass
    k = np.arange(1, d.size + 1)
    r = np.flatnonzero(u - css / k > 0)[-1]
    x = np.maximum(d - css[r] / (r + 1), 0.0)
    return x * (mass / x.sum())


def project_periodic_monotone(v, weights, mass):
    """Weighted projection onto ``{v_0 <= v_1 <= ... <= v_{n-1} <= v_0 + mass}``.

    The set is the union over ``s`` of the monotone vectors with values in
    ``[s, s + mass]``; for each ``s`` the projection is the isotonic fit of
    ``v`` clipped to that window, and the best ``s`` solves a convex scalar
    problem.
    """
    v = np.asarray(v, dtype=float)
    fit = isotonic_regression(v, sample_weight=weights)
    if fit[-1] - fit[0] <= mass:
        return fit

    def dist(s):
        return float(np.sum(weights * (np.clip(fit, s, s + mass) - v) ** 2))

    scale = max(1.0, float(np.max(np.abs(fit))))
    res = optimize.minimize_scalar(dist, bounds=(fit[0], fit[-1] - mass), method="bounded",
                                   options={"xatol": 1e-14 * scale})
    return np.clip(fit, res.x, res.x + mass)


class _Objective:
    """Cost and gradient in the coordinates of one geometry."""

    def __init__(self, problem, grid, geometry):
        self.problem, self.grid, self.geometry = problem, grid, geometry
        self.mass = problem.mass
        self.c = grid.values(problem.c)
        self.w = grid.values(problem.w)
        om = grid.weights
        if geometry == "isotonic":
            self.metric = om[:-1].copy()
            self.metric[0] += om[-1]
        else:
            self.metric = np.ones(grid.n_gaps)

    def alpha(self, x):
        if self.geometry == "isotonic":
            a = np.append(x, x[0] + self.mass) - x[0]
        else:
            a = np.concatenate([[0.0], np.cumsum(x)])
        a[-1] = self.mass
        return np.maximum.accumulate(np.maximum(a, 0.0))

    def start(self, profile):
        a = profile.alpha
        return a[:-1].copy() if self.geometry == "isotonic" else np.diff(a)

    def project(self, x):
        if self.geometry == "isotonic":
            p = project_periodic_monotone(x, self.metric, self.mass)
            return p - p[0]
        return project_simplex(x, self.mass)

    def __call__(self, x):
        prof = EffortProfile(self.grid, self.alpha(x))
        I = integrals(self.problem, prof, c=self.c, w=self.w)
        grad = gradient(self.problem, prof, I)
        if self.geometry == "isotonic":
            gx = grad.nodes[:-1].copy()
            gx[0] += grad.nodes[-1]
        else:
            gx = grad.gaps
        return float(np.exp(log_cost(I))), gx

    def norm(self, v):
        return float(np.sqrt(np.sum(self.metric * v * v)))

    def mapping_norm(self, x, g, phi):
        """Gradient-mapping norm at unit step, scaled by the cost level ``phi / sqrt(T)``."""
        step = x - self.project(x - g / self.metric)
        return self.norm(step) * np.sqrt(self.problem.period) / phi


def _initial_profile(problem, grid, cfg):
    if cfg.restart_profile is None:
        return measure.uniform(grid, problem.mass)
    p = cfg.restart_profile
    if p.mass <= 0:
        return measure.uniform(grid, problem.mass)
    alpha = measure.transfer(p, grid)
    alpha[-1] = p.mass
    alpha = np.maximum.accumulate(alpha)
    return EffortProfile(grid, alpha).rescaled(problem.mass)


def lambda_estimate(problem, profile, mask=None):
    """Mean and relative spread of ``S / sqrt(c / w)`` over the support nodes."""
    I = integrals(problem, profile)
    ratio = I.S / np.sqrt(I.c / I.w)
    if mask is None:
        active = measure.support_gaps(profile, 1e-4 * problem.eta_bar) & (profile.grid.dt > 0)
        mask = np.zeros(len(profile.grid), dtype=bool)
        mask[:-1] |= active
        mask[1:] |= active
    if not np.any(mask):
        return float("nan"), float("nan")
    vals = ratio[mask]
    mean = float(np.mean(vals))
    return mean, float(np.std(vals) / mean)


def solve(problem, grid=None, cfg=None, K=2000):
    """Minimize the discrete cost over monotone profiles of mass ``T eta_bar``.

    Parameters
    ----------
    problem : ProblemData
    grid : Grid, optional
        Built with ``build_grid(problem, K)`` when omitted.
    cfg : SolverConfig, optional

    Returns
    -------
    SolveReport
        ``converged`` is false when ``max_iterations`` ran out; the best
        iterate is returned either way.
    """
    cfg = SolverConfig() if cfg is None else cfg
    grid = build_grid(problem, K) if grid is None else grid
    if grid.period != problem.period:
        raise ValueError("grid period differs from the problem period")
    obj = _Objective(problem, grid, cfg.geometry)
    x = obj.project(obj.start(_initial_profile(problem, grid, cfg)))
    phi, g = obj(x)
    step = cfg.initial_step / max(obj.norm(g / obj.metric), 1e-300)
    trace = [phi]
    status, converged = "max_iterations", False
    gm = obj.mapping_norm(x, g, phi)
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        t = step
        for _ in range(_MAX_BACKTRACKS):
            xn = obj.project(x - t * g / obj.metric)
            s = xn - x
            phin, gn = obj(xn)
            slope = float(g @ s)
            change = phin - phi
            if abs(change) < _NOISE_RTOL * abs(phi):
                change = 0.5 * float((g + gn) @ s)
            if change <= cfg.armijo_c * slope:
                break
            t *= cfg.armijo_shrink
        else:
            status = "line_search_failed"
            break
        y = (gn - g) / obj.metric
        sy = float(np.sum(obj.metric * s * y))
        step = obj.norm(s) ** 2 / sy if sy > 0 else t / cfg.armijo_shrink
        x, phi, g = xn, phin, gn
        trace.append(phi)
        gm = obj.mapping_norm(x, g, phi)
        if gm < cfg.tolerance:
            status, converged = "gradient_mapping", True
            break
        w = cfg.stall_window
        if it >= w and trace[-w - 1] - phi <= cfg.tolerance ** 2 * abs(phi):
            status, converged = "stalled", True
            break
        if not np.any(s):
            status, converged = "stationary", True
            break
    profile = EffortProfile(grid, obj.alpha(x))
    phi = float(np.exp(log_cost(integrals(problem, profile))))
    cert = certificate(problem, profile)
    lam, spread = lambda_estimate(problem, profile)
    logger.info("solve eta_bar=%g K=%d: %s after %d iterations, phi=%.12g, mapping norm %.3g",
                problem.eta_bar, grid.n_gaps, status, it, phi, gm)
    return SolveReport(
        problem=problem, profile=profile, phi=phi, iterations=it, gradient_map_norm=gm,
        converged=converged, status=status, certificate=cert,
        support=support(profile, 1e-4 * problem.eta_bar), atoms=detect_atoms(profile),
        lambda_estimate=lam, lambda_spread=spread, trace=trace,
    )


@dataclass(frozen=True)
class SweepResult:
    """Solves along an increasing list of ``eta_bar`` values."""

    reports: list
    dominance_violations: list
    atom_points: list

    def atom_masses(self, report):
        """Detected atom mass at each downward-jump point of ``c / w`` (0 when absent)."""
        prof = report.profile
        T = prof.grid.period
        reach = float(np.max(prof.grid.dt))
        out = []
        for s in self.atom_points:
            near = [m for t, m in report.atoms
                    if min(abs(t - s) % T, T - abs(t - s) % T) <= reach]
            out.append(float(sum(near)))
        return out

    def rows(self):
        for i, rep in enumerate(self.reports):
            yield {
                "eta_bar": rep.problem.eta_bar,
                "phi": rep.phi,
                "support_measure": rep.support.measure,
                "converged": rep.converged,
                "dominance_violation": self.dominance_violations[i - 1] if i else 0.0,
                "atom_masses": self.atom_masses(rep),
            }


def dominance_violation(lower, higher):
    """Largest ``[a1(t) - a1(s)] - [a2(t) - a2(s)]`` over node pairs ``s < t``.

    ``a1`` solves the smaller ``eta_bar``.  A positive value means the smaller
    budget puts more effort on some window than the larger one.
    """
    alpha2 = measure.transfer(higher, lower.grid)
    diff = lower.alpha - alpha2
    running_min = np.minimum.accumulate(diff)
    return float(np.max(diff[1:] - running_min[:-1]))


def sweep_eta(problem, grid, eta_list, cfg=None):
    """Solve for each ``eta_bar`` in ``eta_list`` (strictly increasing).

    With ``cfg.warm_start`` each solve starts from the previous solution,
    rescaled to the new mass.  Otherwise the solves are independent and run
    on ``cfg.n_jobs`` workers.
    """
    from .analytic import classify_discontinuities

    cfg = SolverConfig() if cfg is None else cfg
    etas = [float(e) for e in eta_list]
    if not etas or any(e <= 0 for e in etas) or any(b <= a for a, b in zip(etas, etas[1:])):
        raise ValueError("eta_list must be a non-empty, strictly increasing list of positive values")
    problems = [problem.with_eta_bar(e) for e in etas]
    reports = []
    if cfg.warm_start:
        prev = cfg.restart_profile
        for p in problems:
            rep = solve(p, grid, replace(cfg, restart_profile=prev))
            reports.append(rep)
            prev = rep.profile
    else:
        from joblib import Parallel, delayed

        reports = Parallel(n_jobs=cfg.n_jobs)(delayed(solve)(p, grid, cfg) for p in problems)
    viol = [dominance_violation(a.profile, b.profile) for a, b in zip(reports, reports[1:])]
    drops = classify_discontinuities(problem).d_minus
    return SweepResult(reports=reports, dominance_violations=viol, atom_points=drops)


class EffortOptimizer(BaseEstimator):
    """Estimator-style wrapper around :func:`solve`.

    Parameters
    ----------
    eta_bar : float, optional
        Overrides the value stored in the problem passed to ``fit``.
    K : int
        Number of uniform grid gaps before breakpoints are inserted.
    tolerance, max_iterations, geometry
        Forwarded to :class:`SolverConfig`.

    Attributes
    ----------
    report_ : SolveReport
    profile_ : EffortProfile
    phi_ : float
    """

    def __init__(self, eta_bar=None, K=2000, tolerance=1e-8, max_iterations=50000,
                 geometry="isotonic"):
        self.eta_bar = eta_bar
        self.K = K
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.geometry = geometry

    def fit(self, problem, y=None):
        """Solve ``problem``; ``y`` is ignored."""
        from .profiles import ProblemData

        if not isinstance(problem, ProblemData):
            raise TypeError("fit expects a ProblemData instance")
        if self.eta_bar is not None:
            problem = problem.with_eta_bar(self.eta_bar)
        cfg = SolverConfig(max_iterations=int(self.max_iterations),
                           tolerance=float(self.tolerance), geometry=self.geometry)
        grid = build_grid(problem, int(self.K))
        self.report_ = solve(problem, grid, cfg)
        self.profile_ = self.report_.profile
        self.phi_ = self.report_.phi
        return self

    def predict(self, t, side="right"):
        """Cumulative optimal effort ``alpha(t)`` (periodically extended)."""
        check_is_fitted(self, "report_")
        return alpha_at(self.profile_, np.asarray(t, dtype=float), side)

    def score(self, problem=None, y=None):
        """Negative optimal cost (higher is better)."""
        check_is_fitted(self, "report_")
        return -self.phi_
