"""Closed-form results for the optimal effort profile.

Notation: ``phi = c / w``, ``g = sqrt(w c)`` and ``<g>`` its period mean.

* On the support the optimal density is
  ``eta*(t) = g(t) / lam - (ln phi)'(t) / 2 - delta`` and the state is
  ``S = lam * sqrt(phi)``.
* When ``phi`` is smooth and ``eta_bar`` exceeds
  ``eta_bar_m = <g> sup[(delta + (ln phi)' / 2) / g] - delta`` the support is
  the whole period, ``lam = <g> / (eta_bar + delta)`` and the optimal cost is
  ``(int g)^2 / (T (eta_bar + delta))``.
* As ``eta_bar -> 0`` effort concentrates at the maximizers of ``f`` below.
* A downward jump of ``phi`` inside the support carries an atom of mass
  ``ln(phi(t-)/phi(t+)) / 2``; upward jumps are never in the support.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .measure import EffortProfile, SupportSet
from .profiles import JUMP_RTOL

# Gauss-Legendre nodes per grid gap for cumulative integrals of smooth pieces.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
# Samples per piece before the bounded refinement of a sup/inf.
_SCAN = 2001
_XTOL = 1e-10


class SubThresholdError(ValueError):
    """Raised when a full-support formula is requested below its threshold."""


class HypothesisError(ValueError):
    """Raised when data does not satisfy the hypotheses of a closed form."""


def _sqrt_wc(problem):
    return lambda t: np.sqrt(problem.w(t) * problem.c(t))


def _cumulative(func, grid):
    """``int_0^{t_k} func`` at every node; exact gaps, no straddled breakpoints."""
    t0, dt = grid.t[:-1], grid.dt
    x = t0[:, None] + 0.5 * dt[:, None] * (_GL_X[None, :] + 1.0)
    per_gap = 0.5 * dt * np.sum(_GL_W[None, :] * func(x.ravel()).reshape(x.shape), axis=1)
    return np.concatenate([[0.0], np.cumsum(per_gap)])


def _pieces(problem, a, b):
    """Subintervals of ``[a, b]`` that avoid the breakpoints of ``c`` and ``w``."""
    T = problem.period
    cuts = [a]
    for k in range(int(np.floor(a / T)), int(np.floor(b / T)) + 1):
        for s in problem.breakpoints():
            x = s + k * T
            if a < x < b:
                cuts.append(x)
    cuts.append(b)
    cuts.sort()
    return list(zip(cuts[:-1], cuts[1:]))


def _integral(problem, func, a, b):
    """``int_a^b func`` split at breakpoints (``a <= b``)."""
    total = 0.0
    for lo, hi in _pieces(problem, a, b):
        if hi > lo:
            total += integrate.quad(func, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return total


def mean_sqrt_wc(problem):
    """``<sqrt(w c)>`` over one period."""
    return _integral(problem, _sqrt_wc(problem), 0.0, problem.period) / problem.period


def _piece_sup(problem, func):
    """``sup func`` over the period: dense scan of each piece then bounded refinement.

    One-sided endpoint values of every piece are included.
    """
    T = problem.period
    edges = list(problem.breakpoints()) + [T]
    best = -np.inf
    for lo, hi in zip(edges[:-1], edges[1:]):
        s = np.linspace(lo, hi, _SCAN)
        vals = func(s[:-1], "right")
        vals = np.append(vals, func(hi, "left"))
        best = max(best, float(np.max(vals)))
        k = int(np.argmax(vals))
        a, b = s[max(k - 1, 0)], s[min(k + 1, s.size - 1)]
        if b > a:
            res = optimize.minimize_scalar(lambda x: -func(x, "right"), bounds=(a, b),
                                           method="bounded", options={"xatol": _XTOL})
            best = max(best, float(-res.fun))
    return best


@dataclass(frozen=True)
class Discontinuity:
    t: float
    phi_left: float
    phi_right: float

    @property
    def mass(self):
        """Predicted atom mass ``ln(phi(t-)/phi(t+)) / 2`` (negative on upward jumps)."""
        return 0.5 * np.log(self.phi_left / self.phi_right)

    @property
    def s_ratio(self):
        """Predicted state ratio ``S(t+)/S(t-) = sqrt(phi(t+)/phi(t-))``."""
        return float(np.sqrt(self.phi_right / self.phi_left))


@dataclass(frozen=True)
class DiscontinuityReport:
    """Jump points of ``phi = c / w`` split by direction."""

    up: list = field(default_factory=list)
    down: list = field(default_factory=list)

    @property
    def d_plus(self):
        return [d.t for d in self.up]

    @property
    def d_minus(self):
        return [d.t for d in self.down]

    def to_dict(self):
        return {"d_plus": self.d_plus,
                "d_minus": [{"t": d.t, "mass": float(d.mass), "s_ratio": d.s_ratio}
                            for d in self.down]}


def classify_discontinuities(problem):
    """Split the jump points of ``phi`` into upward (D+) and downward (D-) jumps."""
    up, down = [], []
    for s in problem.breakpoints():
        left, right = float(problem.phi(s, "left")), float(problem.phi(s, "right"))
        if abs(left - right) <= JUMP_RTOL * max(abs(left), abs(right)):
            continue
        d = Discontinuity(float(s), left, right)
        (up if right > left else down).append(d)
    return DiscontinuityReport(up, down)


def eta_bar_threshold(problem):
    """Smallest ``eta_bar`` for which the optimal support is the whole period.

    Returns ``inf`` when ``phi`` has an upward jump, since such points are
    never in the support.
    """
    if classify_discontinuities(problem).up:
        return np.inf
    g = _sqrt_wc(problem)

    def ratio(t, side):
        return (problem.delta + 0.5 * problem.dlog_phi(t, side)) / np.sqrt(
            problem.w(t, side) * problem.c(t, side))

    return mean_sqrt_wc(problem) * _piece_sup(problem, ratio) - problem.delta


def _node_side_values(func, grid):
    out = np.empty(len(grid))
    r = grid.right
    out[r] = func(grid.t[r], "right")
    out[~r] = func(grid.t[~r], "left")
    return out


def _smooth_log_phi_increment(problem, a, b):
    """Integral of the absolutely continuous part of ``(ln phi)'`` over ``[a, b]``."""
    total = 0.0
    for lo, hi in _pieces(problem, a, b):
        total += np.log(problem.phi(hi, "left")) - np.log(problem.phi(lo, "right"))
    return float(total)


def _interior_drops(problem, omega, report):
    """D- points lying inside ``omega`` (with the periodic wrap at 0 = T)."""
    T = problem.period
    out = []
    for d in report.down:
        s = d.t % T
        inside = any(a < s < b for a, b in omega.intervals)
        if s == 0.0:
            touches_end = any(b >= T for _, b in omega.intervals)
            touches_start = any(a <= 0.0 for a, _ in omega.intervals)
            inside = inside or (touches_end and touches_start)
        if inside:
            out.append(d)
    return out


def eta_star(problem, omega, grid):
    """Optimal density on a given support and its multiplier ``lam``.

    Parameters
    ----------
    omega : SupportSet
        Support intervals within ``[0, T]``; downward jumps of ``phi`` inside
        an interval carry their predicted atom.
    grid : Grid
        Nodes at which ``eta*`` is returned (zero off ``omega``).

    Returns
    -------
    eta : ndarray
    lam : float
    """
    if not omega.intervals or omega.measure <= 0:
        raise ValueError("support must contain an interval of positive length")
    g = _sqrt_wc(problem)
    num = sum(_integral(problem, g, a, b) for a, b in omega.intervals)
    smooth = sum(_smooth_log_phi_increment(problem, a, b) for a, b in omega.intervals)
    atoms = sum(d.mass for d in _interior_drops(problem, omega, classify_discontinuities(problem)))
    denom = problem.mass + problem.delta * omega.measure + 0.5 * smooth - atoms
    if denom <= 0:
        raise ValueError("support is inconsistent with the effort budget (nonpositive denominator)")
    lam = num / denom

    def density(t, side):
        return (np.sqrt(problem.w(t, side) * problem.c(t, side)) / lam
                - 0.5 * problem.dlog_phi(t, side) - problem.delta)

    eta = _node_side_values(density, grid)
    mask = np.zeros(len(grid), dtype=bool)
    for a, b in omega.intervals:
        mask |= (grid.t >= a) & (grid.t <= b)
    return np.where(mask, eta, 0.0), float(lam)


@dataclass(frozen=True)
class ClosedFormSolution:
    """Explicit optimum in the full-support regime, sampled on a grid."""

    grid: object
    eta_hat: np.ndarray
    S_hat: np.ndarray
    alpha_hat: np.ndarray
    phi_min: float
    lambda_hat: float
    eta_bar_m: float

    @property
    def profile(self):
        return EffortProfile(self.grid, self.alpha_hat)


def closed_form_solution(problem, grid):
    """Full-support optimum: density, state, cumulative effort and cost.

    Raises
    ------
    HypothesisError
        If ``phi`` is discontinuous.
    SubThresholdError
        If ``eta_bar <= eta_bar_m``.
    """
    report = classify_discontinuities(problem)
    if report.up or report.down:
        raise HypothesisError("the full-support closed form needs a continuous c/w")
    eta_m = eta_bar_threshold(problem)
    if problem.eta_bar <= eta_m:
        raise SubThresholdError(
            f"eta_bar = {problem.eta_bar} is not above the full-support threshold {eta_m:.6g}")
    T, delta = problem.period, problem.delta
    g_mean = mean_sqrt_wc(problem)
    lam = g_mean / (problem.eta_bar + delta)
    eta, _ = eta_star(problem, SupportSet([(0.0, T)], []), grid)
    S = lam * np.sqrt(_node_side_values(problem.phi, grid))
    G = _cumulative(_sqrt_wc(problem), grid)
    log_phi = np.log(_node_side_values(problem.phi, grid))
    alpha = G / lam - 0.5 * (log_phi - log_phi[0]) - delta * grid.t
    alpha[0] = 0.0
    alpha[-1] = problem.mass
    alpha = np.maximum.accumulate(alpha)
    return ClosedFormSolution(
        grid=grid, eta_hat=eta, S_hat=S, alpha_hat=alpha,
        phi_min=float((g_mean * T) ** 2 / (T * (problem.eta_bar + delta))),
        lambda_hat=float(lam), eta_bar_m=float(eta_m),
    )


def _f_parts(problem):
    d, T = problem.delta, problem.period
    ce = lambda r: problem.c(r) * np.exp(d * r)
    we = lambda r: problem.w(r) * np.exp(-d * r)
    return ce, we, np.exp(-d * T)


def _f_at(problem, t):
    ce, we, q0 = _f_parts(problem)
    T = problem.period
    return (_integral(problem, ce, 0.0, t) * _integral(problem, we, t, T)
            - q0 * _integral(problem, we, 0.0, t) * _integral(problem, ce, t, T))


def concentration_function(problem, grid):
    """Limit shape of the switching function as ``eta_bar -> 0``.

    ``f(t) = A(t) B(t) - exp(-delta T) C(t) D(t)`` with ``A, D`` the prefix and
    suffix integrals of ``c e^{delta r}`` and ``C, B`` those of
    ``w e^{-delta r}``.

    Returns
    -------
    f : ndarray
        Values at the grid nodes.
    t_max : float
        Maximizer, refined by a bounded scalar search around the best node.
    """
    ce, we, q0 = _f_parts(problem)
    A = _cumulative(ce, grid)
    C = _cumulative(we, grid)
    f = A * (C[-1] - C) - q0 * C * (A[-1] - A)
    k = int(np.argmax(f))
    a, b = grid.t[max(k - 1, 0)], grid.t[min(k + 1, len(grid) - 1)]
    t_max = float(grid.t[k])
    if b > a:
        res = optimize.minimize_scalar(lambda x: -_f_at(problem, x), bounds=(a, b),
                                       method="bounded", options={"xatol": _XTOL})
        if -res.fun >= f[k]:
            t_max = float(res.x)
    return f, t_max


def pure_atom_threshold(problem, t_star):
    """Largest ``eta_bar`` for which a single atom at ``t_star`` is optimal.

    The instance is translated so that ``t_star`` sits at the end of the
    period; the threshold is the infimum over ``s`` in ``(0, T)`` of

        (1/T) ln[(e^{ds} - 1) int_s^T c~ e^{dr} / ((e^{dT} - e^{ds}) int_0^s c~ e^{dr})].

    Raises
    ------
    HypothesisError
        Unless ``w`` is constant and ``c`` is non-decreasing on ``(t_star,
        t_star + T)`` (no upward jump at ``t_star``).
    """
    T, d = problem.period, problem.delta
    ts = float(t_star) % T
    w_probe = problem.w(np.linspace(0.0, T, _SCAN, endpoint=False))
    if np.ptp(w_probe) > 1e-12 * np.max(np.abs(w_probe)) or problem.w.jump_points().size:
        raise HypothesisError("the pure-atom threshold needs a constant weight w")
    if problem.c(ts, "left") < problem.c(ts, "right") * (1 - JUMP_RTOL):
        raise HypothesisError(f"c jumps upward at t* = {ts}")
    # c must not decrease anywhere on (t*, t* + T)
    for s in problem.c.breakpoints:
        if s % T != ts and problem.c(s, "right") < problem.c(s, "left") * (1 - JUMP_RTOL):
            raise HypothesisError(f"c jumps downward at {s}, away from t* = {ts}")
    edges = list(problem.c.breakpoints) + [T]
    for lo, hi in zip(edges[:-1], edges[1:]):
        x = np.linspace(lo, hi, _SCAN)[1:-1]
        slope = problem.c.derivative(x)
        scale = np.max(np.abs(problem.c(x)))
        if np.any(slope < -1e-12 * scale):
            raise HypothesisError(f"c is not non-decreasing on ({lo}, {hi})")

    def c_shift(r):
        return problem.c(np.asarray(r) + ts) * np.exp(d * np.asarray(r))

    def shifted_integral(a, b):
        total = 0.0
        cuts = sorted({a, b} | {float((s - ts) % T) for s in problem.c.breakpoints
                               if a < (s - ts) % T < b})
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += integrate.quad(c_shift, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        return total

    def rhs(s):
        num = np.expm1(d * s) * shifted_integral(s, T)
        den = (np.exp(d * T) - np.exp(d * s)) * shifted_integral(0.0, s)
        return np.log(num / den) / T

    s = np.linspace(0.0, T, 401)[1:-1]
    vals = np.array([rhs(x) for x in s])
    k = int(np.argmin(vals))
    best = float(vals[k])
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, s.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(rhs, bounds=(lo, hi), method="bounded",
                                       options={"xatol": _XTOL})
        best = min(best, float(res.fun))
    return max(best, 0.0) if abs(best) < 1e-12 else best


def analyze(problem, grid):
    """All closed-form quantities that apply to ``problem``, as a JSON-ready dict.

    Entries that do not apply (sub-threshold cost, pure-atom threshold without
    a single downward jump) are ``None``; an infinite threshold is ``None``
    too, with ``full_support_possible`` false.
    """
    report = classify_discontinuities(problem)
    eta_m = eta_bar_threshold(problem)
    _, t_max = concentration_function(problem, grid)
    phi_min = lambda_hat = None
    try:
        sol = closed_form_solution(problem, grid)
        phi_min, lambda_hat = sol.phi_min, sol.lambda_hat
    except (SubThresholdError, HypothesisError):
        pass
    threshold = None
    if len(report.down) == 1:
        try:
            threshold = pure_atom_threshold(problem, report.down[0].t)
        except HypothesisError:
            threshold = None
    out = {
        "eta_bar": problem.eta_bar,
        "eta_bar_m": float(eta_m) if np.isfinite(eta_m) else None,
        "full_support_possible": bool(np.isfinite(eta_m)),
        "phi_min": phi_min,
        "lambda_hat": lambda_hat,
        "t_max": t_max,
        "pure_atom_threshold": threshold,
    }
    out.update(report.to_dict())
    return out
