"""Periodic state and cost of a cumulative effort profile.

With ``a(t) = alpha(t) + delta*t`` and ``q = exp(-(eta_bar + delta) T)`` the
periodic state is

    S(t) = exp(-a(t)) / (1 - q) * [ P(t) + q * (P(T) - P(t)) ],
    P(t) = int_0^t c(r) exp(a(r)) dr,

and the cost is ``int_0^T w S``.

Discretization: ``alpha`` is piecewise linear between nodes (the effort is
uniform on each gap) and ``c``, ``w`` are replaced by their linear
interpolants on each gap, using one-sided values at jumps.  The exponentials
of the piecewise-linear ``a`` are then integrated exactly, so the only
quadrature error comes from the interpolation of ``c`` and ``w`` (second
order).  A plain trapezoid rule on ``c exp(a)`` is also second order but its
error scales with ``(a' h)^2``, which is large for big ``eta_bar``.

Every integral is accumulated in log space: ``a`` grows by
``(eta_bar + delta) T`` over a period, so raw exponentials overflow long before
the quantities of interest do.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

# |x| below this uses the Taylor series of the gap moments.
_SERIES_RADIUS = 0.5
_SERIES_TERMS = 24


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _series_coeffs(p, r):
    return np.array([factorial(p) * factorial(r + n) / (factorial(p + r + n + 1) * factorial(n))
                     for n in range(_SERIES_TERMS)])


_COEFFS = {(p, r): _series_coeffs(p, r) for p in range(3) for r in range(3) if p + r in (1, 2)}


def _moments_nonpositive(x):
    """``m_{p,r}(x) = int_0^1 (1-s)^p s^r e^{s x} ds`` for ``x <= -_SERIES_RADIUS``."""
    ex = np.exp(x)
    e0 = np.expm1(x) / x
    e1 = (ex - e0) / x
    e2 = (ex - 2.0 * e1) / x
    return {(1, 0): e0 - e1, (0, 1): e1,
            (2, 0): e0 - 2.0 * e1 + e2, (1, 1): e1 - e2, (0, 2): e2}


def log_moment(p, r, x):
    """``log int_0^1 (1-s)^p s^r exp(s x) ds`` without overflow.

    Positive arguments use ``m_{p,r}(x) = e^x m_{r,p}(-x)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SERIES_RADIUS
    if np.any(small):
        out[small] = np.log(np.polynomial.polynomial.polyval(x[small], _COEFFS[(p, r)]))
    big = ~small
    if np.any(big):
        xb = x[big]
        sign = np.where(xb > 0, 1.0, -1.0)
        neg = -np.abs(xb)
        direct = _moments_nonpositive(neg)
        vals = np.where(xb > 0, direct[(r, p)], direct[(p, r)])
        out[big] = np.log(vals) + np.where(sign > 0, xb, 0.0)
    return out


def _prefix(log_v):
    """``log sum_{j<k} v_j`` for k = 0..n (length n + 1)."""
    out = np.empty(log_v.size + 1)
    out[0] = -np.inf
    out[1:] = np.logaddexp.accumulate(log_v) if log_v.size else []
    return out


def _suffix(log_v):
    """``log sum_{j>=k} v_j`` for k = 0..n (length n + 1)."""
    out = np.empty(log_v.size + 1)
    out[-1] = -np.inf
    out[:-1] = np.logaddexp.accumulate(log_v[::-1])[::-1] if log_v.size else []
    return out


def _log_lincomb(log_a, ca, log_b, cb):
    """``log(ca e^{log_a} + cb e^{log_b})`` for positive coefficients."""
    return np.logaddexp(np.log(ca) + log_a, np.log(cb) + log_b)


@dataclass
class Integrals:
    """Gap integrals and their node-wise prefix/suffix sums.

    ``log_I[j]``/``log_J[j]`` are the logs of the integrals of ``c exp(a)`` and
    ``w exp(-a)`` over gap ``j``; ``log_P``/``log_Ps`` (``log_Q``/``log_Qs``)
    are their prefix/suffix sums at the nodes.
    """

    t: np.ndarray
    dt: np.ndarray
    c: np.ndarray
    w: np.ndarray
    a: np.ndarray
    x: np.ndarray
    log_q: float
    log_1mq: float
    log_I: np.ndarray
    log_J: np.ndarray
    log_P: np.ndarray
    log_Ps: np.ndarray
    log_Q: np.ndarray
    log_Qs: np.ndarray

    @property
    def log_PT(self):
        return self.log_P[-1]

    @property
    def log_QT(self):
        return self.log_Q[-1]

    @property
    def log_S(self):
        return -self.a + np.logaddexp(self.log_P, self.log_q + self.log_Ps) - self.log_1mq

    @property
    def S(self):
        return np.exp(self.log_S)

    @property
    def log_diag(self):
        """log of the within-gap part of the cost, per gap (``c``, ``w`` frozen at gap means)."""
        cb = 0.5 * (self.c[:-1] + self.c[1:])
        wb = 0.5 * (self.w[:-1] + self.w[1:])
        inner = np.logaddexp(log_moment(1, 0, -self.x), self.log_q + log_moment(1, 0, self.x))
        return np.log(cb * wb) + 2.0 * _log(self.dt) + inner


def integrals(problem, profile, c=None, w=None):
    """Gap integrals for ``profile`` (which must be bound to ``problem``)."""
    profile.check_bound(problem)
    grid = profile.grid
    c = grid.values(problem.c) if c is None else c
    w = grid.values(problem.w) if w is None else w
    big_x = (problem.eta_bar + problem.delta) * problem.period
    a = profile.alpha + problem.delta * grid.t
    dt = grid.dt
    x = np.diff(a)
    log_dt = _log(dt)
    log_I = log_dt + a[:-1] + _log_lincomb(log_moment(1, 0, x), c[:-1], log_moment(0, 1, x), c[1:])
    log_J = log_dt - a[:-1] + _log_lincomb(log_moment(1, 0, -x), w[:-1], log_moment(0, 1, -x), w[1:])
    return Integrals(
        t=grid.t, dt=dt, c=c, w=w, a=a, x=x,
        log_q=-big_x, log_1mq=float(np.log(-np.expm1(-big_x))),
        log_I=log_I, log_J=log_J,
        log_P=_prefix(log_I), log_Ps=_suffix(log_I),
        log_Q=_prefix(log_J), log_Qs=_suffix(log_J),
    )


def log_cost(I):
    """log of the discrete cost from precomputed :class:`Integrals`."""
    # sum_l J_l [sum_{j<l} I_j + q sum_{j>l} I_j] + within-gap terms
    before = I.log_P[:-1]
    after = I.log_Ps[1:]
    cross = I.log_J + np.logaddexp(before, I.log_q + after)
    terms = np.concatenate([cross, I.log_diag])
    return float(np.logaddexp.reduce(terms[np.isfinite(terms)]) - I.log_1mq)


@dataclass(frozen=True)
class StateTrajectory:
    """Periodic state sampled at the grid nodes (both sides at duplicated nodes)."""

    grid: object
    S: np.ndarray

    def bound(self, problem):
        """The a-priori bound ``||c||_1 / (1 - exp(-(eta_bar + delta) T))``."""
        t = np.linspace(0.0, problem.period, 20001)
        c_l1 = np.trapezoid(problem.c(t), t)
        return c_l1 / -np.expm1(-(problem.eta_bar + problem.delta) * problem.period)


def periodic_state(problem, profile):
    """Periodic solution of ``S' = c - (eta + delta) S`` driven by ``profile``."""
    return StateTrajectory(profile.grid, integrals(problem, profile).S)


def cost(problem, profile):
    """Weighted period integral ``int_0^T w S``."""
    return float(np.exp(log_cost(integrals(problem, profile))))


def blend(a, b, eps):
    """``(1 - eps) * a + eps * b`` on cumulative values (atoms blend with them)."""
    from .measure import EffortProfile

    if a.grid is not b.grid and not (np.array_equal(a.grid.t, b.grid.t)
                                     and np.array_equal(a.grid.right, b.grid.right)):
        raise ValueError("profiles must share a grid")
    return EffortProfile(a.grid, (1.0 - eps) * a.alpha + eps * b.alpha)


def cost_along_segment(problem, a, b, eps_list):
    """Cost along the straight segment between two profiles."""
    a.check_bound(problem)
    b.check_bound(problem)
    return [cost(problem, blend(a, b, float(e))) for e in eps_list]
