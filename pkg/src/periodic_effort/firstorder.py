"""First-order optimality objects: h, psi, the discrete gradient and the certificate.

``h[alpha]`` is the density of the directional derivative of the cost,

    d/de cost(alpha + e v) = -int_0^T h(t) v(t) dt,

and ``psi = -int_0^t h``.  A profile is optimal iff ``psi`` attains its maximum
at every point of the profile's support.

Two discrete versions of ``psi`` are kept apart on purpose:

* ``psi`` integrates the sampled ``h`` with the trapezoid rule.  It is a
  second-order approximation of the continuum function and is what the
  identity check uses.
* ``psi_gap`` is minus the exact gradient of the *discrete* cost with respect
  to each gap increment.  The solver's stationarity condition is stated in
  terms of it, so the certificate uses it.
"""

from dataclasses import dataclass

import numpy as np

from .forward import integrals, log_moment
from .measure import support_gaps

# Default support threshold relative to eta_bar.
SUPPORT_RTOL = 1e-4


def _exp(x):
    return np.exp(x)


def h_function(problem, profile, I=None):
    """Sampled ``h[alpha]`` at every node (one value per side at duplicated nodes)."""
    I = integrals(problem, profile) if I is None else I
    log_E = np.log(I.c) + I.a
    # c e^a int K(r, t) w e^{-a} dr = c e^a [q Q(t) + Qs(t)] / (1 - q)
    second = _exp(log_E + np.logaddexp(I.log_q + I.log_Q, I.log_Qs) - I.log_1mq)
    return I.w * I.S - second


def psi_function(problem, profile, I=None):
    """``psi = -int_0^t h`` by the trapezoid rule; ``psi[0] == 0``."""
    I = integrals(problem, profile) if I is None else I
    h = h_function(problem, profile, I)
    out = np.zeros(h.size)
    out[1:] = -np.cumsum(0.5 * I.dt * (h[:-1] + h[1:]))
    return out


def psi_product_form(problem, profile, I=None):
    """``psi`` from the product formula in the prefix/suffix integrals.

    ``psi(t) = [P(t) Qs(t) - q Q(t) Ps(t)] / (1 - q)``.  It vanishes exactly at
    both ends of the period.
    """
    I = integrals(problem, profile) if I is None else I
    first = _exp(I.log_P + I.log_Qs - I.log_1mq)
    second = _exp(I.log_q + I.log_Q + I.log_Ps - I.log_1mq)
    return first - second


@dataclass(frozen=True)
class Gradient:
    """Exact gradient of the discrete cost.

    Attributes
    ----------
    nodes : ndarray
        ``d cost / d alpha_k`` with ``q`` held at its constrained value.
    gaps : ndarray
        ``d cost / d d_j`` for the increments ``d_j = alpha_j - alpha_{j-1}``
        (suffix sums of ``nodes``).
    h : ndarray
        ``-nodes / weights``; the discrete counterpart of ``h``.
    """

    nodes: np.ndarray
    gaps: np.ndarray
    h: np.ndarray


def gradient(problem, profile, I=None):
    """Exact gradient of the discrete cost with respect to node values and increments.

    The cost is ``sum_l J_l (P_l + q Ps_{l+1}) / (1 - q)`` plus within-gap
    terms, where ``I_j``, ``J_j`` are the gap integrals of ``c e^a`` and
    ``w e^{-a}``.  Each gap integral depends on its two end values of ``a``
    through the moments ``int (1-s)^p s^r e^{s x} ds`` of the gap.  ``q`` is
    held fixed, as the end values of ``alpha`` are.
    """
    I = integrals(problem, profile) if I is None else I
    x, log_dt = I.x, np.log(np.where(I.dt > 0, I.dt, 1.0))
    log_dt = np.where(I.dt > 0, log_dt, -np.inf)
    m = {pr: log_moment(*pr, x) for pr in ((2, 0), (1, 1), (0, 2))}
    mn = {pr: log_moment(*pr, -x) for pr in ((2, 0), (1, 1), (0, 2))}
    c0, c1, w0, w1 = I.c[:-1], I.c[1:], I.w[:-1], I.w[1:]
    a0 = I.a[:-1]
    # d I_j / d a_j, d I_j / d a_{j+1} and minus the same for J_j
    log_Ia = log_dt + a0 + np.logaddexp(np.log(c0) + m[2, 0], np.log(c1) + m[1, 1])
    log_Ib = log_dt + a0 + np.logaddexp(np.log(c0) + m[1, 1], np.log(c1) + m[0, 2])
    log_Ja = log_dt - a0 + np.logaddexp(np.log(w0) + mn[2, 0], np.log(w1) + mn[1, 1])
    log_Jb = log_dt - a0 + np.logaddexp(np.log(w0) + mn[1, 1], np.log(w1) + mn[0, 2])
    # d cost / d I_j and d cost / d J_j
    log_U = np.logaddexp(I.log_Qs[1:], I.log_q + I.log_Q[:-1]) - I.log_1mq
    log_V = np.logaddexp(I.log_P[:-1], I.log_q + I.log_Ps[1:]) - I.log_1mq
    # within-gap term: d D_j / d x_j = cb wb dt^2 [q m11(x) - m11(-x)]
    log_cw = np.log(0.25 * (c0 + c1) * (w0 + w1)) + 2.0 * log_dt - I.log_1mq
    dD = _exp(log_cw + I.log_q + log_moment(1, 1, x)) - _exp(log_cw + log_moment(1, 1, -x))
    left = _exp(log_U + log_Ia) - _exp(log_V + log_Ja) - dD
    right = _exp(log_U + log_Ib) - _exp(log_V + log_Jb) + dD
    g = np.zeros(I.a.size)
    g[:-1] += left
    g[1:] += right
    G = np.cumsum(g[::-1])[::-1][1:]
    return Gradient(nodes=g, gaps=G, h=-g / profile.grid.weights)


@dataclass(frozen=True)
class FirstOrderDiagnostics:
    """Everything the optimality check reports for one profile.

    ``psi_gap[j]`` belongs to gap ``j`` (between nodes ``j`` and ``j+1``);
    the certificate residual is ``max(psi_max - psi_gap)`` over active gaps.
    """

    grid: object
    h: np.ndarray
    psi: np.ndarray
    psi_gap: np.ndarray
    psi_max: float
    certificate_residual: float
    identity_residual: float
    M: float
    support_mask: np.ndarray
    jump_sign_violation: float

    def to_dict(self):
        return {"psi_max": self.psi_max,
                "certificate_residual": self.certificate_residual,
                "identity_residual": self.identity_residual,
                "M": self.M,
                "jump_sign_violation": self.jump_sign_violation}


def identity_terms(problem, profile, I=None):
    """The constant ``M`` and the per-node residual of the key identity.

    ``psi + (h / c) S + M - (w / c) S**2`` vanishes in the continuum; with the
    trapezoid ``psi`` the residual is the quadrature error.
    """
    I = integrals(problem, profile) if I is None else I
    h = h_function(problem, profile, I)
    psi = psi_function(problem, profile, I)
    S = I.S
    M = float(_exp(I.log_q + I.log_QT + I.log_PT - 2.0 * I.log_1mq))
    resid = psi + h / I.c * S + M - I.w / I.c * S ** 2
    return M, resid


def identity_residual(problem, profile, I=None, exclude_jumps=True):
    """Max absolute residual of the key identity over nodes with ``c > 1e-12``.

    With ``exclude_jumps`` the nodes of zero-width gaps are left out, as the
    sampled one-sided values there are not resolved by the trapezoid ``psi``.
    """
    _, resid = identity_terms(problem, profile, I)
    I = integrals(problem, profile) if I is None else I
    keep = I.c > 1e-12
    if exclude_jumps:
        split = profile.grid.split_gaps
        keep[:-1] &= ~split
        keep[1:] &= ~split
    return float(np.max(np.abs(resid[keep]))) if np.any(keep) else 0.0


def certificate(problem, profile, support_tol=None):
    """First-order optimality certificate.

    Parameters
    ----------
    support_tol : float, optional
        Density above which a gap counts as support; defaults to
        ``1e-4 * eta_bar``.

    Returns
    -------
    FirstOrderDiagnostics
        ``certificate_residual`` is ``max(psi_max - psi_gap)`` over the
        support; it is zero exactly at the discrete optimum.
        ``jump_sign_violation`` is the largest violation of ``h(t+) >= 0``,
        ``h(t-) <= 0`` at atoms.
    """
    if support_tol is None:
        support_tol = SUPPORT_RTOL * problem.eta_bar
    I = integrals(problem, profile)
    grad = gradient(problem, profile, I)
    psi_gap = -grad.gaps
    psi_max = float(np.max(psi_gap))
    active = support_gaps(profile, support_tol)
    resid = float(np.max(psi_max - psi_gap[active])) if np.any(active) else 0.0
    h = h_function(problem, profile, I)
    M, ident = identity_terms(problem, profile, I)
    atoms = np.flatnonzero(active & profile.grid.split_gaps)
    jump_violation = 0.0
    if atoms.size:
        jump_violation = float(max(np.max(-h[atoms + 1]), np.max(h[atoms]), 0.0))
    return FirstOrderDiagnostics(
        grid=profile.grid, h=h, psi=psi_function(problem, profile, I), psi_gap=psi_gap,
        psi_max=psi_max, certificate_residual=resid,
        identity_residual=identity_residual(problem, profile, I),
        M=M, support_mask=active, jump_sign_violation=jump_violation,
    )
