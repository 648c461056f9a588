"""Cumulative effort profiles and their support.

A profile stores the cumulative effort ``alpha`` at every grid node.  Between
nodes the effort is spread uniformly, so ``alpha`` is piecewise linear.  An
atom (a point mass of effort) lives on a zero-width gap of the grid: the two
copies of a duplicated node hold ``alpha(t-)`` and ``alpha(t+)``.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_1d, check_side
from .profiles import Grid

# Increments below ATOM_RTOL * mass on a zero-width gap are treated as zero.
ATOM_RTOL = 1e-10


@dataclass(frozen=True)
class EffortProfile:
    """Discretized cumulative effort profile on a grid.

    Attributes
    ----------
    grid : Grid
    alpha : ndarray
        Cumulative effort at each node; ``alpha[0] == 0`` and non-decreasing.
    """

    grid: Grid
    alpha: np.ndarray = field(repr=False)

    def __post_init__(self):
        alpha = check_1d(self.alpha, "alpha", size=len(self.grid)).copy()
        if alpha[0] != 0.0:
            raise ValueError("alpha must vanish at t=0")
        scale = max(1.0, abs(alpha[-1]))
        if np.any(np.diff(alpha) < -1e-12 * scale):
            raise ValueError("alpha must be non-decreasing")
        alpha = np.maximum.accumulate(alpha)
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def mass(self):
        """Effort per period, ``alpha(T)``."""
        return float(self.alpha[-1])

    @property
    def increments(self):
        return np.diff(self.alpha)

    @property
    def gap_density(self):
        """Effort density on each regular gap; zero-width gaps get ``nan``."""
        dt = self.grid.dt
        out = np.full(dt.size, np.nan)
        ok = dt > 0
        out[ok] = self.increments[ok] / dt[ok]
        return out

    @property
    def node_density(self):
        """Density seen from each node.

        The left copy of a duplicated node and the last node report the gap on
        their left; every other node reports the gap on its right.
        """
        dens = self.gap_density
        n = len(self.grid)
        use_left = np.zeros(n, dtype=bool)
        use_left[-1] = True
        use_left[:-1] |= self.grid.split_gaps
        idx = np.where(use_left, np.arange(n) - 1, np.arange(n))
        idx = np.clip(idx, 0, dens.size - 1)
        out = dens[idx]
        return np.where(np.isnan(out), 0.0, out)

    @property
    def atoms(self):
        """Explicit atoms: ``[(time, mass), ...]`` on zero-width gaps."""
        inc = self.increments
        split = self.grid.split_gaps & (inc > ATOM_RTOL * max(self.mass, 1e-300))
        idx = np.flatnonzero(split)
        return [(float(self.grid.t[i]), float(inc[i])) for i in idx]

    def check_bound(self, problem):
        """Raise unless this profile belongs to ``M(T, eta_bar)`` of ``problem``."""
        if self.grid.period != problem.period:
            raise ValueError("profile grid period differs from the problem period")
        if abs(self.mass - problem.mass) > 1e-9 * max(1.0, problem.mass):
            raise ValueError(f"profile mass {self.mass!r} does not match T*eta_bar = {problem.mass!r}")

    def rescaled(self, mass):
        """Same shape, total effort ``mass`` (multiplicative rescaling)."""
        if self.mass <= 0:
            raise ValueError("cannot rescale a zero profile")
        return EffortProfile(self.grid, self.alpha * (mass / self.mass))

    def to_csv(self):
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "alpha", "eta"])
        for row in zip(self.grid.t, self.alpha, self.node_density):
            writer.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def atoms_json(self):
        return json.dumps({"atoms": [{"t": t, "mass": m} for t, m in self.atoms]}, indent=2)

    @classmethod
    def from_csv(cls, text, period=None):
        """Read a profile written by :meth:`to_csv` (or any CSV with t, alpha columns)."""
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or "t" not in rows[0] or "alpha" not in rows[0]:
            raise ValueError("profile CSV needs 't' and 'alpha' columns")
        t = np.array([float(r["t"]) for r in rows])
        alpha = np.array([float(r["alpha"]) for r in rows])
        period = float(t[-1]) if period is None else float(period)
        right = np.ones(t.size, dtype=bool)
        right[-1] = False
        dup = np.flatnonzero(np.diff(t) == 0)
        right[dup] = False
        right[dup + 1] = True
        return cls(Grid(t, right, period), alpha)


@dataclass(frozen=True)
class SupportSet:
    """Discrete estimate of the support within ``[0, T]``."""

    intervals: list
    atom_points: list

    @property
    def measure(self):
        return float(sum(b - a for a, b in self.intervals))

    def contains(self, t, pad=0.0):
        t = float(t)
        if any(a - pad <= t <= b + pad for a, b in self.intervals):
            return True
        return any(abs(t - s) <= pad for s in self.atom_points)

    def to_dict(self):
        return {"intervals": [[a, b] for a, b in self.intervals], "atoms": list(self.atom_points)}


def uniform(grid, mass):
    """Constant density ``mass / T``."""
    return EffortProfile(grid, mass * grid.t / grid.period)


def pure_atom(grid, t_star, mass):
    """All effort in a single atom at ``t_star``; the grid is split there if needed."""
    g = grid.split_at([t_star])
    s = float(t_star) % g.period
    s = g.period if s == 0.0 else s
    i = int(np.searchsorted(g.t, s, side="left"))
    alpha = np.zeros(len(g))
    alpha[i + 1:] = mass
    return EffortProfile(g, alpha)


def from_density(grid, eta):
    """Cumulative trapezoid of a nonnegative per-node density (no atoms)."""
    eta = check_1d(eta, "eta", size=len(grid))
    if np.any(eta < 0):
        raise ValueError("effort density must be nonnegative")
    inc = 0.5 * grid.dt * (eta[:-1] + eta[1:])
    return EffortProfile(grid, np.concatenate([[0.0], np.cumsum(inc)]))


def with_atoms(profile, atoms):
    """Add point masses ``[(t, mass), ...]`` on top of ``profile``."""
    grid = profile.grid.split_at([t for t, _ in atoms]) if atoms else profile.grid
    alpha = transfer(profile, grid)
    for t, m in atoms:
        if m < 0:
            raise ValueError("atom masses must be nonnegative")
        s = float(t) % grid.period
        s = grid.period if s == 0.0 else s
        i = int(np.searchsorted(grid.t, s, side="left"))
        alpha[i + 1:] += m
    return EffortProfile(grid, alpha)


def transfer(profile, grid):
    """Values of ``profile`` at the nodes of another grid on the same period."""
    r = grid.right
    out = np.empty(len(grid))
    out[r] = alpha_at(profile, grid.t[r], "right")
    out[~r] = alpha_at(profile, grid.t[~r], "left")
    out[0] = 0.0
    return out


def alpha_at(profile, t, side="right"):
    """Cumulative effort at time ``t`` with periodic extension.

    ``alpha(t + k T) = alpha(t) + k alpha(T)``; ``side`` picks ``alpha(t-)`` or
    ``alpha(t+)`` at a jump.
    """
    check_side(side)
    g = profile.grid
    T = g.period
    tt = np.asarray(t, dtype=float)
    k = np.floor(tt / T)
    tau = tt - k * T
    wrap = tau >= T
    tau, k = np.where(wrap, tau - T, tau), np.where(wrap, k + 1, k)
    nodes, a = g.t, profile.alpha
    if side == "left":
        at0 = tau == 0.0
        tau, k = np.where(at0, T, tau), np.where(at0, k - 1, k)
        j = np.searchsorted(nodes, tau, side="left")
        lo = np.maximum(j - 1, 0)
        exact = nodes[j] == tau
        frac = np.where(exact, 1.0, (tau - nodes[lo]) / np.where(exact, 1.0, nodes[j] - nodes[lo]))
        val = np.where(exact, a[j], a[lo] + frac * (a[j] - a[lo]))
    else:
        i = np.searchsorted(nodes, tau, side="right") - 1
        hi = np.minimum(i + 1, nodes.size - 1)
        span = nodes[hi] - nodes[i]
        frac = np.where(span > 0, (tau - nodes[i]) / np.where(span > 0, span, 1.0), 0.0)
        val = a[i] + frac * (a[hi] - a[i])
    out = val + k * profile.mass
    return float(out) if out.ndim == 0 else out


def support_gaps(profile, density_tol):
    """Boolean mask over gaps carrying effort.

    A regular gap is active when its density exceeds ``density_tol``; a
    zero-width gap is active when it carries an atom.
    """
    if density_tol < 0:
        raise ValueError("density_tol must be nonnegative")
    dt = profile.grid.dt
    inc = profile.increments
    regular = (dt > 0) & (inc > density_tol * dt)
    atom = (dt == 0) & (inc > ATOM_RTOL * max(profile.mass, 1e-300))
    return regular | atom


def support(profile, density_tol):
    """Merge active gaps into maximal closed intervals; atoms become support points."""
    active = support_gaps(profile, density_tol)
    t = profile.grid.t
    dt = profile.grid.dt
    intervals = []
    for j in np.flatnonzero(active & (dt > 0)):
        a, b = float(t[j]), float(t[j + 1])
        if intervals and intervals[-1][1] >= a:
            intervals[-1] = (intervals[-1][0], b)
        else:
            intervals.append((a, b))
    atoms = [float(t[j]) for j in np.flatnonzero(active & (dt == 0))]
    return SupportSet(intervals, atoms)


def detect_atoms(profile, threshold_ratio=10.0):
    """Locate point masses in a discrete profile.

    Zero-width gaps carrying effort are reported as they are.  A regular gap
    is also flagged when its increment exceeds ``threshold_ratio`` times the
    increment a mean-density profile would put there, and is a spike relative
    to its neighbouring regular gaps.  A flagged regular gap is reported at its
    midpoint.
    """
    if threshold_ratio <= 1:
        raise ValueError("threshold_ratio must exceed 1")
    g = profile.grid
    dt, inc = g.dt, profile.increments
    mean_density = profile.mass / g.period
    found = list(profile.atoms)
    regular = np.flatnonzero(dt > 0)
    reg_inc = inc[regular]
    neighbours = np.zeros_like(reg_inc)
    neighbours[1:] = np.maximum(neighbours[1:], reg_inc[:-1])
    neighbours[:-1] = np.maximum(neighbours[:-1], reg_inc[1:])
    steep = (reg_inc > threshold_ratio * dt[regular] * mean_density) & (reg_inc > threshold_ratio * neighbours)
    for j in regular[steep]:
        found.append((float(0.5 * (g.t[j] + g.t[j + 1])), float(inc[j])))
    return sorted(found)
