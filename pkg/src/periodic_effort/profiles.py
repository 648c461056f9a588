"""Problem data: periodic piecewise-smooth functions, problem instances and grids.

A :class:`PeriodicPiecewise` is a T-periodic function given on ``[0, T)`` by a
short list of pieces. Each piece starts at a breakpoint and is one of

* ``const``: ``a``
* ``poly``:  ``a0 + a1*t + a2*t**2 + ...`` (``t`` is the time reduced to ``[0, T)``)
* ``cos``:   ``a + b*cos(omega*t)`` with ``omega`` defaulting to ``2*pi/T``
* ``sin``:   ``a + b*sin(omega*t)``

The restricted expression set keeps derivatives in closed form, which the
analytic formulas need for the ``[ln(c/w)]'`` terms.
"""

import bisect
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_positive, check_side

KINDS = ("const", "poly", "cos", "sin")

# Relative tolerance used to decide that two one-sided limits differ.
JUMP_RTOL = 1e-12


@dataclass(frozen=True)
class Piece:
    start: float
    kind: str
    coeffs: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown piece kind {self.kind!r}; expected one of {KINDS}")
        n = len(self.coeffs)
        if self.kind == "const" and n != 1:
            raise ValueError("'const' piece takes exactly one coefficient")
        if self.kind == "poly" and n < 1:
            raise ValueError("'poly' piece needs at least one coefficient")
        if self.kind in ("cos", "sin") and n not in (2, 3):
            raise ValueError(f"'{self.kind}' piece takes [a, b] or [a, b, omega]")
        if not all(math.isfinite(x) for x in self.coeffs):
            raise ValueError("piece coefficients must be finite")

    def value(self, t, period):
        k, a = self.kind, self.coeffs
        if k == "const":
            return np.full_like(t, a[0])
        if k == "poly":
            return np.polynomial.polynomial.polyval(t, a)
        omega = a[2] if len(a) == 3 else 2.0 * np.pi / period
        trig = np.cos if k == "cos" else np.sin
        return a[0] + a[1] * trig(omega * t)

    def derivative(self, t, period):
        k, a = self.kind, self.coeffs
        if k == "const":
            return np.zeros_like(t)
        if k == "poly":
            return np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(a))
        omega = a[2] if len(a) == 3 else 2.0 * np.pi / period
        if k == "cos":
            return -a[1] * omega * np.sin(omega * t)
        return a[1] * omega * np.cos(omega * t)


@dataclass(frozen=True)
class PeriodicPiecewise:
    """T-periodic piecewise-smooth function with explicit breakpoints."""

    period: float
    pieces: tuple

    def __post_init__(self):
        check_positive(self.period, "period")
        pieces = tuple(p if isinstance(p, Piece) else Piece(float(p[0]), p[1], tuple(map(float, p[2])))
                       for p in self.pieces)
        if not pieces:
            raise ValueError("at least one piece is required")
        starts = np.array([p.start for p in pieces])
        if starts[0] != 0.0:
            raise ValueError("the first breakpoint must be 0")
        if np.any(np.diff(starts) <= 0) or starts[-1] >= self.period:
            raise ValueError("breakpoints must be strictly increasing inside [0, period)")
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def constant(cls, value, period=1.0):
        return cls(period, (Piece(0.0, "const", (float(value),)),))

    @property
    def breakpoints(self):
        return np.array([p.start for p in self.pieces])

    def _locate(self, t, side):
        check_side(side)
        t = np.asarray(t, dtype=float)
        T = self.period
        tau = t - T * np.floor(t / T)
        # floor can leave tau == T for tiny negative t
        tau = np.where(tau >= T, tau - T, tau)
        starts = self.breakpoints
        if side == "right":
            idx = np.searchsorted(starts, tau, side="right") - 1
        else:
            at_zero = tau == 0.0
            tau = np.where(at_zero, T, tau)
            idx = np.searchsorted(starts, tau, side="left") - 1
        return tau, idx

    def _apply(self, t, side, method):
        tau, idx = self._locate(t, side)
        out = np.empty_like(tau)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = getattr(piece, method)(tau[mask], self.period)
        return out if out.ndim else float(out)

    def __call__(self, t, side="right"):
        """Evaluate ``f(t+)`` (``side='right'``) or ``f(t-)`` after reducing t mod T."""
        return self._apply(t, side, "value")

    def derivative(self, t, side="right"):
        """One-sided derivative, taken piecewise (jumps are not differentiated)."""
        return self._apply(t, side, "derivative")

    def jump_points(self):
        """Breakpoints where the left and right limits differ."""
        b = self.breakpoints
        left, right = np.atleast_1d(self(b, "left")), np.atleast_1d(self(b, "right"))
        scale = np.maximum(np.abs(left), np.abs(right))
        return b[np.abs(left - right) > JUMP_RTOL * np.maximum(scale, 1.0)]

    def to_list(self):
        return [{"t": p.start, "kind": p.kind, "coeffs": list(p.coeffs)} for p in self.pieces]

    @classmethod
    def from_list(cls, items, period):
        try:
            pieces = tuple(Piece(float(it["t"]), str(it["kind"]), tuple(float(x) for x in it["coeffs"]))
                           for it in items)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed piece description: {exc}") from exc
        return cls(float(period), pieces)


def _check_positive_function(f, name):
    T = f.period
    probe = np.linspace(0.0, T, 2049)
    b = f.breakpoints
    values = np.concatenate([f(probe, "right"), f(probe, "left"),
                             np.atleast_1d(f(b, "left")), np.atleast_1d(f(b, "right"))])
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError(f"{name} must have strictly positive one-sided limits everywhere")


@dataclass(frozen=True)
class ProblemData:
    """One instance of the periodic effort allocation problem.

    Parameters
    ----------
    c : PeriodicPiecewise
        Inflow rate.
    w : PeriodicPiecewise
        Cost weight.
    delta : float
        Base decay rate.
    period : float
        Common period ``T`` of ``c`` and ``w``.
    eta_bar : float
        Mean effort per unit time; the effort budget per period is ``period * eta_bar``.
    """

    c: PeriodicPiecewise
    w: PeriodicPiecewise
    delta: float
    period: float
    eta_bar: float

    def __post_init__(self):
        check_positive(self.delta, "delta")
        check_positive(self.period, "period")
        check_positive(self.eta_bar, "eta_bar")
        for f, name in ((self.c, "c"), (self.w, "w")):
            if not math.isclose(f.period, self.period, rel_tol=1e-14):
                raise ValueError(f"{name} has period {f.period}, expected {self.period}")
            _check_positive_function(f, name)

    @property
    def mass(self):
        """Total effort per period, ``T * eta_bar``."""
        return self.period * self.eta_bar

    def with_eta_bar(self, eta_bar):
        return replace(self, eta_bar=float(eta_bar))

    def phi(self, t, side="right"):
        """The ratio ``c/w``."""
        return self.c(t, side) / self.w(t, side)

    def dlog_phi(self, t, side="right"):
        """Closed-form ``[ln(c/w)]' = c'/c - w'/w`` on the smooth pieces."""
        return (self.c.derivative(t, side) / self.c(t, side)
                - self.w.derivative(t, side) / self.w(t, side))

    def breakpoints(self):
        return np.union1d(self.c.breakpoints, self.w.breakpoints)

    def jump_points(self):
        """Breakpoints where ``c`` or ``w`` jumps."""
        return np.union1d(self.c.jump_points(), self.w.jump_points())

    def to_dict(self):
        return {"period": self.period, "delta": self.delta, "eta_bar": self.eta_bar,
                "c": self.c.to_list(), "w": self.w.to_list()}

    @classmethod
    def from_dict(cls, doc):
        try:
            period = float(doc["period"])
            c = PeriodicPiecewise.from_list(doc["c"], period)
            w_items = doc.get("w", [{"t": 0.0, "kind": "const", "coeffs": [1.0]}])
            w = PeriodicPiecewise.from_list(w_items, period)
            return cls(c=c, w=w, delta=float(doc["delta"]), period=period,
                       eta_bar=float(doc["eta_bar"]))
        except KeyError as exc:
            raise ValueError(f"problem document is missing field {exc}") from exc


@dataclass(frozen=True)
class Grid:
    """Time grid on ``[0, T]``.

    ``t`` may contain a node twice: the pair stands for the two sides of a jump
    in the data, so that quadrature never straddles a discontinuity.  ``right``
    says which one-sided limit of the data belongs to each node.
    """

    t: np.ndarray
    right: np.ndarray = field(repr=False)
    period: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        right = np.asarray(self.right, dtype=bool)
        if t.ndim != 1 or right.shape != t.shape:
            raise ValueError("t and right must be 1-D arrays of equal length")
        if t.size < 17:
            raise ValueError("a grid needs at least 16 gaps")
        if t[0] != 0.0 or t[-1] != self.period:
            raise ValueError("grid must start at 0 and end at the period")
        dt = np.diff(t)
        if np.any(dt < 0):
            raise ValueError("grid nodes must be non-decreasing")
        zero = dt == 0
        if np.any(zero[1:] & zero[:-1]):
            raise ValueError("a node may appear at most twice")
        if zero[0]:
            raise ValueError("the node at t=0 cannot be duplicated")
        t.setflags(write=False)
        right.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "right", right)

    def __len__(self):
        return self.t.size

    @property
    def n_gaps(self):
        return self.t.size - 1

    @property
    def dt(self):
        return np.diff(self.t)

    @property
    def weights(self):
        """Composite trapezoid weights, ``sum(weights * f) ~ int_0^T f``."""
        dt = self.dt
        om = np.zeros(self.t.size)
        om[:-1] += 0.5 * dt
        om[1:] += 0.5 * dt
        return om

    @property
    def split_gaps(self):
        """Boolean mask over gaps: True where the gap has zero width (a jump node)."""
        return self.dt == 0

    def values(self, f):
        """Evaluate a periodic function at the nodes, honouring each node's side."""
        out = np.empty(self.t.size)
        r = self.right
        out[r] = f(self.t[r], "right")
        out[~r] = f(self.t[~r], "left")
        return out

    def split_at(self, times):
        """Return a grid where each time in ``times`` is a duplicated node."""
        t = self.t.tolist()
        right = self.right.tolist()
        for s in np.atleast_1d(times):
            s = float(s) % self.period
            if s == 0.0:
                s = self.period
            i = bisect.bisect_left(t, s)
            hits = bisect.bisect_right(t, s) - i
            if hits == 2:
                continue
            if hits == 1:
                t.insert(i, s)
                right.insert(i, False)
                right[i + 1] = True
            else:
                t[i:i] = [s, s]
                right[i:i] = [False, True]
        return Grid(np.array(t), np.array(right), self.period)


def build_grid(problem, K, refine_near=()):
    """Uniform ``K``-gap grid with data breakpoints and ``refine_near`` inserted.

    Jump points of ``c`` or ``w`` become duplicated nodes (left copy first).
    A jump at ``t = 0`` is carried by a duplicated node at ``T``.
    """
    if int(K) != K or K < 16:
        raise ValueError(f"K must be an integer >= 16, got {K!r}")
    T = problem.period
    base = np.linspace(0.0, T, int(K) + 1)
    special = np.concatenate([problem.breakpoints(), np.asarray(refine_near, dtype=float) % T])
    special = special[(special > 0) & (special < T)]
    # snap base nodes onto nearby special times so no sliver gaps appear
    tol = 1e-9 * T
    nodes = list(base)
    for s in special:
        j = int(np.argmin(np.abs(base - s)))
        if abs(base[j] - s) <= tol and 0 < j < K:
            nodes[j] = s
        else:
            nodes.append(s)
    nodes = np.unique(np.array(nodes))
    right = np.ones(nodes.size, dtype=bool)
    right[-1] = False
    grid = Grid(nodes, right, T)
    jumps = problem.jump_points()
    if jumps.size:
        grid = grid.split_at(jumps)
    return grid


def _sawtooth(T=1.0):
    return PeriodicPiecewise(T, (Piece(0.0, "poly", (1.0, 1.0)), Piece(0.5, "poly", (0.0, 1.0))))


def _rising_sawtooth(T=1.0):
    return PeriodicPiecewise(T, (Piece(0.0, "poly", (1.0, -1.0)), Piece(0.5, "poly", (2.0, -1.0))))


def _square(T=1.0):
    return PeriodicPiecewise(T, (Piece(0.0, "const", (0.25,)), Piece(0.25, "const", (1.75,)),
                                 Piece(0.75, "const", (0.25,))))


def _tent(T=1.0):
    return PeriodicPiecewise(T, (Piece(0.0, "poly", (1.0, 3.0)), Piece(0.5, "poly", (3.0, -2.0))))


def _cosine(T=1.0):
    return PeriodicPiecewise(T, (Piece(0.0, "cos", (1.0, -0.9, 2.0 * np.pi)),))


PRESETS = {
    "fig1": _cosine,
    "fig2_sawtooth": _sawtooth,
    "fig3_rising_sawtooth": _rising_sawtooth,
    "fig4_square": _square,
    "fig6_tent": _tent,
}


def preset(name, eta_bar=1.0):
    """Worked example instances: ``w = 1``, ``delta = 1``, ``T = 1``."""
    try:
        make_c = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return ProblemData(c=make_c(), w=PeriodicPiecewise.constant(1.0), delta=1.0, period=1.0,
                       eta_bar=eta_bar)
