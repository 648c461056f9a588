import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periodic_effort.profiles import (
    Grid,
    PeriodicPiecewise,
    Piece,
    ProblemData,
    build_grid,
    preset,
)


def test_fig1_inflow_is_cosine_with_unit_period():
    p = preset("fig1")
    t = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(p.c(t), 1.0 - 0.9 * np.cos(2.0 * np.pi * t), atol=1e-15)
    assert p.delta == 1.0 and p.period == 1.0
    np.testing.assert_array_equal(p.w(t), 1.0)


def test_sawtooth_one_sided_limits():
    c = preset("fig2_sawtooth").c
    assert c(0.5, "left") == pytest.approx(1.5)
    assert c(0.5, "right") == pytest.approx(0.5)
    # continuous across the period boundary
    assert c(0.0, "left") == pytest.approx(c(0.0, "right"))
    np.testing.assert_allclose(c.jump_points(), [0.5])


def test_square_levels_and_jumps():
    c = preset("fig4_square").c
    assert c(0.1) == 0.25 and c(0.5) == 1.75 and c(0.9) == 0.25
    np.testing.assert_allclose(c.jump_points(), [0.25, 0.75])


def test_tent_drops_at_half_and_is_continuous_at_zero():
    c = preset("fig6_tent").c
    assert c(0.5, "left") == pytest.approx(2.5)
    assert c(0.5, "right") == pytest.approx(2.0)
    assert c(0.0, "left") == pytest.approx(1.0)
    np.testing.assert_allclose(c.jump_points(), [0.5])


def test_unknown_preset():
    with pytest.raises(ValueError, match="unknown preset"):
        preset("fig5")


@given(st.floats(-50.0, 50.0, allow_nan=False), st.integers(-5, 5))
@settings(max_examples=60, deadline=None)
def test_evaluation_is_periodic(t, k):
    c = preset("fig3_rising_sawtooth").c
    assert c(t + k) == pytest.approx(c(t), rel=1e-9, abs=1e-9)


def test_left_limit_at_zero_wraps_to_end_of_period():
    c = preset("fig2_sawtooth").c
    assert c(0.0, "left") == pytest.approx(c(1.0 - 1e-12, "right"), rel=1e-9)


def test_derivatives_per_kind():
    T = 2.0
    f = PeriodicPiecewise(T, (Piece(0.0, "poly", (1.0, 2.0, 3.0)), Piece(1.0, "sin", (5.0, 2.0))))
    assert f.derivative(0.5) == pytest.approx(2.0 + 6.0 * 0.5)
    assert f.derivative(1.5) == pytest.approx(2.0 * np.pi * np.cos(np.pi * 1.5))


@pytest.mark.parametrize("pieces, msg", [
    ((), "at least one"),
    (((0.1, "const", (1.0,)),), "first breakpoint"),
    (((0.0, "const", (1.0,)), (0.0, "const", (2.0,))), "strictly increasing"),
    (((0.0, "spline", (1.0,)),), "unknown piece kind"),
    (((0.0, "cos", (1.0,)),), "takes"),
])
def test_bad_pieces(pieces, msg):
    with pytest.raises(ValueError, match=msg):
        PeriodicPiecewise(1.0, pieces)


def test_problem_rejects_nonpositive_data():
    neg = PeriodicPiecewise(1.0, (Piece(0.0, "cos", (0.5, 1.0)),))
    one = PeriodicPiecewise.constant(1.0)
    with pytest.raises(ValueError, match="strictly positive"):
        ProblemData(c=neg, w=one, delta=1.0, period=1.0, eta_bar=1.0)
    with pytest.raises(ValueError, match="eta_bar"):
        ProblemData(c=one, w=one, delta=1.0, period=1.0, eta_bar=0.0)
    with pytest.raises(ValueError, match="delta"):
        ProblemData(c=one, w=one, delta=-1.0, period=1.0, eta_bar=1.0)
    with pytest.raises(ValueError, match="period"):
        ProblemData(c=one, w=PeriodicPiecewise.constant(1.0, 2.0), delta=1.0, period=1.0, eta_bar=1.0)


def test_problem_dict_round_trip():
    p = preset("fig4_square", eta_bar=3.0)
    q = ProblemData.from_dict(p.to_dict())
    assert q == p
    with pytest.raises(ValueError, match="missing"):
        ProblemData.from_dict({"period": 1.0, "eta_bar": 1.0,
                               "c": [{"t": 0.0, "kind": "const", "coeffs": [1.0]}]})


def test_problem_dict_defaults_w_to_one():
    doc = {"period": 1.0, "delta": 1.0, "eta_bar": 2.0,
           "c": [{"t": 0.0, "kind": "cos", "coeffs": [1.0, -0.9]}]}
    p = ProblemData.from_dict(doc)
    assert p.w(0.3) == 1.0
    assert p.c(0.25) == pytest.approx(1.0)


def test_build_grid_duplicates_jumps():
    p = preset("fig4_square")
    g = build_grid(p, 100)
    assert g.t[0] == 0.0 and g.t[-1] == 1.0
    for s in (0.25, 0.75):
        idx = np.flatnonzero(g.t == s)
        assert idx.size == 2
        assert not g.right[idx[0]] and g.right[idx[1]]
    assert g.split_gaps.sum() == 2
    c = g.values(p.c)
    i = np.flatnonzero(g.t == 0.25)
    assert c[i[0]] == 0.25 and c[i[1]] == 1.75


def test_build_grid_inserts_breakpoints_and_refinement():
    p = preset("fig6_tent")
    g = build_grid(p, 30, refine_near=[0.123])
    assert 0.5 in g.t and 0.123 in g.t
    assert np.sum(g.t == 0.123) == 1
    assert np.sum(g.t == 0.5) == 2


def test_grid_weights_integrate_linear_functions_exactly():
    g = build_grid(preset("fig2_sawtooth"), 37)
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.sum(g.weights * (3.0 * g.t + 1.0)) == pytest.approx(2.5, abs=1e-14)


def test_grid_validation():
    t = np.linspace(0.0, 1.0, 20)
    right = np.ones(20, dtype=bool)
    with pytest.raises(ValueError, match="start at 0"):
        Grid(t + 0.1, right, 1.0)
    bad = t.copy()
    bad[5], bad[6] = bad[6], bad[5]
    with pytest.raises(ValueError, match="non-decreasing"):
        Grid(bad, right, 1.0)
    with pytest.raises(ValueError, match="at least 16"):
        Grid(np.linspace(0.0, 1.0, 5), np.ones(5, dtype=bool), 1.0)
    with pytest.raises(ValueError, match="K must be"):
        build_grid(preset("fig1"), 8)


def test_split_at_is_idempotent():
    g = build_grid(preset("fig1"), 40)
    once = g.split_at([0.3])
    twice = once.split_at([0.3])
    np.testing.assert_array_equal(once.t, twice.t)
    assert np.sum(once.t == 0.3) == 2
