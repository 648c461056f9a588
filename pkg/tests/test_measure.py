import numpy as np
import pytest

from periodic_effort import measure
from periodic_effort.measure import EffortProfile
from periodic_effort.profiles import build_grid, preset


@pytest.fixture
def grid():
    return build_grid(preset("fig2_sawtooth"), 40)


def test_uniform_profile(grid):
    u = measure.uniform(grid, 3.0)
    assert u.mass == 3.0
    np.testing.assert_allclose(u.node_density, 3.0)
    assert u.atoms == []


def test_pure_atom_puts_all_mass_on_split_gap(grid):
    p = measure.pure_atom(grid, 0.5, 0.2)
    assert p.atoms == [(0.5, pytest.approx(0.2))]
    assert p.mass == pytest.approx(0.2)
    assert measure.alpha_at(p, 0.5, "left") == 0.0
    assert measure.alpha_at(p, 0.5, "right") == pytest.approx(0.2)


def test_pure_atom_off_grid_splits_grid():
    g = build_grid(preset("fig1"), 20)
    p = measure.pure_atom(g, 0.3333, 1.0)
    assert np.sum(p.grid.t == 0.3333) == 2
    assert p.atoms == [(0.3333, 1.0)]


def test_from_density_and_with_atoms(grid):
    base = measure.from_density(grid, np.full(len(grid), 2.0))
    assert base.mass == pytest.approx(2.0)
    both = measure.with_atoms(base, [(0.3, 0.5)])
    assert both.mass == pytest.approx(2.5)
    assert both.atoms == [(0.3, pytest.approx(0.5))]
    with pytest.raises(ValueError, match="nonnegative"):
        measure.from_density(grid, -np.ones(len(grid)))


def test_alpha_at_periodic_extension(grid):
    u = measure.uniform(grid, 2.0)
    assert measure.alpha_at(u, 1.25) == pytest.approx(2.5)
    assert measure.alpha_at(u, -0.5) == pytest.approx(-1.0)
    np.testing.assert_allclose(measure.alpha_at(u, np.array([0.1, 0.2])), [0.2, 0.4])


def test_alpha_at_left_limit_at_zero_is_previous_period(grid):
    p = measure.pure_atom(grid, 0.0, 1.0)
    assert measure.alpha_at(p, 0.0, "left") == pytest.approx(-1.0 + p.alpha[-2])


def test_profile_validation(grid):
    n = len(grid)
    with pytest.raises(ValueError, match="vanish"):
        EffortProfile(grid, np.linspace(1.0, 2.0, n))
    bad = np.linspace(0.0, 1.0, n)
    bad[5] = -1.0
    with pytest.raises(ValueError, match="non-decreasing"):
        EffortProfile(grid, bad)
    with pytest.raises(ValueError, match="entries"):
        EffortProfile(grid, np.zeros(n + 1))
    with pytest.raises(ValueError, match="non-finite"):
        EffortProfile(grid, np.full(n, np.nan))


def test_check_bound(grid):
    u = measure.uniform(grid, 1.0)
    u.check_bound(preset("fig2_sawtooth", 1.0))
    with pytest.raises(ValueError, match="mass"):
        u.check_bound(preset("fig2_sawtooth", 2.0))


def test_support_merges_adjacent_gaps(grid):
    dens = np.where((grid.t > 0.2) & (grid.t < 0.6), 1.0, 0.0)
    prof = measure.with_atoms(measure.from_density(grid, dens), [(0.9, 0.1)])
    s = measure.support(prof, 1e-6)
    assert len(s.intervals) == 1
    a, b = s.intervals[0]
    assert a == pytest.approx(0.2, abs=0.03) and b == pytest.approx(0.6, abs=0.03)
    assert s.atom_points == [pytest.approx(0.9)]
    assert s.contains(0.4) and s.contains(0.9) and not s.contains(0.8)
    assert s.to_dict()["atoms"] == s.atom_points


def test_detect_atoms_finds_spike_in_regular_gap():
    g = build_grid(preset("fig1"), 100)
    alpha = np.linspace(0.0, 1.0, len(g))
    alpha[51:] += 0.8
    prof = EffortProfile(g, alpha)
    found = measure.detect_atoms(prof)
    assert len(found) == 1
    t, m = found[0]
    assert t == pytest.approx(0.505)
    assert m == pytest.approx(0.81)


def test_detect_atoms_ignores_smooth_profiles(grid):
    assert measure.detect_atoms(measure.uniform(grid, 5.0)) == []
    with pytest.raises(ValueError):
        measure.detect_atoms(measure.uniform(grid, 1.0), threshold_ratio=1.0)


def test_csv_round_trip_keeps_atoms(grid):
    prof = measure.with_atoms(measure.uniform(grid, 1.0), [(0.5, 0.25)])
    text = prof.to_csv()
    assert text.splitlines()[0] == "t,alpha,eta"
    assert "\r" not in text
    back = EffortProfile.from_csv(text, 1.0)
    np.testing.assert_array_equal(back.grid.t, prof.grid.t)
    np.testing.assert_array_equal(back.alpha, prof.alpha)
    assert back.atoms == prof.atoms
    with pytest.raises(ValueError, match="columns"):
        EffortProfile.from_csv("x,y\n1,2\n")


def test_transfer_between_grids():
    p = preset("fig1")
    coarse = measure.uniform(build_grid(p, 20), 1.0)
    fine = build_grid(p, 80)
    np.testing.assert_allclose(measure.transfer(coarse, fine), fine.t, atol=1e-15)


def test_rescaled(grid):
    u = measure.uniform(grid, 2.0).rescaled(5.0)
    assert u.mass == pytest.approx(5.0)
    with pytest.raises(ValueError):
        EffortProfile(grid, np.zeros(len(grid))).rescaled(1.0)
