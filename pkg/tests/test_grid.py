import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from incrlaw.chernoff import chernoff_h
from incrlaw.grid import (
    DyadicGrid,
    GridError,
    GridFunction,
    cumulative,
    difference,
    discretize,
    max_cell_oscillation,
    rate_from_masses,
    rate_I_sequence,
    rate_Ip,
    sup_norm_dist,
)


def identity(pts):
    return np.prod(pts, axis=1)


def piecewise_linear(knots, slopes):
    """Distribution function with density ``slopes[i]`` on ``[knots[i], knots[i+1])``."""
    knots = np.asarray(knots)
    slopes = np.asarray(slopes)

    def g(pts):
        s = pts[:, 0]
        widths = np.clip(s[:, None] - knots[None, :-1], 0, np.diff(knots)[None, :])
        return widths @ slopes

    return g


def test_grid_geometry():
    g = DyadicGrid(2, 3)
    assert g.side == 8 and g.shape == (8, 8) and g.n_cells == 64
    assert g.cell_volume == 2.0**-6
    assert g.corner_points().shape == (81, 2)


@pytest.mark.parametrize("d,p", [(0, 1), (4, 1), (1, 13), (1, -1), (3, 9)])
def test_grid_limits(d, p):
    with pytest.raises(GridError):
        DyadicGrid(d, p)


def test_discretize_identity():
    gf = discretize(identity, DyadicGrid(1, 2))
    np.testing.assert_allclose(gf.cumulative()[:-1], [0, 0.25, 0.5, 0.75])
    np.testing.assert_allclose(gf.masses, 0.25)


def test_discretize_zero():
    gf = discretize(lambda pts: np.zeros(len(pts)), DyadicGrid(2, 3))
    assert np.all(gf.masses == 0)


def test_discretize_product_measure_d2():
    gf = discretize(identity, DyadicGrid(2, 1))
    # direct volume computation: each quarter square has area 1/4
    np.testing.assert_allclose(gf.masses, [[0.25, 0.25], [0.25, 0.25]])


def test_discretize_rejects_decreasing():
    with pytest.raises(GridError, match=r"cell \(2,\)"):
        discretize(lambda pts: np.minimum(pts[:, 0], 0.5) - 0.5 * (pts[:, 0] >= 0.75), DyadicGrid(1, 2))


def test_discretize_rejects_nonzero_face():
    with pytest.raises(GridError):
        discretize(lambda pts: pts[:, 0] + 1.0, DyadicGrid(1, 2))


def test_cumulative_difference_roundtrip():
    rng = np.random.default_rng(0)
    for d in (1, 2, 3):
        m = rng.uniform(size=(4,) * d)
        np.testing.assert_allclose(difference(cumulative(m)), m, atol=1e-12)


def test_gridfunction_validation():
    with pytest.raises(GridError, match="negative"):
        GridFunction(DyadicGrid(1, 1), [0.1, -0.2])
    with pytest.raises(GridError):
        GridFunction(DyadicGrid(1, 1), [0.1, np.nan])
    with pytest.raises(GridError):
        GridFunction(DyadicGrid(1, 1), [0.1, 0.2, 0.3])


def test_gridfunction_json_roundtrip_row_major():
    m = np.arange(16, dtype=float).reshape(4, 4) / 100
    gf = GridFunction(DyadicGrid(2, 2), m)
    data = json.loads(gf.to_json())
    assert data["masses"][:4] == [0.0, 0.01, 0.02, 0.03]  # last axis fastest
    assert GridFunction.from_json(gf.to_json()) == gf
    with pytest.raises(GridError):
        GridFunction.from_dict({**data, "extra": 1})


def test_rate_examples():
    for p in (0, 3, 9):
        assert rate_Ip(GridFunction.linear(DyadicGrid(1, p))) == 0.0
    assert rate_Ip(GridFunction.zero(DyadicGrid(2, 4))) == 1.0
    gf = GridFunction(DyadicGrid(1, 1), [0.25, 0.75])
    assert rate_Ip(gf) == pytest.approx(0.5 * chernoff_h(0.5) + 0.5 * chernoff_h(1.5), abs=1e-15)
    assert rate_Ip(gf) == pytest.approx(0.1308121, abs=1e-7)


@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0, 2.0, 5.5])
def test_rate_sequence_linear_exact(beta):
    for _, v in rate_I_sequence(lambda pts: beta * pts[:, 0], 12):
        assert abs(v - chernoff_h(beta)) < 1e-12


def test_rate_sequence_two_slope():
    g = piecewise_linear([0, 0.5, 1], [0.5, 1.5])
    for _, v in rate_I_sequence(g, 10):
        assert v == pytest.approx(0.13081203594113694, abs=1e-12)


def atom_rate(p):
    # an atom of mass 0.5 at s = 0.5 sits in one cell at every resolution;
    # p above the grid cap goes through the array-level rate
    m = np.zeros(1 << p)
    m[1 << (p - 1)] = 0.5
    return float(rate_from_masses(m, 2.0**-p))


def test_atom_rate_grows_linearly():
    assert atom_rate(16) >= 5
    assert atom_rate(16) == pytest.approx(2.0**-16 * chernoff_h(2.0**15) + 1 - 2.0**-16, abs=1e-12)
    slopes = [atom_rate(p + 1) - atom_rate(p) for p in range(8, 16)]
    np.testing.assert_allclose(slopes, 0.5 * math.log(2), rtol=1e-3)
    m = np.zeros(1 << 12)
    m[1 << 11] = 0.5
    assert rate_Ip(GridFunction(DyadicGrid(1, 12), m)) == pytest.approx(atom_rate(12), abs=1e-15)


def test_rate_sequence_cap():
    with pytest.raises(GridError):
        rate_I_sequence(identity, 9, d=2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 4), min_size=1, max_size=6), st.integers(0, 1000))
def test_jensen_monotone(slopes, seed):
    rng = np.random.default_rng(seed)
    knots = np.concatenate([[0], np.sort(rng.uniform(size=len(slopes) - 1)), [1]])
    seq = [v for _, v in rate_I_sequence(piecewise_linear(knots, slopes), 10)]
    assert all(b >= a - 1e-12 for a, b in zip(seq, seq[1:]))


@settings(max_examples=50)
@given(arrays(float, 8, elements=st.floats(0, 40)))
def test_total_mass_bounded_by_rate(masses):
    # densities up to 40; h(x) >= x for x > 8, so total mass <= 8 + I_p
    gf = GridFunction(DyadicGrid(1, 3), masses / 8)
    assert gf.total_mass <= 8 + rate_Ip(gf) + 1e-12


def test_sup_norm_examples():
    g = DyadicGrid(1, 1)
    a = GridFunction(g, [0.5, 0.5])
    assert sup_norm_dist(a, a) == 0.0
    assert sup_norm_dist(a, GridFunction(g, [0.25, 0.75])) == pytest.approx(0.25)
    assert sup_norm_dist(GridFunction.zero(DyadicGrid(1, 5)), GridFunction.linear(DyadicGrid(1, 5))) == pytest.approx(1.0)
    with pytest.raises(GridError):
        sup_norm_dist(a, GridFunction.zero(DyadicGrid(1, 2)))


def test_cell_oscillation_bounds_full_sup():
    # refining an increment can only reveal within-cell deviations up to the cell rise
    rng = np.random.default_rng(3)
    fine = GridFunction(DyadicGrid(1, 8), rng.exponential(size=256) / 256)
    coarse = GridFunction(DyadicGrid(1, 4), fine.masses.reshape(16, 16).sum(axis=1))
    ident_f = GridFunction.linear(DyadicGrid(1, 8))
    ident_c = GridFunction.linear(DyadicGrid(1, 4))
    gap = sup_norm_dist(fine, ident_f) - sup_norm_dist(coarse, ident_c)
    assert gap <= max_cell_oscillation(coarse) + 1 / 16
