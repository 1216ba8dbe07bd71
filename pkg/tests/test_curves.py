import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fbds.curves import (
    CurveNorm,
    FunctionalSeries,
    Grid,
    TickSheet,
    cidr_transform,
    curve_distance,
    distance_matrix,
    pooled_sd,
    read_series_csv,
    read_tick_csv,
    write_series_csv,
)
from fbds.errors import DegenerateScaleError, DimensionError, DomainError, ValidationError
from oracles import naive_distance, naive_distance_matrix

NORMS = list(CurveNorm)


def test_grid_validation():
    with pytest.raises(ValidationError):
        Grid([0.0, 0.5, 0.5])
    with pytest.raises(ValidationError):
        Grid([0.0, np.inf])
    assert Grid.uniform(5).size == 5


@pytest.mark.parametrize("norm", NORMS)
def test_identical_curves_have_zero_distance(norm, rng):
    g = Grid.uniform(17)
    a = rng.normal(size=17)
    assert curve_distance(a, a, g, norm) == 0.0


def test_constant_difference_l2_is_one():
    g = Grid.uniform(50)
    a = np.full(50, 3.0)
    assert curve_distance(a, a - 1.0, g, "l2") == pytest.approx(1.0, abs=1e-12)


def test_linear_difference_l1_against_fine_quadrature():
    g = Grid.uniform(101)
    u = g.points
    got = curve_distance(u, np.zeros_like(u), g, "l1")
    fine = np.linspace(0, 1, 200_001)
    oracle = np.trapezoid(fine, fine)
    assert abs(got - 0.5) < 1e-4
    assert abs(got - oracle) < 1e-4


def test_distance_rejects_mismatched_length():
    with pytest.raises(DimensionError):
        curve_distance(np.zeros(3), np.zeros(4), Grid.uniform(3))


@pytest.mark.parametrize("norm", ["l1", "l2", "linf"])
def test_distance_matches_naive_trapezoid(norm, rng):
    pts = np.sort(rng.uniform(0, 2, size=9))
    g = Grid(pts)
    a, b = rng.normal(size=(2, 9))
    assert curve_distance(a, b, g, norm) == pytest.approx(naive_distance(a, b, pts, norm), rel=1e-12)


@pytest.mark.parametrize("norm", NORMS)
def test_distance_matrix_matches_double_loop(norm, rng):
    g = Grid.uniform(20)
    s = FunctionalSeries(g, rng.normal(size=(5, 20)))
    dm = distance_matrix(s, norm)
    loop = np.array([[curve_distance(s.values[i], s.values[j], g, norm) for j in range(5)] for i in range(5)])
    assert np.array_equal(dm, loop)
    assert np.allclose(dm, naive_distance_matrix(s.values, g.points, norm.value), rtol=1e-12, atol=0)
    assert np.array_equal(dm, dm.T)
    assert np.all(np.diag(dm) == 0)


def test_distance_matrix_identical_pair():
    s = FunctionalSeries(Grid.uniform(4), np.ones((2, 4)))
    assert np.array_equal(distance_matrix(s), np.zeros((2, 2)))


def test_single_point_grid_reduces_to_absolute_difference(rng):
    x = rng.normal(size=12)
    s = FunctionalSeries.from_scalar(x)
    for norm in NORMS:
        dm = distance_matrix(s, norm)
        assert np.array_equal(dm, np.abs(x[:, None] - x[None, :]))


curves3 = arrays(np.float64, (3, 8), elements=st.floats(-100, 100, allow_nan=False, width=64))


@settings(max_examples=60, deadline=None)
@given(curves3, st.sampled_from(NORMS))
def test_triangle_inequality(x, norm):
    g = Grid.uniform(8)
    a, b, c = x
    ab = curve_distance(a, b, g, norm)
    bc = curve_distance(b, c, g, norm)
    ac = curve_distance(a, c, g, norm)
    assert ac <= ab + bc + 1e-9 * (1 + ab + bc)


@settings(max_examples=60, deadline=None)
@given(curves3, st.floats(-50, 50, allow_nan=False), st.sampled_from(NORMS))
def test_homogeneity(x, c, norm):
    g = Grid.uniform(8)
    a, b, _ = x
    lhs = curve_distance(c * a, c * b, g, norm)
    rhs = abs(c) * curve_distance(a, b, g, norm)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_pooled_sd_hand_value():
    s = FunctionalSeries(Grid.uniform(2), [[0.0, 0.0], [2.0, 2.0]])
    assert pooled_sd(s) == pytest.approx(math.sqrt(4 / 3), rel=1e-15)
    s = FunctionalSeries(Grid.uniform(4), [[0.0, 2.0, 0.0, 2.0]])
    assert pooled_sd(s) == pytest.approx(math.sqrt(4 / 3), rel=1e-15)


def test_pooled_sd_degenerate():
    with pytest.raises(DegenerateScaleError):
        pooled_sd(FunctionalSeries(Grid.uniform(3), np.full((4, 3), 1.5)))


def test_pooled_sd_standard_normal():
    x = np.random.default_rng(1).standard_normal((1, 100_000))
    s = FunctionalSeries(Grid.uniform(100_000), x)
    assert 0.98 <= pooled_sd(s) <= 1.02


# -- CIDR ---------------------------------------------------------------


def test_cidr_constant_price_gives_zero_curve():
    sheet = TickSheet((("d1", [(0, 50.0), (10, 50.0), (20, 50.0)]),), np.array([0.0, 5.0, 20.0]))
    assert np.array_equal(cidr_transform(sheet).values, np.zeros((1, 3)))


def test_cidr_exponential_step():
    p1 = 100 * math.exp(0.01)
    sheet = TickSheet((("d1", [(0, 100.0), (1, p1), (2, p1), (3, p1)]),), np.arange(4.0))
    got = cidr_transform(sheet).values[0]
    assert got[0] == 0.0
    assert np.allclose(got[1:], 1.0, atol=1e-12)


def test_cidr_interpolates_between_ticks():
    sheet = TickSheet((("d1", [(0, 100.0), (30, 110.0)]),), np.array([0.0, 15.0, 30.0]))
    got = cidr_transform(sheet).values[0]
    expected = [0.0, 100 * math.log(1.05), 100 * math.log(1.10)]
    assert np.allclose(got, expected, rtol=1e-13, atol=0)


def test_cidr_clamps_outside_observed_range():
    sheet = TickSheet((("d1", [(10, 100.0), (20, 120.0)]),), np.array([0.0, 5.0, 20.0, 30.0]))
    got = cidr_transform(sheet).values[0]
    assert got[0] == 0.0 and got[1] == 0.0
    assert got[2] == pytest.approx(100 * math.log(1.2)) and got[3] == got[2]


def test_cidr_scale_invariant(rng):
    ticks = [(float(t), float(p)) for t, p in zip(np.arange(0, 60, 7), rng.uniform(10, 20, 9))]
    clock = np.linspace(0, 56, 30)
    a = cidr_transform(TickSheet((("d", ticks),), clock)).values
    b = cidr_transform(TickSheet((("d", [(t, 3.7 * p) for t, p in ticks]),), clock)).values
    assert np.allclose(a, b, atol=1e-12)


def test_tick_validation():
    with pytest.raises(DomainError, match="d2"):
        TickSheet((("d1", [(0, 1.0)]), ("d2", [(0, 1.0), (1, 0.0)])), np.array([0.0]))
    with pytest.raises(ValidationError, match="d1.*no ticks"):
        TickSheet((("d1", []),), np.array([0.0]))


# -- CSV ------------------------------------------------------------------


def test_series_csv_round_trip(tmp_path, rng):
    s = FunctionalSeries(Grid.uniform(7), rng.normal(size=(4, 7)))
    path = tmp_path / "s.csv"
    write_series_csv(s, path)
    back = read_series_csv(path)
    assert back.grid == s.grid
    assert np.array_equal(back.values, s.values)
    lines = path.read_text().splitlines()
    assert len(lines) == 5 and all(len(l.split(",")) == 7 for l in lines)


def test_series_csv_ragged(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,1,2\n1,2\n")
    with pytest.raises(ValidationError, match="line 2"):
        read_series_csv(path)


def test_tick_csv(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("day_id,timestamp_seconds,price\nA,0,100\nA,30,110\nB,0,50\n")
    sheet = read_tick_csv(path, np.array([0.0, 15.0, 30.0]))
    assert [d.day_id for d in sheet.days] == ["A", "B"]
    out = cidr_transform(sheet).values
    assert np.allclose(out[1], 0.0)
