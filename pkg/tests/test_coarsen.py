import math
import statistics
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etpp.coarsen import (
    CoarseTensor,
    TimeBinning,
    assign_bin,
    build_grid_layout,
    build_prior,
    build_time_binning,
    coarsen_event,
    expand_to_seats,
    impute_input,
)
from etpp.domain import DataError, SeatMap, Standardizer, Transaction


def square_map(rows, cols):
    return SeatMap(tuple((r, c, "loge" if r <= rows // 2 else "balcony")
                         for r in range(1, rows + 1) for c in range(1, cols + 1)))


# -- grid layout ------------------------------------------------------------

def test_single_grid():
    lay = build_grid_layout(square_map(2, 2), 1, 1)
    assert lay.m == 1 and list(lay.sizes()) == [4]


def test_four_by_four_into_two_by_two():
    lay = build_grid_layout(square_map(4, 4), 2, 2)
    assert list(lay.sizes()) == [4, 4, 4, 4]


def test_three_by_three_into_two_by_two():
    lay = build_grid_layout(square_map(3, 3), 2, 2)
    assert sorted(lay.sizes().tolist(), reverse=True) == [4, 2, 2, 1]
    assert lay.sizes().tolist() == [4, 2, 2, 1]


def test_more_grids_than_seats_rejected():
    with pytest.raises(ValueError, match="grids"):
        build_grid_layout(square_map(2, 2), 3, 2)


@settings(max_examples=40, deadline=None)
@given(rows=st.integers(1, 12), cols=st.integers(1, 12), gr=st.integers(1, 5), gc=st.integers(1, 5))
def test_partition_exhaustive_disjoint(rows, cols, gr, gc):
    if gr * gc > rows * cols:
        return
    sm = square_map(rows, cols)
    lay = build_grid_layout(sm, gr, gc)
    members = [set(lay.seats_of(i).tolist()) for i in range(lay.m) if lay.owner[i] == i]
    assert sum(len(s) for s in members) == sm.n
    assert set().union(*members) == set(range(sm.n))
    assert all(s for s in members)


def test_irregular_map_empty_tile_aliases_neighbour():
    # an L-shaped venue: the top-right tile has no seats
    seats = [(r, c, "x") for r in range(1, 5) for c in range(1, 5) if not (r <= 2 and c >= 3)]
    lay = build_grid_layout(SeatMap(tuple(seats)), 2, 2)
    assert lay.sizes()[1] == 0
    assert lay.owner[1] in (0, 3)
    assert len(lay.seats_of(1)) > 0


# -- time binning -----------------------------------------------------------

def txns_with_dte(dtes, event="e"):
    return [Transaction(event, 1, i + 1, float(d), 10.0) for i, d in enumerate(dtes)]


def test_binning_uses_95th_percentile_of_log():
    dtes = np.arange(100)
    b = build_time_binning(txns_with_dte(dtes), 10)
    expected_upper = np.percentile(np.log(dtes + 1.0), 95)
    assert b.upper == pytest.approx(expected_upper, rel=1e-15)
    np.testing.assert_allclose(b.edges, np.arange(11) * expected_upper / 10, rtol=1e-15)


def test_binning_degenerate_rejected():
    with pytest.raises(DataError, match="degenerate"):
        build_time_binning(txns_with_dte([0, 0, 0]), 5)


def test_binning_empty_rejected():
    with pytest.raises(DataError):
        build_time_binning([], 5)


def test_assign_bin_hand_cases():
    b = TimeBinning(20, math.log(101))
    assert assign_bin(0.0, b) == 20
    assert assign_bin(9.0, b) == 11
    assert assign_bin(1e6, b) == 1
    assert assign_bin(100.0, b) == 1


@settings(max_examples=100, deadline=None)
@given(L=st.integers(1, 80), upper=st.floats(0.1, 8.0), a=st.floats(0, 1e4), b=st.floats(0, 1e4))
def test_assign_bin_monotone_and_total(L, upper, a, b):
    tb = TimeBinning(L, upper)
    lo, hi = min(a, b), max(a, b)
    ja, jb = assign_bin(lo, tb), assign_bin(hi, tb)
    assert 1 <= jb <= ja <= L


def test_representative_dte_is_log_bin_centre():
    b = TimeBinning(20, math.log(101))
    w = b.upper / 20
    assert b.log_range(1) == pytest.approx((b.upper - w, b.upper))
    assert b.representative_dte(1) == pytest.approx(math.exp((2 * b.upper - w) / 2) - 1, rel=1e-14)
    assert b.representative_dte(20) == pytest.approx(math.exp(w / 2) - 1, rel=1e-14)
    # each representative DTE falls back into its own bin
    for j in range(1, 21):
        assert assign_bin(b.representative_dte(j), b) == j


# -- coarsening -------------------------------------------------------------

IDENTITY = Standardizer(0.0, 1.0)


def test_grid_median_odd_and_even():
    sm = square_map(2, 2)
    lay = build_grid_layout(sm, 1, 1)
    b = TimeBinning(1, 1.0)
    odd = [Transaction("e", 1, 1, 0.0, 100.0), Transaction("e", 1, 2, 0.0, 200.0), Transaction("e", 2, 1, 0.0, 300.0)]
    c, _ = coarsen_event(odd, lay, b, IDENTITY, sm)
    assert c.values[0, 0] == 200.0
    c, _ = coarsen_event(odd + [Transaction("e", 2, 2, 0.0, 400.0)], lay, b, IDENTITY, sm)
    assert c.values[0, 0] == 250.0


def test_no_transactions_all_zero():
    sm = square_map(4, 4)
    lay = build_grid_layout(sm, 2, 2)
    c, s = coarsen_event([], lay, TimeBinning(3, 2.0), IDENTITY, sm)
    for arr in (c.values, c.mask, s.values, s.mask):
        assert not arr.any()


def test_unknown_seat_rejected():
    sm = square_map(2, 2)
    lay = build_grid_layout(sm, 1, 1)
    with pytest.raises(DataError, match="seat map"):
        coarsen_event([Transaction("e", 9, 9, 0.0, 1.0)], lay, TimeBinning(1, 1.0), IDENTITY, sm)


def brute_force_coarsen(txns, sm, layout, binning, std):
    groups = defaultdict(list)
    for t in txns:
        s = sm.index(t.row, t.col)
        j = binning.L - math.floor(math.log1p(t.dte) / (binning.upper / binning.L))
        j = min(max(j, 1), binning.L)
        groups[(int(layout.seat_grid[s]), j - 1)].append((t.price - std.mean) / std.stdev)
    vals = np.zeros((layout.m, binning.L))
    mask = np.zeros((layout.m, binning.L))
    for (g, j), ps in groups.items():
        vals[g, j] = statistics.median(ps)
        mask[g, j] = 1
    return vals, mask


def random_instance(rng):
    rows, cols = int(rng.integers(1, 12)), int(rng.integers(1, 12))
    sm = square_map(rows, cols)
    gr, gc = int(rng.integers(1, min(rows, 4) + 1)), int(rng.integers(1, min(cols, 4) + 1))
    lay = build_grid_layout(sm, gr, gc)
    k = int(rng.integers(0, sm.n + 1))
    seats = rng.choice(sm.n, size=k, replace=False)
    txns = [Transaction("e", sm.seats[s][0], sm.seats[s][1], float(rng.exponential(10)),
                        float(rng.integers(20, 400))) for s in seats]
    binning = TimeBinning(int(rng.integers(1, 25)), float(rng.uniform(0.5, 5)))
    std = Standardizer(float(rng.uniform(50, 150)), float(rng.uniform(10, 60)))
    return txns, sm, lay, binning, std


def test_coarsen_matches_brute_force_randomized():
    rng = np.random.default_rng(99)
    for _ in range(300):
        txns, sm, lay, binning, std = random_instance(rng)
        c, s = coarsen_event(txns, lay, binning, std, sm)
        vals, mask = brute_force_coarsen(txns, sm, lay, binning, std)
        np.testing.assert_array_equal(c.mask, mask)
        np.testing.assert_allclose(c.values, vals, rtol=1e-14, atol=1e-14)
        if len(set(lay.sizes().tolist())) == 1:
            assert c.mask.mean() >= s.mask.mean()
        assert (s.mask.sum(axis=1) <= 1).all()


def test_density_can_invert_with_unequal_tiles():
    # 3x3 seats in 2x2 tiles (sizes 4,2,2,1): filling the big tile gives a
    # denser seat mask than grid mask, so the density property needs equal tiles
    sm = square_map(3, 3)
    lay = build_grid_layout(sm, 2, 2)
    big = lay.seats_of(0)
    txns = [Transaction("e", sm.seats[s][0], sm.seats[s][1], 0.0, 10.0) for s in big]
    c, s = coarsen_event(txns, lay, TimeBinning(1, 1.0), IDENTITY, sm)
    assert c.mask.mean() == 0.25
    assert s.mask.mean() == pytest.approx(4 / 9)


def test_prior_fallbacks():
    c1 = CoarseTensor(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[1, 0], [0, 0]]))
    c2 = CoarseTensor(np.array([[3.0, 5.0], [0.0, 0.0]]), np.array([[1, 1], [0, 0]]))
    prior = build_prior([c1, c2])
    assert prior[0, 0] == 2.0          # median of {1, 3}
    assert prior[0, 1] == 5.0
    assert prior[1, 0] == prior[1, 1] == 0.0


def test_prior_grid_fallback():
    c1 = CoarseTensor(np.array([[1.0, 0.0, 7.0]]), np.array([[1, 0, 1]]))
    assert build_prior([c1])[0, 1] == 4.0


def test_impute_cases():
    rng = np.random.default_rng(5)
    vals, prior = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    np.testing.assert_array_equal(impute_input(CoarseTensor(vals, np.ones((3, 4))), prior), vals)
    np.testing.assert_array_equal(impute_input(CoarseTensor(vals, np.zeros((3, 4))), prior), prior)
    mask = (rng.random((3, 4)) < 0.5).astype(float)
    out = impute_input(CoarseTensor(vals, mask), prior)
    for i in range(3):
        for j in range(4):
            assert out[i, j] == (vals[i, j] if mask[i, j] else prior[i, j])


def test_expand_duplicates_grid_price():
    sm = SeatMap(((1, 1, "a"), (1, 2, "a"), (1, 3, "b"), (1, 4, "b")))
    lay = build_grid_layout(sm, 1, 2)
    coords = np.zeros((4, 2))
    out = expand_to_seats(np.array([5.0, 7.0]), lay, coords, 0.3)
    np.testing.assert_array_equal(out[:, 0], [5, 5, 7, 7])
    np.testing.assert_array_equal(out[:, 1], 0.3)
    with pytest.raises(ValueError):
        expand_to_seats(np.array([1.0, 2.0, 3.0]), lay, coords, 0.3)


def test_expand_then_aggregate_recovers_prediction():
    rng = np.random.default_rng(8)
    sm = square_map(7, 9)
    lay = build_grid_layout(sm, 3, 2)
    pred = rng.normal(size=lay.m)
    out = expand_to_seats(pred, lay, np.zeros((sm.n, 2)), 0.0)
    for i in range(lay.m):
        members = lay.seats_of(i)
        assert np.all(out[members, 0] == pred[i])
        assert np.median(out[members, 0]) == pred[i]
