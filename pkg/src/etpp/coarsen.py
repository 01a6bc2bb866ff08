"""Seat/time coarsening, input imputation, and grid-to-seat expansion."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import DataError, SeatMap, Standardizer


@dataclass(frozen=True)
class GridLayout:
    """Rectangular tiling of the seat map into ``grid_rows * grid_cols`` grids.

    ``seat_grid[s]`` is the grid of seat ``s`` (seat-map order). A tile that
    covers no seat borrows its nearest non-empty neighbour, recorded in
    ``owner``; for rectangular venues every grid owns itself.
    """
    grid_rows: int
    grid_cols: int
    seat_grid: np.ndarray
    owner: np.ndarray

    @property
    def m(self):
        return self.grid_rows * self.grid_cols

    @property
    def n(self):
        return int(self.seat_grid.size)

    def seats_of(self, i):
        return np.flatnonzero(self.seat_grid == self.owner[i])

    def sizes(self):
        return np.bincount(self.seat_grid, minlength=self.m)

    def assignment(self):
        """(m, n) 0/1 matrix; row i selects the seats that read grid i's value."""
        A = np.zeros((self.m, self.n))
        A[self.seat_grid, np.arange(self.n)] = 1.0
        return A

    def to_dict(self):
        return {
            "grid_rows": self.grid_rows,
            "grid_cols": self.grid_cols,
            "seat_grid": self.seat_grid.tolist(),
            "owner": self.owner.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["grid_rows"]), int(d["grid_cols"]),
                   np.asarray(d["seat_grid"], dtype=np.int64), np.asarray(d["owner"], dtype=np.int64))


def _tile_index(values, parts):
    lo, hi = int(values.min()), int(values.max())
    chunks = np.array_split(np.arange(lo, hi + 1), parts)
    lookup = {}
    for k, chunk in enumerate(chunks):
        for v in chunk:
            lookup[int(v)] = k
    return np.array([lookup[int(v)] for v in values])


def build_grid_layout(seat_map: SeatMap, grid_rows: int, grid_cols: int) -> GridLayout:
    if grid_rows < 1 or grid_cols < 1:
        raise ValueError(f"grid shape must be positive, got {grid_rows}x{grid_cols}")
    if grid_rows * grid_cols > seat_map.n:
        raise ValueError(f"{grid_rows * grid_cols} grids requested for only {seat_map.n} seats")
    tr = _tile_index(seat_map.rows, grid_rows)
    tc = _tile_index(seat_map.cols, grid_cols)
    seat_grid = tr * grid_cols + tc
    sizes = np.bincount(seat_grid, minlength=grid_rows * grid_cols)
    filled = np.flatnonzero(sizes)
    owner = np.arange(grid_rows * grid_cols)
    for i in np.flatnonzero(sizes == 0):
        r, c = divmod(i, grid_cols)
        fr, fc = np.divmod(filled, grid_cols)
        dist = (fr - r) ** 2 + (fc - c) ** 2
        owner[i] = filled[int(np.argmin(dist))]
    return GridLayout(grid_rows, grid_cols, seat_grid.astype(np.int64), owner.astype(np.int64))


@dataclass(frozen=True)
class TimeBinning:
    """L equal-width bins on [0, upper] in log(dte + 1).

    Bin 1 holds the largest DTEs (earliest sales) and bin L the sales just
    before the event, so increasing bin index runs forward in time.
    """
    L: int
    upper: float
    fitted_on: str = ""

    @property
    def width(self):
        return self.upper / self.L

    @property
    def edges(self):
        return np.linspace(0.0, self.upper, self.L + 1)

    def log_range(self, j):
        """(lo, hi) of bin j in log(dte + 1)."""
        if not 1 <= j <= self.L:
            raise ValueError(f"bin index {j} outside 1..{self.L}")
        w = self.width
        return (self.L - j) * w, (self.L - j + 1) * w

    def representative_dte(self, j):
        lo, hi = self.log_range(j)
        return math.exp((lo + hi) / 2.0) - 1.0

    def representative_dtes(self):
        return np.array([self.representative_dte(j) for j in range(1, self.L + 1)])

    def assign(self, dte):
        """Vectorized ``assign_bin``."""
        dte = np.asarray(dte, dtype=np.float64)
        if np.any(dte < 0):
            raise ValueError("dte must be >= 0")
        j = self.L - np.floor(np.log1p(dte) / self.width)
        return np.clip(j, 1, self.L).astype(np.int64)

    def to_dict(self):
        return {"L": self.L, "upper": self.upper, "fitted_on": self.fitted_on}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["L"]), float(d["upper"]), d.get("fitted_on", ""))


def build_time_binning(transactions, L: int, coverage: float = 0.95, fingerprint: str = "") -> TimeBinning:
    if L < 1:
        raise ValueError(f"bin count must be >= 1, got {L}")
    if not 0 < coverage <= 1:
        raise ValueError(f"coverage must lie in (0, 1], got {coverage}")
    dtes = np.array([t.dte for t in transactions], dtype=np.float64)
    if dtes.size == 0:
        raise DataError("cannot build time bins from zero transactions")
    upper = float(np.percentile(np.log1p(dtes), 100.0 * coverage))
    if upper <= 0:
        raise DataError(
            f"degenerate time binning: {100 * coverage:g}th percentile of log(dte+1) is 0 "
            "(nearly all sales at dte = 0)"
        )
    return TimeBinning(L, upper, fingerprint)


def assign_bin(dte: float, binning: TimeBinning) -> int:
    """Bin of a sale; DTEs past the covered range land in bin 1."""
    return int(binning.assign(dte))


@dataclass(frozen=True)
class CoarseTensor:
    values: np.ndarray  # (m, L)
    mask: np.ndarray    # (m, L) of 0/1


@dataclass(frozen=True)
class SeatTensor:
    values: np.ndarray  # (n, L)
    mask: np.ndarray


def coarsen_event(transactions, layout: GridLayout, binning: TimeBinning,
                  standardizer: Standardizer, seat_map: SeatMap):
    """Grid-bin medians and seat-bin prices of one event, both standardized."""
    m, n, L = layout.m, seat_map.n, binning.L
    seat_vals = np.zeros((n, L))
    seat_mask = np.zeros((n, L))
    if transactions:
        ids = {t.event_id for t in transactions}
        if len(ids) > 1:
            raise DataError(f"coarsen_event got transactions of several events: {sorted(ids)}")
        seats = np.array([seat_map.index(t.row, t.col) for t in transactions])
        bins = binning.assign([t.dte for t in transactions]) - 1
        prices = standardizer.standardize([t.price for t in transactions])
        seat_vals[seats, bins] = prices
        seat_mask[seats, bins] = 1.0
    else:
        seats = bins = prices = np.zeros(0, dtype=np.int64)

    grid_vals = np.zeros((m, L))
    grid_mask = np.zeros((m, L))
    if len(prices):
        keys = layout.seat_grid[seats] * L + bins
        order = np.argsort(keys, kind="stable")
        keys, sorted_prices = keys[order], prices[order]
        starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
        ends = np.r_[starts[1:], keys.size]
        for s, e in zip(starts, ends):
            g, j = divmod(int(keys[s]), L)
            grid_vals[g, j] = np.median(sorted_prices[s:e])
            grid_mask[g, j] = 1.0
    aliased = layout.owner != np.arange(m)
    if aliased.any():
        grid_vals[aliased] = grid_vals[layout.owner[aliased]]
        grid_mask[aliased] = grid_mask[layout.owner[aliased]]
    return CoarseTensor(grid_vals, grid_mask), SeatTensor(seat_vals, seat_mask)


def build_prior(coarse_tensors) -> np.ndarray:
    """Per-(grid, bin) median of observed coarse values across events.

    Gaps fall back to the grid's median over all bins, then to 0 (the
    standardized centre).
    """
    vals = np.stack([c.values for c in coarse_tensors])
    mask = np.stack([c.mask for c in coarse_tensors]).astype(bool)
    _, m, L = vals.shape
    prior = np.zeros((m, L))
    for i in range(m):
        grid_obs = vals[:, i, :][mask[:, i, :]]
        grid_fallback = float(np.median(grid_obs)) if grid_obs.size else 0.0
        for j in range(L):
            obs = vals[:, i, j][mask[:, i, j]]
            prior[i, j] = float(np.median(obs)) if obs.size else grid_fallback
    return prior


def impute_input(coarse: CoarseTensor, prior: np.ndarray) -> np.ndarray:
    if prior.shape != coarse.values.shape:
        raise ValueError(f"prior shape {prior.shape} != coarse shape {coarse.values.shape}")
    return np.where(coarse.mask.astype(bool), coarse.values, prior)


def expand_to_seats(grid_prediction, layout: GridLayout, seat_coords, dte_value) -> np.ndarray:
    """(n, 4) refine input: [grid price, bin DTE, seat row, seat col].

    ``seat_coords`` is (n, 2) and ``dte_value`` a scalar, both already
    standardized.
    """
    g = np.asarray(grid_prediction, dtype=np.float64)
    if g.shape != (layout.m,):
        raise ValueError(f"grid prediction length {g.shape} != m = {layout.m}")
    seat_coords = np.asarray(seat_coords, dtype=np.float64)
    if seat_coords.shape != (layout.n, 2):
        raise ValueError(f"seat coordinates shape {seat_coords.shape} != ({layout.n}, 2)")
    out = np.empty((layout.n, 4))
    out[:, 0] = g[layout.seat_grid]
    out[:, 1] = dte_value
    out[:, 2:] = seat_coords
    return out
