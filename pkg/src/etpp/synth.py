"""Seeded synthetic ticket market.

Each event sells every seat independently with probability ``sell_through``;
a sold seat gets one sale whose days-to-event is exponential with rate
``dte_decay``. The price of a sale is

    base * spatial(seat) * temporal(dte) * event_multiplier * (1 + noise)

spatial(seat) = 1 / (1 + spatial_decay * distance to the front-row centre)
temporal(dte) = 1 + temporal_drift * exp(-dte / temporal_scale)
event_multiplier = exp(team, opponent, weekend and season effects + latent)

The latent term is event-specific demand the features do not explain; it
can only be learned from the event's own early sales.
"""
from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .domain import Dataset, EventRecord, SeatMap, Transaction

OPPONENT_EFFECTS = {"rival": 0.35, "contender": 0.2, "average": 0.0, "rebuilding": -0.15}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    n_events: int = 60
    rows: int = 16
    cols: int = 16
    base_price: float = 80.0
    spatial_decay: float = 0.15
    temporal_drift: float = 0.3
    temporal_scale: float = 7.0
    team_weight: float = 0.6
    opponent_effects: dict = field(default_factory=lambda: dict(OPPONENT_EFFECTS))
    weekend_weight: float = 0.15
    season_weight: float = 0.2
    event_noise: float = 0.1
    noise: float = 0.08
    sell_through: float = 0.8
    dte_decay: float = 0.1
    start_date: str = "2018-10-20"
    event_spacing_days: int = 3

    def __post_init__(self):
        problems = []
        if self.n_events < 1:
            problems.append(f"n_events must be >= 1 (got {self.n_events})")
        if self.rows < 1 or self.cols < 1:
            problems.append("seat grid must be at least 1x1")
        if not 0 < self.sell_through <= 1:
            problems.append(f"sell_through must lie in (0, 1] (got {self.sell_through})")
        for name in ("base_price", "dte_decay", "temporal_scale", "event_spacing_days"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0 (got {getattr(self, name)})")
        for name in ("spatial_decay", "noise", "event_noise", "temporal_drift"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0 (got {getattr(self, name)})")
        if not self.opponent_effects:
            problems.append("opponent_effects must name at least one opponent tier")
        try:
            dt.date.fromisoformat(self.start_date)
        except ValueError:
            problems.append(f"start_date must be ISO-8601 (got {self.start_date!r})")
        if problems:
            raise ValueError("invalid SynthConfig: " + "; ".join(problems))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def seat_map_for(config: SynthConfig) -> SeatMap:
    half = max(1, config.rows // 2)
    return SeatMap(tuple(
        (r, c, "loge" if r <= half else "balcony")
        for r in range(1, config.rows + 1) for c in range(1, config.cols + 1)
    ))


def spatial_value(row, col, config: SynthConfig):
    centre = (config.cols + 1) / 2.0
    dist = np.sqrt((np.asarray(row) - 1.0) ** 2 + (np.asarray(col) - centre) ** 2)
    return 1.0 / (1.0 + config.spatial_decay * dist)


def temporal_value(dte, config: SynthConfig):
    return 1.0 + config.temporal_drift * np.exp(-np.asarray(dte) / config.temporal_scale)


def _event_table(config: SynthConfig):
    """Event dates, attributes and log-multipliers (explained, latent)."""
    rng = np.random.default_rng([config.seed, 0])
    start = dt.date.fromisoformat(config.start_date)
    tiers = list(config.opponent_effects)
    strength = 0.5
    rows = []
    for i in range(config.n_events):
        strength = float(np.clip(strength + rng.normal(0, 0.06), 0.15, 0.85))
        opponent = tiers[int(rng.integers(len(tiers)))]
        latent = float(rng.normal(0, config.event_noise))
        date = start + dt.timedelta(days=i * config.event_spacing_days)
        season_day = i * config.event_spacing_days
        weekend = int(date.weekday() >= 4)
        explained = (config.team_weight * (strength - 0.5)
                     + config.opponent_effects[opponent]
                     + config.weekend_weight * weekend
                     + config.season_weight * season_day / 180.0)
        attrs = {
            "team_strength": f"{strength:.4f}",
            "opponent": opponent,
            "weekend": str(weekend),
            "days_into_season": str(season_day),
        }
        rows.append((f"E{i + 1:03d}", date, attrs, explained, latent))
    return rows


def event_multiplier(explained, latent):
    return math.exp(explained + latent)


def generate(config: SynthConfig) -> Dataset:
    seat_map = seat_map_for(config)
    rows, cols = seat_map.rows, seat_map.cols
    spatial = spatial_value(rows, cols, config)
    events, txns = [], []
    for i, (eid, date, attrs, explained, latent) in enumerate(_event_table(config)):
        events.append(EventRecord(eid, date, attrs))
        rng = np.random.default_rng([config.seed, 1, i])
        sold = rng.random(seat_map.n) < config.sell_through
        dte = rng.exponential(1.0 / config.dte_decay, size=seat_map.n)
        eps = rng.normal(0.0, 1.0, size=seat_map.n)
        mult = event_multiplier(explained, latent)
        price = config.base_price * spatial * temporal_value(dte, config) * mult * np.maximum(1.0 + config.noise * eps, 0.05)
        for s in np.flatnonzero(sold):
            txns.append(Transaction(eid, int(rows[s]), int(cols[s]), float(dte[s]), float(price[s])))
    return Dataset(txns, events, seat_map)


def write_dataset(dataset: Dataset, out_dir, config: SynthConfig):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset.save(out)
    (out / "synth_config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def octave_bands(max_dte):
    edges = [0.0, 1.0]
    while edges[-1] <= max_dte:
        edges.append(edges[-1] * 2)
    return np.array(edges)


def describe(dataset: Dataset) -> dict:
    """Summary for documentation plots: DTE histogram, sale rates, price quantiles."""
    if not dataset.transactions:
        raise ValueError("describe needs a non-empty dataset")
    dtes = np.array([t.dte for t in dataset.transactions])
    prices = np.array([t.price for t in dataset.transactions])
    edges = octave_bands(dtes.max())
    counts, _ = np.histogram(dtes, bins=edges)
    daily_edges = np.arange(0, math.floor(dtes.max()) + 2)
    daily, _ = np.histogram(dtes, bins=daily_edges)
    K, n = len(dataset.events), dataset.seat_map.n
    per_seat = np.zeros(n)
    for t in dataset.transactions:
        per_seat[dataset.seat_map.index(t.row, t.col)] += 1
    qs = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)
    return {
        "n_events": K,
        "n_seats": n,
        "n_transactions": len(dataset.transactions),
        "sale_rate": len(dataset.transactions) / (K * n),
        "per_seat_sale_rate": per_seat / K,
        "octave_edges": edges,
        "octave_counts": counts,
        "octave_density": counts / np.diff(edges),
        "daily_edges": daily_edges,
        "daily_counts": daily,
        "price_quantile_levels": qs,
        "price_quantiles": np.quantile(prices, qs),
    }
