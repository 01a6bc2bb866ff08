"""Turning a dataset split into model-ready arrays.

Everything fitted here (standardizers, bins, encoder, prior surface) sees
training-split transactions only and carries that split's fingerprint.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..coarsen import (
    GridLayout,
    TimeBinning,
    build_grid_layout,
    build_prior,
    build_time_binning,
    coarsen_event,
)
from ..domain import (
    DataError,
    EventFeatureEncoder,
    EventRecord,
    SeatMap,
    Standardizer,
    fingerprint,
    fit_standardizer,
)
from .network import ModelConfig, RefineContext


@dataclass
class EventBatch:
    event_ids: list
    grid_values: np.ndarray  # (B, L, m)
    grid_mask: np.ndarray
    seat_values: np.ndarray  # (B, L, n)
    seat_mask: np.ndarray
    features: np.ndarray     # (B, q)

    def __len__(self):
        return len(self.event_ids)

    def subset(self, idx):
        idx = np.asarray(idx)
        return EventBatch([self.event_ids[i] for i in idx], self.grid_values[idx], self.grid_mask[idx],
                          self.seat_values[idx], self.seat_mask[idx], self.features[idx])


def _coord_standardizer(values, fp):
    v = np.asarray(values, dtype=np.float64)
    if np.unique(v).size < 2:
        return Standardizer(float(v.mean()), 1.0, fp)
    return fit_standardizer(v, fp)


@dataclass
class Preprocessor:
    seat_map: SeatMap
    layout: GridLayout
    binning: TimeBinning
    price: Standardizer
    dte: Standardizer
    row: Standardizer
    col: Standardizer
    encoder: EventFeatureEncoder
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    prior: np.ndarray  # (m, L)
    fitted_on: str
    feature_low: np.ndarray | None = None   # training range; inputs are clipped into it
    feature_high: np.ndarray | None = None

    @property
    def L(self):
        return self.binning.L

    def encode_features(self, records) -> np.ndarray:
        infos = self.encoder.transform(records)
        if not infos:
            return np.zeros((0, self.encoder.q))
        raw = np.stack([i.features for i in infos])
        if self.feature_low is not None:
            # a nonlinear net extrapolates badly, and calendar-like features
            # always leave the training range in a forward backtest
            raw = np.clip(raw, self.feature_low, self.feature_high)
        return (raw - self.feature_mean) / self.feature_scale

    def coarsen(self, transactions):
        return coarsen_event(transactions, self.layout, self.binning, self.price, self.seat_map)

    def batch(self, records, transactions_by_event) -> EventBatch:
        """Coarsen each event; ``transactions_by_event`` maps event id to its sales."""
        records = list(records)
        L, m, n = self.L, self.layout.m, self.seat_map.n
        B = len(records)
        gv, gm = np.zeros((B, L, m)), np.zeros((B, L, m))
        sv, sm = np.zeros((B, L, n)), np.zeros((B, L, n))
        for b, rec in enumerate(records):
            coarse, seat = self.coarsen(transactions_by_event.get(rec.event_id, []))
            gv[b], gm[b] = coarse.values.T, coarse.mask.T
            sv[b], sm[b] = seat.values.T, seat.mask.T
        return EventBatch([r.event_id for r in records], gv, gm, sv, sm, self.encode_features(records))

    def grid_inputs(self, batch: EventBatch, visible=None) -> np.ndarray:
        """Imputed network input (B, L, gr, gc).

        Bins with index >= ``visible[b]`` are treated as not yet observed for
        event b and take the prior; ``None`` means everything is visible.
        """
        B, L, m = batch.grid_values.shape
        seen = batch.grid_mask.astype(bool)
        if visible is not None:
            seen = seen & (np.arange(L)[None, :] < np.asarray(visible)[:, None])[:, :, None]
        x = np.where(seen, batch.grid_values, self.prior.T[None, :, :])
        return x.reshape(B, L, self.layout.grid_rows, self.layout.grid_cols)

    def refine_context(self) -> RefineContext:
        coords = np.column_stack([self.row.standardize(self.seat_map.rows), self.col.standardize(self.seat_map.cols)])
        return RefineContext(self.layout.assignment(), coords, self.dte.standardize(self.binning.representative_dtes()))

    def configure(self, config: ModelConfig) -> ModelConfig:
        from dataclasses import replace

        return replace(config, n=self.seat_map.n, q=self.encoder.q, L=self.L,
                       grid_rows=self.layout.grid_rows, grid_cols=self.layout.grid_cols)


def fit_preprocessor(train_records, train_transactions, seat_map: SeatMap, config: ModelConfig) -> Preprocessor:
    train_records = list(train_records)
    if not train_records:
        raise DataError("training split has no events")
    if not train_transactions:
        raise DataError("training split has no transactions")
    ids = {r.event_id for r in train_records}
    stray = {t.event_id for t in train_transactions} - ids
    if stray:
        raise DataError(f"training transactions reference events outside the split: {sorted(stray)[:3]}")
    fp = fingerprint(train_transactions)
    price = fit_standardizer([t.price for t in train_transactions], fp)
    dte = _coord_standardizer([t.dte for t in train_transactions], fp)
    binning = build_time_binning(train_transactions, config.L, fingerprint=fp)
    layout = build_grid_layout(seat_map, config.grid_rows, config.grid_cols)
    encoder = EventFeatureEncoder().fit(train_records)
    raw = np.stack([i.features for i in encoder.transform(train_records)]) if encoder.q else np.zeros((len(train_records), 0))
    fmean = raw.mean(axis=0)
    fscale = raw.std(axis=0)
    fscale[fscale == 0] = 1.0

    by_event = {}
    for t in train_transactions:
        by_event.setdefault(t.event_id, []).append(t)
    coarse = [coarsen_event(by_event.get(r.event_id, []), layout, binning, price, seat_map)[0] for r in train_records]
    prior = build_prior(coarse)
    return Preprocessor(
        seat_map=seat_map, layout=layout, binning=binning, price=price, dte=dte,
        row=_coord_standardizer(seat_map.rows, fp), col=_coord_standardizer(seat_map.cols, fp),
        encoder=encoder, feature_mean=fmean, feature_scale=fscale, prior=prior, fitted_on=fp,
        feature_low=raw.min(axis=0), feature_high=raw.max(axis=0),
    )


def check_isolation(pre: Preprocessor, train_transactions, forbidden_event_ids=()):
    """Raise if any fitted statistic was not computed from exactly ``train_transactions``."""
    fp = fingerprint(train_transactions)
    for what, got in (("price standardizer", pre.price.fitted_on), ("time binning", pre.binning.fitted_on),
                      ("dte standardizer", pre.dte.fitted_on), ("prior surface", pre.fitted_on)):
        if got != fp:
            raise DataError(f"isolation check failed: {what} fitted on {got}, training split is {fp}")
    leaked = {t.event_id for t in train_transactions} & set(forbidden_event_ids)
    if leaked:
        raise DataError(f"isolation check failed: training transactions include held-out events {sorted(leaked)}")
    return True
