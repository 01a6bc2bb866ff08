"""Reference predictors: per-event median, per-section median, linear regression.

The medians read the target event's already-observed sales and fall back to
training-set medians when there are none. The linear model ignores them and
maps ``[dte, row, col, event features]`` to price.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DataError, EventFeatureEncoder, SeatMap

KINDS = ("game_median", "section_median", "linear")
RIDGE = 1e-8


def game_median(observed_prices, fallback: float) -> float:
    p = np.asarray(observed_prices, dtype=np.float64)
    return float(np.median(p)) if p.size else float(fallback)


def section_median(observed, sections, section_fallback: dict, fallback: float) -> np.ndarray:
    """Per-query section medians.

    ``observed`` maps section name to observed prices of the target event,
    ``sections`` lists the section of each query seat.
    """
    cache = {}
    out = np.empty(len(sections))
    for i, s in enumerate(sections):
        if s not in cache:
            prices = observed.get(s, ())
            cache[s] = game_median(prices, section_fallback.get(s, fallback))
        out[i] = cache[s]
    return out


def linear_fit(X, y, ridge: float | None = RIDGE) -> np.ndarray:
    """Least squares with intercept via the normal equations.

    Returns ``[slopes..., intercept]``. A rank-deficient design is solved
    with ``ridge * I`` added, or rejected when ``ridge`` is None.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.size:
        raise ValueError(f"linear_fit: {X.shape[0]} rows but {y.size} targets")
    A = np.column_stack([X, np.ones(len(y))])
    AtA, Aty = A.T @ A, A.T @ y
    if np.linalg.matrix_rank(A) < A.shape[1]:
        if ridge is None:
            raise np.linalg.LinAlgError(f"linear_fit: design matrix has rank {np.linalg.matrix_rank(A)} < {A.shape[1]} columns")
        AtA = AtA + ridge * np.eye(A.shape[1])
    return np.linalg.solve(AtA, Aty)


def linear_predict(coef, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    coef = np.asarray(coef)
    if X.shape[1] + 1 != coef.size:
        raise ValueError(f"linear_predict: {X.shape[1]} features for {coef.size - 1} slopes")
    return X @ coef[:-1] + coef[-1]


@dataclass
class BaselineModel:
    kind: str
    seat_map: SeatMap
    fallback: float
    section_fallback: dict = field(default_factory=dict)
    coef: np.ndarray | None = None
    encoder: EventFeatureEncoder | None = None
    keep: np.ndarray | None = None  # encoded feature columns used by the linear model

    def _event_features(self, record):
        return self.encoder.transform_one(record).features[self.keep]

    def design(self, record, queries) -> np.ndarray:
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        f = np.broadcast_to(self._event_features(record), (len(q), int(self.keep.sum())))
        return np.column_stack([q[:, 2], q[:, 0], q[:, 1], f])

    def predict(self, record, partial_transactions, queries) -> np.ndarray:
        """Raw-price predictions for ``(row, col, dte)`` queries of one event."""
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        for r, c, _ in q:
            self.seat_map.index(int(r), int(c))
        partial = [t for t in partial_transactions]
        for t in partial:
            if t.event_id != record.event_id:
                raise DataError(f"partial transaction of event {t.event_id!r} passed for {record.event_id!r}")
        if self.kind == "game_median":
            return np.full(len(q), game_median([t.price for t in partial], self.fallback))
        if self.kind == "section_median":
            sec = self.seat_map.sections
            observed = {}
            for t in partial:
                observed.setdefault(sec[self.seat_map.index(t.row, t.col)], []).append(t.price)
            query_sections = [sec[self.seat_map.index(int(r), int(c))] for r, c, _ in q]
            return section_median(observed, query_sections, self.section_fallback, self.fallback)
        return linear_predict(self.coef, self.design(record, q))


def _reference_coding(encoder: EventFeatureEncoder) -> np.ndarray:
    """Drop the first level of each categorical so the intercept is identifiable."""
    drop = {f"{c}={lv[0]}" for c, lv in encoder.levels.items() if lv}
    return np.array([n not in drop for n in encoder.feature_names], dtype=bool)


def fit_baseline(kind, train_records, train_transactions, seat_map: SeatMap) -> BaselineModel:
    if kind not in KINDS:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {KINDS}")
    train_transactions = list(train_transactions)
    if not train_transactions:
        raise DataError(f"{kind}: no training transactions")
    prices = np.array([t.price for t in train_transactions])
    model = BaselineModel(kind, seat_map, float(np.median(prices)))
    if kind == "section_median":
        sec = seat_map.sections
        by_section = {}
        for t in train_transactions:
            by_section.setdefault(sec[seat_map.index(t.row, t.col)], []).append(t.price)
        model.section_fallback = {s: float(np.median(v)) for s, v in by_section.items()}
    elif kind == "linear":
        records = list(train_records)
        model.encoder = EventFeatureEncoder().fit(records)
        model.keep = _reference_coding(model.encoder)
        feats = {r.event_id: model._event_features(r) for r in records}
        X = np.array([[t.dte, t.row, t.col, *feats[t.event_id]] for t in train_transactions])
        model.coef = linear_fit(X, prices)
    return model
