"""Market records, CSV ingestion, event-feature encoding and standardization."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

TRANSACTION_HEADER = ("event_id", "row", "col", "dte", "price")
SEATMAP_HEADER = ("row", "col", "section")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Transaction:
    event_id: str
    row: int
    col: int
    dte: float
    price: float

    def __post_init__(self):
        if self.row < 1 or self.col < 1:
            raise DataError(f"seat coordinates must be >= 1, got ({self.row}, {self.col})")
        if not math.isfinite(self.dte) or self.dte < 0:
            raise DataError(f"dte must be finite and >= 0, got {self.dte}")
        if not math.isfinite(self.price) or self.price <= 0:
            raise DataError(f"price must be finite and > 0, got {self.price}")

    @property
    def seat(self):
        return (self.row, self.col)


@dataclass(frozen=True)
class EventRecord:
    """One row of events.csv before encoding."""
    event_id: str
    event_date: dt.date
    attributes: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EventInfo:
    event_id: str
    event_date: dt.date
    features: np.ndarray
    feature_names: tuple


@dataclass(frozen=True)
class SeatMap:
    seats: tuple  # (row, col, section) in a fixed order

    def __post_init__(self):
        if not self.seats:
            raise DataError("seat map is empty")
        coords = [(r, c) for r, c, _ in self.seats]
        if len(set(coords)) != len(coords):
            raise DataError("seat map has duplicate coordinates")
        object.__setattr__(self, "_index", {rc: i for i, rc in enumerate(coords)})

    @property
    def n(self):
        return len(self.seats)

    @property
    def rows(self):
        return np.array([s[0] for s in self.seats])

    @property
    def cols(self):
        return np.array([s[1] for s in self.seats])

    @property
    def sections(self):
        return [s[2] for s in self.seats]

    @property
    def extent(self):
        return int(self.rows.max()), int(self.cols.max())

    def index(self, row, col):
        try:
            return self._index[(row, col)]
        except KeyError:
            raise DataError(f"seat (row={row}, col={col}) is not in the seat map") from None

    def __contains__(self, rc):
        return tuple(rc) in self._index

    def validate(self, transactions):
        for t in transactions:
            self.index(t.row, t.col)


# -- ingestion --------------------------------------------------------------

def _check_header(found, expected, path):
    if found is None or tuple(h.strip() for h in found[: len(expected)]) != expected:
        raise DataError(f"{path}: line 1: expected header {','.join(expected)}, got {found}")


def load_transactions(path) -> list[Transaction]:
    """Parse transactions.csv. Any bad row fails the whole load."""
    path = Path(path)
    out, seen = [], {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), TRANSACTION_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(TRANSACTION_HEADER):
                raise DataError(f"{path}: line {lineno}: expected 5 fields, got {len(row)}")
            try:
                t = Transaction(row[0].strip(), int(row[1]), int(row[2]), float(row[3]), float(row[4]))
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            key = (t.event_id, t.row, t.col)
            if key in seen:
                raise DataError(
                    f"{path}: line {lineno}: seat (row={t.row}, col={t.col}) of event "
                    f"{t.event_id!r} already sold on line {seen[key]}"
                )
            seen[key] = lineno
            out.append(t)
    return out


def save_transactions(path, transactions):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSACTION_HEADER)
        for t in transactions:
            w.writerow([t.event_id, t.row, t.col, repr(float(t.dte)), repr(float(t.price))])


def load_events(path) -> list[EventRecord]:
    path = Path(path)
    out, seen = [], set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        _check_header(header, ("event_id", "event_date"), path)
        names = [h.strip() for h in header[2:]]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            eid = row[0].strip()
            if eid in seen:
                raise DataError(f"{path}: line {lineno}: duplicate event_id {eid!r}")
            try:
                date = dt.date.fromisoformat(row[1].strip())
            except ValueError:
                raise DataError(f"{path}: line {lineno}: bad ISO-8601 event_date {row[1]!r}") from None
            seen.add(eid)
            out.append(EventRecord(eid, date, dict(zip(names, (c.strip() for c in row[2:])))))
    return out


def save_events(path, events):
    names = list(events[0].attributes) if events else []
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_id", "event_date", *names])
        for e in events:
            w.writerow([e.event_id, e.event_date.isoformat(), *(e.attributes[n] for n in names)])


def load_seatmap(path) -> SeatMap:
    path = Path(path)
    seats = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), SEATMAP_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                r, c = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise DataError(f"{path}: line {lineno}: bad seat row {row}") from None
            if r < 1 or c < 1:
                raise DataError(f"{path}: line {lineno}: seat coordinates must be >= 1")
            seats.append((r, c, row[2].strip() if len(row) > 2 else ""))
    try:
        return SeatMap(tuple(seats))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_seatmap(path, seat_map: SeatMap):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SEATMAP_HEADER)
        for r, c, s in seat_map.seats:
            w.writerow([r, c, s])


# -- event features ---------------------------------------------------------

def _is_number(s):
    try:
        return math.isfinite(float(s))
    except (TypeError, ValueError):
        return False


class EventFeatureEncoder:
    """One-hot encode categorical event attributes; numeric ones pass through.

    A column is numeric when every fitted value parses as a finite float.
    Levels first seen at transform time encode as all zeros.
    """

    def __init__(self):
        self.columns: list[str] = []
        self.levels: dict[str, list[str]] = {}

    @property
    def feature_names(self):
        names = []
        for c in self.columns:
            if c in self.levels:
                names.extend(f"{c}={lv}" for lv in self.levels[c])
            else:
                names.append(c)
        return tuple(names)

    @property
    def q(self):
        return len(self.feature_names)

    def fit(self, records):
        records = list(records)
        if not records:
            raise DataError("cannot fit an event encoder on zero events")
        self.columns = list(records[0].attributes)
        for r in records:
            if list(r.attributes) != self.columns:
                raise DataError(f"event {r.event_id!r} has attribute columns {list(r.attributes)}, expected {self.columns}")
        self.levels = {}
        for c in self.columns:
            values = [r.attributes[c] for r in records]
            if not all(_is_number(v) for v in values):
                self.levels[c] = sorted(set(values))
        return self

    def transform_one(self, record) -> EventInfo:
        feats = []
        for c in self.columns:
            if c not in record.attributes:
                raise DataError(f"event {record.event_id!r} lacks attribute {c!r}")
            v = record.attributes[c]
            if c in self.levels:
                onehot = [1.0 if v == lv else 0.0 for lv in self.levels[c]]
                if not any(onehot):
                    log.warning("event %s: unseen level %r for %s encoded as zeros", record.event_id, v, c)
                feats.extend(onehot)
            else:
                if not _is_number(v):
                    raise DataError(f"event {record.event_id!r}: non-numeric value {v!r} in numeric column {c!r}")
                feats.append(float(v))
        return EventInfo(record.event_id, record.event_date, np.array(feats), self.feature_names)

    def transform(self, records) -> list[EventInfo]:
        return [self.transform_one(r) for r in records]

    def to_dict(self):
        return {"columns": self.columns, "levels": self.levels}

    @classmethod
    def from_dict(cls, d):
        enc = cls()
        enc.columns = list(d["columns"])
        enc.levels = {k: list(v) for k, v in d["levels"].items()}
        return enc


def encode_event_features(records, encoder=None):
    """Encode events; fits a fresh encoder on ``records`` unless one is given."""
    encoder = encoder or EventFeatureEncoder().fit(records)
    return encoder.transform(records), encoder


# -- standardization --------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    mean: float
    stdev: float
    fitted_on: str = ""

    def standardize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.stdev

    def destandardize(self, z):
        return np.asarray(z, dtype=np.float64) * self.stdev + self.mean

    def to_dict(self):
        return {"mean": self.mean, "stdev": self.stdev, "fitted_on": self.fitted_on}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean"]), float(d["stdev"]), d.get("fitted_on", ""))


def fit_standardizer(values, fingerprint: str = "") -> Standardizer:
    """Population mean/stdev (divide by N)."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if np.unique(v).size < 2:
        raise DataError("standardizer needs at least 2 distinct values (zero variance)")
    sd = float(v.std())
    if sd <= 0:
        raise DataError("standardizer fitted on zero-variance data")
    return Standardizer(float(v.mean()), sd, fingerprint)


def standardize(x, s: Standardizer):
    return s.standardize(x)


def destandardize(z, s: Standardizer):
    return s.destandardize(z)


# -- dataset ----------------------------------------------------------------

def fingerprint(transactions) -> str:
    """Order-independent content hash of a set of transactions."""
    h = hashlib.sha256()
    for t in sorted(transactions, key=lambda t: (t.event_id, t.row, t.col)):
        h.update(f"{t.event_id}|{t.row}|{t.col}|{t.dte!r}|{t.price!r}\n".encode())
    return h.hexdigest()[:16]


@dataclass
class Dataset:
    transactions: list
    events: list  # EventRecord
    seat_map: SeatMap

    def __post_init__(self):
        ids = {e.event_id for e in self.events}
        self.seat_map.validate(self.transactions)
        seen = set()
        for t in self.transactions:
            if t.event_id not in ids:
                raise DataError(f"transaction references unknown event {t.event_id!r}")
            key = (t.event_id, t.row, t.col)
            if key in seen:
                raise DataError(f"seat (row={t.row}, col={t.col}) of event {t.event_id!r} sold twice")
            seen.add(key)
        self.events = sorted(self.events, key=lambda e: (e.event_date, e.event_id))
        by_event = defaultdict(list)
        for t in self.transactions:
            by_event[t.event_id].append(t)
        self._by_event = dict(by_event)
        self._event = {e.event_id: e for e in self.events}

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        return cls(
            load_transactions(d / "transactions.csv"),
            load_events(d / "events.csv"),
            load_seatmap(d / "seatmap.csv"),
        )

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_transactions(d / "transactions.csv", self.transactions)
        save_events(d / "events.csv", self.events)
        save_seatmap(d / "seatmap.csv", self.seat_map)

    @property
    def event_ids(self):
        return [e.event_id for e in self.events]

    def event(self, event_id) -> EventRecord:
        return self._event[event_id]

    def transactions_of(self, event_id):
        return list(self._by_event.get(event_id, ()))

    def transactions_for(self, event_ids):
        out = []
        for eid in event_ids:
            out.extend(self._by_event.get(eid, ()))
        return out


def sale_day(t: Transaction, event: EventRecord) -> float:
    """Calendar time of a sale as fractional days since 1970-01-01."""
    return (event.event_date - dt.date(1970, 1, 1)).days - t.dte
