"""Rolling-origin backtests, metrics and comparison suites.

A split date divides the calendar. The 14 events after it are tested, the
10 events up to it validate, and everything earlier trains. Sales of test
events that happened before the split date are visible to every method;
the remaining sales are the ones scored.
"""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import KINDS as BASELINE_KINDS, fit_baseline
from .domain import DataError, Dataset, sale_day
from .model import VARIANT_BUILDERS, ModelConfig, check_isolation, predict_events, train

log = logging.getLogger(__name__)

ETPP_METHODS = tuple(VARIANT_BUILDERS)
METHODS = ETPP_METHODS + BASELINE_KINDS


# -- metrics ----------------------------------------------------------------

def _pair(actual, predicted):
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    if a.size != p.size:
        raise ValueError(f"{a.size} actual prices but {p.size} predictions")
    if a.size == 0:
        raise ValueError("metrics need at least one price")
    return a, p


def mse(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(np.mean((a - p) ** 2))


def mape(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    if np.any(a <= 0):
        raise ValueError("mape needs strictly positive actual prices")
    return float(np.mean(np.abs((a - p) / a)))


# -- splits -----------------------------------------------------------------

@dataclass(frozen=True)
class BacktestSplit:
    split_date: dt.date
    test_ids: tuple
    val_ids: tuple
    train_ids: tuple

    def to_dict(self):
        return {"split_date": self.split_date.isoformat(), "test": list(self.test_ids),
                "val": list(self.val_ids), "train": list(self.train_ids)}


def make_backtest_splits(events, split_dates, test_count: int = 14, val_count: int = 10, min_train: int = 1):
    """One split per date: the next ``test_count`` events after the date are
    tested, the ``val_count`` before it validate, all earlier ones train."""
    events = sorted(events, key=lambda e: (e.event_date, e.event_id))
    splits = []
    for date in split_dates:
        if isinstance(date, str):
            date = dt.date.fromisoformat(date)
        after = [e for e in events if e.event_date > date]
        before = [e for e in events if e.event_date <= date]
        if len(after) < test_count:
            raise DataError(f"split {date}: only {len(after)} events after the date, need {test_count}")
        if len(before) < val_count + min_train:
            raise DataError(f"split {date}: only {len(before)} events up to the date, "
                            f"need {val_count} validation + {min_train} training")
        splits.append(BacktestSplit(
            date,
            tuple(e.event_id for e in after[:test_count]),
            tuple(e.event_id for e in before[len(before) - val_count:]),
            tuple(e.event_id for e in before[:len(before) - val_count]),
        ))
    return splits


def even_split_dates(events, n_splits: int, test_count: int = 14, val_count: int = 10, min_train: int = 16):
    """Evenly spaced split dates from the earliest feasible to the latest."""
    events = sorted(events, key=lambda e: (e.event_date, e.event_id))
    first, last = val_count + min_train, len(events) - test_count
    if n_splits < 1 or last < first:
        raise DataError(f"{len(events)} events cannot host {n_splits} splits of "
                        f"{min_train}+{val_count}+{test_count} events")
    if n_splits == 1:
        starts = [last]
    else:
        starts = np.round(np.linspace(first, last, n_splits)).astype(int)
    # the split date is the last validation event's date
    return [events[k - 1].event_date for k in starts]


def observed_before(transactions, event, split_date):
    """Partition an event's sales into (visible before split_date, later)."""
    cut = (split_date - dt.date(1970, 1, 1)).days
    seen, later = [], []
    for t in transactions:
        (seen if sale_day(t, event) < cut else later).append(t)
    return seen, later


# -- running ----------------------------------------------------------------

@dataclass
class RunResult:
    method: str
    split: int
    repetition: int
    seed: int
    mse: float = float("nan")
    mape: float = float("nan")
    n_test: int = 0
    error: str | None = None
    best_epoch: int | None = None
    history: list = field(default_factory=list, repr=False)


def _method_config(method, config: ModelConfig, seed):
    return VARIANT_BUILDERS[method](replace(config, seed=seed))


def _run_one(dataset: Dataset, method, split: BacktestSplit, split_index, rep, seed, config, isolate=True):
    res = RunResult(method, split_index, rep, seed)
    try:
        train_txns = dataset.transactions_for(split.train_ids)
        val_txns = dataset.transactions_for(split.val_ids)
        held_out = set(split.val_ids) | set(split.test_ids)
        requests, actual = [], []
        for eid in split.test_ids:
            ev = dataset.event(eid)
            seen, later = observed_before(dataset.transactions_of(eid), ev, split.split_date)
            requests.append((ev, seen, [(t.row, t.col, t.dte) for t in later]))
            actual.extend(t.price for t in later)
        if not actual:
            raise DataError("no test transactions after the split date")

        if method in ETPP_METHODS:
            cfg = _method_config(method, config, seed)
            ckpt, hist = train([dataset.event(i) for i in split.train_ids], train_txns,
                               [dataset.event(i) for i in split.val_ids], val_txns, dataset.seat_map, cfg)
            if isolate:
                check_isolation(ckpt.pre, train_txns, held_out)
            if ckpt.stop_reason not in ("max_epochs", "early_stopping"):
                raise FloatingPointError(ckpt.stop_reason)
            preds = predict_events(ckpt, requests)
            res.history, res.best_epoch = hist, ckpt.best_epoch
        else:
            fit_ids = split.train_ids + split.val_ids
            fit_txns = train_txns + val_txns
            if isolate and {t.event_id for t in fit_txns} & set(split.test_ids):
                raise DataError("isolation check failed: baseline fit data include test events")
            model = fit_baseline(method, [dataset.event(i) for i in fit_ids], fit_txns, dataset.seat_map)
            preds = [model.predict(ev, seen, q) for ev, seen, q in requests]
        pred = np.concatenate([np.asarray(p, dtype=np.float64) for p in preds])
        if not np.all(np.isfinite(pred)):
            raise FloatingPointError("non-finite predictions")
        res.mse, res.mape, res.n_test = mse(actual, pred), mape(actual, pred), len(actual)
    except Exception as exc:  # recorded in the report, excluded from aggregates
        res.error = f"{type(exc).__name__}: {exc}"
        log.warning("%s split %d rep %d failed: %s", method, split_index, rep, res.error)
    return res


def _run_star(args):
    return _run_one(*args)


@dataclass
class BacktestReport:
    methods: list
    splits: list  # BacktestSplit
    seeds: list
    config: dict
    results: list  # RunResult

    @property
    def repetitions(self):
        return len(self.seeds)

    @property
    def reduced(self):
        return self.repetitions < 10

    @property
    def config_hash(self):
        blob = json.dumps({"config": self.config, "methods": self.methods, "seeds": self.seeds,
                           "splits": [s.to_dict() for s in self.splits]}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def ok(self, method=None):
        return [r for r in self.results if r.error is None and (method is None or r.method == method)]

    def failures(self):
        return [r for r in self.results if r.error is not None]

    def per_split(self, method, metric="mape"):
        """Mean over repetitions for each split that has at least one success."""
        out = {}
        for i in range(len(self.splits)):
            vals = [getattr(r, metric) for r in self.ok(method) if r.split == i]
            if vals:
                out[i] = float(np.mean(vals))
        return out

    def aggregate(self, method, metric="mape"):
        """(mean, standard error) across splits of the per-split means."""
        vals = np.array(list(self.per_split(method, metric).values()))
        if vals.size == 0:
            return float("nan"), float("nan")
        se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        return float(vals.mean()), se

    def summary(self):
        rows = []
        for m in self.methods:
            mse_mean, mse_se = self.aggregate(m, "mse")
            mape_mean, mape_se = self.aggregate(m, "mape")
            rows.append({"method": m, "mse_mean": mse_mean, "mse_se": mse_se, "mape_mean": mape_mean,
                         "mape_se": mape_se, "runs": len(self.ok(m)),
                         "failures": sum(1 for r in self.failures() if r.method == m)})
        return rows

    def paired_differences(self, reference="etpp", metric="mape"):
        """Per-split metric of each method minus the reference's."""
        ref = self.per_split(reference, metric)
        out = {}
        for m in self.methods:
            other = self.per_split(m, metric)
            out[m] = {i: other[i] - ref[i] for i in sorted(set(ref) & set(other))}
        return out

    def to_dict(self):
        return {
            "metadata": {"config_hash": self.config_hash, "repetitions": self.repetitions,
                         "reduced": self.reduced, "seeds": self.seeds, "config": self.config},
            "methods": self.methods,
            "splits": [s.to_dict() for s in self.splits],
            "summary": self.summary(),
            "results": [{k: v for k, v in asdict(r).items() if k != "history"} for r in self.results],
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "split", "split_date", "repetition", "seed", "mse", "mape", "n_test", "error"])
            for r in self.results:
                w.writerow([r.method, r.split, self.splits[r.split].split_date.isoformat(), r.repetition, r.seed,
                            repr(r.mse), repr(r.mape), r.n_test, r.error or ""])

    def write_loss_curves(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "split", "repetition", "epoch", "train_loss", "val_loss"])
            for r in self.results:
                for h in r.history:
                    w.writerow([r.method, r.split, r.repetition, h["epoch"], repr(h["train_loss"]), repr(h["val_loss"])])


def run_backtest(dataset: Dataset, methods, splits, seeds=None, repetitions: int = 10,
                 config: ModelConfig | None = None, workers: int | None = 1, isolate: bool = True) -> BacktestReport:
    """Train and score every method on every split, once per repetition seed.

    ``seeds`` defaults to ``range(repetitions)``; when given, its length sets
    the repetition count. ``workers=None`` uses every available core.
    """
    methods = list(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; expected some of {METHODS}")
    if not methods or not splits:
        raise ValueError("run_backtest needs at least one method and one split")
    seeds = list(range(repetitions)) if seeds is None else [int(s) for s in seeds]
    config = config or ModelConfig()
    jobs = [(dataset, m, s, i, rep, seed, config, isolate)
            for i, s in enumerate(splits) for m in methods for rep, seed in enumerate(seeds)]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_star, jobs))
    else:
        results = [_run_one(*j) for j in jobs]
    results.sort(key=lambda r: (methods.index(r.method), r.split, r.repetition))
    return BacktestReport(methods, list(splits), seeds, config.to_dict(), results)


def ablation_suite(dataset: Dataset, splits, seeds, config: ModelConfig | None = None, workers=1) -> BacktestReport:
    """Full model, its three ablations and the three baselines on shared splits and seeds."""
    return run_backtest(dataset, METHODS, splits, seeds=seeds, config=config, workers=workers)


def bin_sweep(dataset: Dataset, L_values, splits, seeds, config: ModelConfig | None = None, workers=1):
    """Backtest the full model for each bin count. Returns (rows, reports)."""
    L_values = [int(v) for v in L_values]
    if len(L_values) < 2:
        raise ValueError("bin_sweep needs at least two values of L")
    config = config or ModelConfig()
    rows, reports = [], {}
    for L in L_values:
        rep = run_backtest(dataset, ["etpp"], splits, seeds=seeds, config=replace(config, L=L), workers=workers)
        mape_mean, mape_se = rep.aggregate("etpp", "mape")
        mse_mean, mse_se = rep.aggregate("etpp", "mse")
        rows.append({"L": L, "mape_mean": mape_mean, "mape_se": mape_se, "mse_mean": mse_mean, "mse_se": mse_se,
                     "failures": len(rep.failures())})
        reports[L] = rep
    return rows, reports


# -- plot data --------------------------------------------------------------

def write_rows_csv(path, rows, columns=None):
    rows = list(rows)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def write_histogram_csv(path, summary):
    """DTE octave-band histogram from ``synth.describe``."""
    edges, counts = summary["octave_edges"], summary["octave_counts"]
    rows = [{"lo": float(edges[i]), "hi": float(edges[i + 1]), "count": int(counts[i]),
             "density": float(summary["octave_density"][i])} for i in range(len(counts))]
    write_rows_csv(path, rows, ["lo", "hi", "count", "density"])
