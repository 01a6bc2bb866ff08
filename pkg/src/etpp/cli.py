"""Command-line entry point: ``etpp synth|train|predict|backtest|sweep``.

Settings resolve as command-line flag, then the ``--config`` JSON file, then
built-in defaults. The JSON file may hold top-level keys matching flag names
(``data``, ``out``, ``seed``, ``reps``, ``methods``, ``bins``, ``splits``,
``workers``) plus ``model`` and ``synth`` objects of config overrides.

Failures print one line ``etpp: error: <message>`` to stderr and exit 1.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .domain import DataError, Dataset, load_events, load_transactions
from .evaluation import (
    METHODS,
    bin_sweep,
    even_split_dates,
    make_backtest_splits,
    run_backtest,
    write_histogram_csv,
    write_rows_csv,
)
from .model import VARIANT_BUILDERS, CheckpointError, ModelConfig, load_checkpoint, predict, save_checkpoint, train
from .synth import SynthConfig, describe, generate, write_dataset

log = logging.getLogger("etpp")

MODEL_FLAGS = {"bins": "L", "epochs": "epochs", "lr": "lr", "patience": "patience", "gru_mode": "gru_mode",
               "grid_rows": "grid_rows", "grid_cols": "grid_cols", "hidden": "h", "gamma": "gamma",
               "alpha": "alpha", "beta": "beta", "channel_merge": "channel_merge"}


class CliError(Exception):
    pass


def _global_options(parser, suppress):
    d = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", type=Path, help="JSON run configuration", **d)
    parser.add_argument("--seed", type=int, help="random seed", **d)
    parser.add_argument("--out", type=Path, help="output directory", **d)
    parser.add_argument("--verbose", action="store_true", help="log progress", **d)


def build_parser():
    p = argparse.ArgumentParser(prog="etpp", description="Event ticket price prediction.")
    _global_options(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, help_):
        c = sub.add_parser(name, help=help_)
        _global_options(c, suppress=True)
        return c

    def model_options(c, variant=True):
        c.add_argument("--data", type=Path, help="dataset directory")
        if variant:
            c.add_argument("--variant", choices=list(VARIANT_BUILDERS))
            c.add_argument("--bins", type=int, help="number of time bins L")
        c.add_argument("--epochs", type=int)
        c.add_argument("--lr", type=float)
        c.add_argument("--patience", type=int, help="early-stopping patience; 0 disables")
        c.add_argument("--gru-mode", dest="gru_mode", choices=["standard", "paper-literal"])
        c.add_argument("--grid-rows", dest="grid_rows", type=int)
        c.add_argument("--grid-cols", dest="grid_cols", type=int)
        c.add_argument("--hidden", type=int, help="GRU hidden size h")
        c.add_argument("--gamma", type=int, help="refiner hidden width")
        c.add_argument("--alpha", type=float)
        c.add_argument("--beta", type=float)
        c.add_argument("--channel-merge", dest="channel_merge", choices=["mean", "sum"])

    c = command("synth", "generate a synthetic ticket market")
    c.add_argument("--events", type=int)
    c.add_argument("--rows", type=int)
    c.add_argument("--cols", type=int)
    c.add_argument("--noise", type=float)
    c.add_argument("--sell-through", dest="sell_through", type=float)

    c = command("train", "train a model on a dataset")
    model_options(c)
    c.add_argument("--val-count", dest="val_count", type=int, help="latest events held out for validation")

    c = command("predict", "predict seat prices with a checkpoint")
    c.add_argument("--checkpoint", type=Path, required=True)
    c.add_argument("--queries", type=Path, required=True, help="CSV with row,col,dte")
    c.add_argument("--events", type=Path, required=True, help="events CSV holding the target event")
    c.add_argument("--event-id", dest="event_id", required=True)
    c.add_argument("--partial", type=Path, help="transactions CSV of already observed sales")

    c = command("backtest", "rolling backtest of several methods")
    model_options(c, variant=False)
    c.add_argument("--bins", type=int, help="number of time bins L")
    c.add_argument("--methods", help=f"comma list from {','.join(METHODS)}")
    c.add_argument("--reps", type=int)
    c.add_argument("--splits", type=int, help="number of evenly spaced split dates")
    c.add_argument("--workers", type=int)

    c = command("sweep", "backtest the full model over several bin counts")
    model_options(c, variant=False)
    c.add_argument("--bins", help="comma list of L values")
    c.add_argument("--reps", type=int)
    c.add_argument("--splits", type=int)
    c.add_argument("--workers", type=int)
    return p


class Settings:
    """flag > config file > default lookup."""

    def __init__(self, args, file_cfg):
        self.args, self.file = args, file_cfg

    def get(self, name, default=None):
        v = getattr(self.args, name, None)
        if v is not None:
            return v
        return self.file.get(name, default)

    def model_config(self, **extra) -> ModelConfig:
        fields = dict(self.file.get("model", {}))
        for flag, key in MODEL_FLAGS.items():
            v = getattr(self.args, flag, None)
            if v is not None and not (flag == "bins" and isinstance(v, str)):
                fields[key] = v
        if fields.get("patience") == 0:
            fields["patience"] = None
        seed = self.get("seed")
        if seed is not None:
            fields["seed"] = seed
        fields.update(extra)
        try:
            cfg = ModelConfig.from_dict(fields)
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid model configuration: {exc}") from None
        variant = self.get("variant", "etpp")
        return VARIANT_BUILDERS[variant](cfg)


def _load_config(path):
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return cfg


def _out_dir(s: Settings):
    out = Path(s.get("out", "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise CliError(f"output directory {out} is not writable")
    return out


def _dataset(s: Settings):
    data = s.get("data")
    if data is None:
        raise CliError("--data is required")
    data = Path(data)
    if not data.is_dir():
        raise CliError(f"dataset directory {data} does not exist")
    return Dataset.load(data)


def cmd_synth(s: Settings):
    fields = dict(s.file.get("synth", {}))
    for flag, key in (("events", "n_events"), ("rows", "rows"), ("cols", "cols"), ("noise", "noise"),
                      ("sell_through", "sell_through"), ("seed", "seed")):
        v = s.get(flag)
        if v is not None:
            fields[key] = v
    try:
        cfg = SynthConfig.from_dict(fields)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from None
    out = _out_dir(s)
    ds = generate(cfg)
    write_dataset(ds, out, cfg)
    summary = describe(ds)
    write_histogram_csv(out / "dte_histogram.csv", summary)
    print(f"wrote {summary['n_transactions']} transactions for {summary['n_events']} events "
          f"({summary['n_seats']} seats, sale rate {summary['sale_rate']:.3f}) to {out}")


def cmd_train(s: Settings):
    ds = _dataset(s)
    cfg = s.model_config()
    val_count = s.get("val_count", 10)
    ids = ds.event_ids
    if len(ids) <= val_count:
        raise CliError(f"{len(ids)} events leave no training events after {val_count} validation events")
    tr, va = ids[:-val_count], ids[-val_count:]
    out = _out_dir(s)
    ckpt, history = train([ds.event(i) for i in tr], ds.transactions_for(tr),
                          [ds.event(i) for i in va], ds.transactions_for(va), ds.seat_map, cfg)
    save_checkpoint(out / "checkpoint.npz", ckpt)
    write_rows_csv(out / "history.csv", history, ["epoch", "train_loss", "val_loss"])
    if ckpt.stop_reason not in ("max_epochs", "early_stopping"):
        raise CliError(f"training halted: {ckpt.stop_reason}")
    print(f"trained {len(history)} epochs ({ckpt.stop_reason}); best epoch {ckpt.best_epoch}; "
          f"checkpoint at {out / 'checkpoint.npz'}")


def _read_queries(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != ["row", "col", "dte"]:
            raise CliError(f"{path}: header must be row,col,dte (got {','.join(header)})")
        out = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                r, c, d = rec
                out.append((int(r), int(c), float(d)))
            except ValueError:
                raise CliError(f"{path}:{lineno}: expected integer row, integer col, numeric dte") from None
    return out


def cmd_predict(s: Settings):
    args = s.args
    for p in (args.checkpoint, args.queries, args.events):
        if not Path(p).exists():
            raise CliError(f"{p} does not exist")
    ckpt = load_checkpoint(args.checkpoint)
    events = {e.event_id: e for e in load_events(args.events)}
    if args.event_id not in events:
        raise CliError(f"event {args.event_id!r} not found in {args.events}")
    ev = events[args.event_id]
    partial = []
    if args.partial:
        partial = [t for t in load_transactions(args.partial) if t.event_id == ev.event_id]
    queries = _read_queries(args.queries)
    for r, c, _ in queries:
        if (r, c) not in ckpt.pre.seat_map:
            raise CliError(f"seat (row={r}, col={c}) is not in the checkpoint's seat map")
    prices = predict(ckpt, ev, partial, queries)
    out = _out_dir(s)
    with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "dte", "predicted_price"])
        for (r, c, d), p in zip(queries, prices):
            w.writerow([r, c, repr(d), repr(float(p))])
    print(f"wrote {len(queries)} predictions to {out / 'predictions.csv'}")


def _splits(s: Settings, ds):
    n = s.get("splits", 3)
    return make_backtest_splits(ds.events, even_split_dates(ds.events, n))


def _seeds(s: Settings):
    reps = s.get("reps", 10)
    if reps < 1:
        raise CliError("--reps must be >= 1")
    base = s.get("seed", 0)
    return [base + i for i in range(reps)]


def cmd_backtest(s: Settings):
    ds = _dataset(s)
    methods = s.get("methods", ",".join(METHODS))
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise CliError(f"unknown methods {unknown}; choose from {','.join(METHODS)}")
    cfg = s.model_config()
    splits = _splits(s, ds)
    out = _out_dir(s)
    report = run_backtest(ds, methods, splits, seeds=_seeds(s), config=cfg, workers=s.get("workers"))
    report.write_json(out / "report.json")
    report.write_csv(out / "report.csv")
    report.write_loss_curves(out / "loss_curves.csv")
    write_histogram_csv(out / "dte_histogram.csv", describe(ds))
    flag = " (reduced repetitions)" if report.reduced else ""
    for row in report.summary():
        print(f"{row['method']:>15s}  MAPE {row['mape_mean']:.4f} ± {row['mape_se']:.4f}  "
              f"MSE {row['mse_mean']:.2f} ± {row['mse_se']:.2f}  failures {row['failures']}")
    print(f"{report.repetitions} repetitions × {len(splits)} splits{flag}; reports in {out}")
    if report.failures():
        raise CliError(f"{len(report.failures())} runs failed; see {out / 'report.json'}")


def cmd_sweep(s: Settings):
    ds = _dataset(s)
    bins = s.get("bins", "2,5,10,20,40,60")
    if isinstance(bins, str):
        try:
            bins = [int(b) for b in bins.split(",") if b.strip()]
        except ValueError:
            raise CliError(f"--bins must be a comma list of integers (got {bins!r})") from None
    cfg = s.model_config()
    out = _out_dir(s)
    rows, reports = bin_sweep(ds, bins, _splits(s, ds), seeds=_seeds(s), config=cfg, workers=s.get("workers"))
    write_rows_csv(out / "sweep.csv", rows, ["L", "mape_mean", "mape_se", "mse_mean", "mse_se", "failures"])
    doc = {"rows": rows, "reports": {str(L): r.to_dict() for L, r in reports.items()}}
    (out / "sweep.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for r in rows:
        print(f"L={r['L']:>3d}  MAPE {r['mape_mean']:.4f} ± {r['mape_se']:.4f}")
    if any(r["failures"] for r in rows):
        raise CliError("some sweep runs failed; see sweep.json")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "predict": cmd_predict, "backtest": cmd_backtest, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = Settings(args, _load_config(args.config))
        COMMANDS[args.command](settings)
    except (CliError, DataError, CheckpointError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"etpp: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
