"""Checkpoint files.

A checkpoint is an uncompressed numpy ``.npz`` archive (a zip file) with:

``meta``
    uint8 array holding UTF-8 JSON: ``format`` ("etpp-checkpoint"),
    ``version``, ``config``, ``seat_map`` (list of [row, col, section]),
    ``layout``, ``binning``, ``standardizers`` (price/dte/row/col, each
    mean/stdev/fitted_on), ``encoder`` (columns + categorical levels),
    ``fitted_on``, ``history``, ``best_epoch``, ``stop_reason``.
``param/<name>``
    each network parameter, float64, C order.
``feature_mean``, ``feature_scale``
    per-feature standardization of encoded event features, float64 (q,).
``feature_low``, ``feature_high``
    training range of each encoded feature; inputs are clipped into it.
``prior``
    prior surface, float64 (m, L).

Floats in ``meta`` are written with Python's shortest round-trip repr and
arrays as raw IEEE-754 doubles, so a loaded checkpoint predicts bit for bit
what the saved one did.
"""
from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np

from ..coarsen import GridLayout, TimeBinning
from ..domain import EventFeatureEncoder, SeatMap, Standardizer
from .network import ModelConfig
from .prepare import Preprocessor
from .training import Checkpoint

FORMAT = "etpp-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, ckpt: Checkpoint):
    pre = ckpt.pre
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "config": ckpt.config.to_dict(),
        "seat_map": [list(s) for s in pre.seat_map.seats],
        "layout": pre.layout.to_dict(),
        "binning": pre.binning.to_dict(),
        "standardizers": {k: getattr(pre, k).to_dict() for k in ("price", "dte", "row", "col")},
        "encoder": pre.encoder.to_dict(),
        "fitted_on": pre.fitted_on,
        "history": ckpt.history,
        "best_epoch": ckpt.best_epoch,
        "stop_reason": ckpt.stop_reason,
    }
    arrays = {f"param/{k}": np.ascontiguousarray(v, dtype=np.float64) for k, v in ckpt.params.items()}
    arrays["feature_mean"] = np.asarray(pre.feature_mean, dtype=np.float64)
    arrays["feature_scale"] = np.asarray(pre.feature_scale, dtype=np.float64)
    arrays["prior"] = np.asarray(pre.prior, dtype=np.float64)
    if pre.feature_low is not None:
        arrays["feature_low"] = np.asarray(pre.feature_low, dtype=np.float64)
        arrays["feature_high"] = np.asarray(pre.feature_high, dtype=np.float64)
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            files = {k: z[k] for k in z.files}
    except (zipfile.BadZipFile, EOFError, OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: unreadable or truncated checkpoint ({exc})") from None
    if "meta" not in files:
        raise CheckpointError(f"{path}: missing meta record")
    try:
        meta = json.loads(files["meta"].tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt meta record ({exc})") from None
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not an ETPP checkpoint (format={meta.get('format')!r})")
    if str(meta.get("version")) != str(VERSION):
        raise CheckpointError(f"{path}: checkpoint version {meta.get('version')!r} does not match supported version {VERSION}")

    seat_map = SeatMap(tuple((int(r), int(c), str(s)) for r, c, s in meta["seat_map"]))
    std = {k: Standardizer.from_dict(v) for k, v in meta["standardizers"].items()}
    pre = Preprocessor(
        seat_map=seat_map,
        layout=GridLayout.from_dict(meta["layout"]),
        binning=TimeBinning.from_dict(meta["binning"]),
        price=std["price"], dte=std["dte"], row=std["row"], col=std["col"],
        encoder=EventFeatureEncoder.from_dict(meta["encoder"]),
        feature_mean=files["feature_mean"], feature_scale=files["feature_scale"],
        prior=files["prior"], fitted_on=meta["fitted_on"],
        feature_low=files.get("feature_low"), feature_high=files.get("feature_high"),
    )
    params = {k[len("param/"):]: v for k, v in files.items() if k.startswith("param/")}
    return Checkpoint(config=ModelConfig.from_dict(meta["config"]), params=params, pre=pre,
                      history=meta["history"], best_epoch=meta["best_epoch"], stop_reason=meta["stop_reason"])
