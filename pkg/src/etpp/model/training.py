from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..domain import DataError, EventRecord
from ..numerics import AdamState, NonFiniteGradient, Tape, Tensor, adam_step
from .network import ModelConfig, bilevel_loss, forward, init_params
from .prepare import EventBatch, Preprocessor, fit_preprocessor

log = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    pre: Preprocessor
    history: list = field(default_factory=list)  # dicts: epoch, train_loss, val_loss
    best_epoch: int = -1
    stop_reason: str = ""


def batch_loss(params, pre: Preprocessor, batch: EventBatch, visible, config: ModelConfig, ctx=None):
    """Mean per-event bi-level loss as a tensor."""
    ctx = ctx or pre.refine_context()
    G, P = forward(params, pre.grid_inputs(batch, visible), batch.features, ctx, config)
    loss = bilevel_loss(G, batch.grid_values, batch.grid_mask, P, batch.seat_values, batch.seat_mask,
                        config.alpha, config.beta)
    return loss * (1.0 / max(len(batch), 1))


def loss_and_grad(params, pre, batch, visible, config, ctx=None):
    with Tape() as tape:
        leaves = {k: tape.watch(v, k) for k, v in params.items()}
        loss = batch_loss(leaves, pre, batch, visible, config, ctx)
    tape.backward(loss)
    return float(loss.data), tape.gradients()


def loss_value(params, pre, batch, visible, config, ctx=None):
    return float(batch_loss(params, pre, batch, visible, config, ctx).data)


def _by_event(transactions):
    out = {}
    for t in transactions:
        out.setdefault(t.event_id, []).append(t)
    return out


def train(train_records, train_transactions, val_records, val_transactions, seat_map, config: ModelConfig,
          pre: Preprocessor | None = None):
    """Fit the network with full-batch Adam and keep the best-validation parameters.

    Each epoch every training event hides its bins from a random cutoff on,
    replacing them with the prior, so the network learns to forecast the
    unobserved tail the way it is used at prediction time. Validation
    cutoffs are drawn once and held fixed.

    Returns ``(checkpoint, history)``; history has one row per epoch with the
    loss of the parameters entering that epoch.
    """
    train_records, val_records = list(train_records), list(val_records)
    if not train_records or not val_records:
        raise DataError("train needs non-empty training and validation splits")
    pre = pre or fit_preprocessor(train_records, train_transactions, seat_map, config)
    config = pre.configure(config)
    ctx = pre.refine_context()
    train_batch = pre.batch(train_records, _by_event(train_transactions))
    val_batch = pre.batch(val_records, _by_event(val_transactions))

    rng = np.random.default_rng([config.seed, 7919])
    params = init_params(config)
    state = AdamState.zeros_like(params, lr=config.lr)
    val_visible = rng.integers(0, config.L, size=len(val_batch))
    history = []
    best = (np.inf, params, -1)
    stop_reason = "max_epochs"
    since_best = 0
    B = len(train_batch)
    chunk = config.batch_size or B

    for epoch in range(config.epochs):
        visible = rng.integers(0, config.L, size=B)
        order = rng.permutation(B) if chunk < B else np.arange(B)
        val_loss = loss_value(params, pre, val_batch, val_visible, config, ctx)
        epoch_loss, new_params, new_state, diverged = 0.0, params, state, ""
        for start in range(0, B, chunk):
            idx = order[start:start + chunk]
            sub = train_batch if chunk >= B else train_batch.subset(idx)
            loss, grads = loss_and_grad(new_params, pre, sub, visible[idx], config, ctx)
            if not np.isfinite(loss):
                diverged = f"non-finite training loss at epoch {epoch}"
                break
            try:
                new_params, new_state = adam_step(new_params, grads, new_state)
            except NonFiniteGradient as exc:
                diverged = f"epoch {epoch}: {exc}"
                break
            epoch_loss += loss * len(idx) / B
        if diverged or not np.isfinite(val_loss):
            stop_reason = diverged or f"non-finite validation loss at epoch {epoch}"
            log.error("training halted: %s", stop_reason)
            break
        history.append({"epoch": epoch, "train_loss": epoch_loss, "val_loss": val_loss})
        if val_loss < best[0]:
            best = (val_loss, params, epoch)
            since_best = 0
        else:
            since_best += 1
        params, state = new_params, new_state
        if config.patience is not None and since_best >= config.patience:
            stop_reason = "early_stopping"
            break

    if best[2] < 0:
        best = (np.inf, params, -1)
    ckpt = Checkpoint(config=config, params=best[1], pre=pre, history=history,
                      best_epoch=best[2], stop_reason=stop_reason)
    return ckpt, history


def train_on_dataset(dataset, train_ids, val_ids, config: ModelConfig):
    return train(
        [dataset.event(i) for i in train_ids], dataset.transactions_for(train_ids),
        [dataset.event(i) for i in val_ids], dataset.transactions_for(val_ids),
        dataset.seat_map, config,
    )


# -- inference --------------------------------------------------------------

def predict_events(ckpt: Checkpoint, requests):
    """Batched prediction.

    ``requests`` is a list of ``(event_record, partial_transactions, queries)``
    with queries as ``(row, col, dte)`` triples. Returns one array of raw
    prices per request.
    """
    pre, config = ckpt.pre, ckpt.config
    if not requests:
        return []
    records = [r[0] for r in requests]
    partial = {}
    for rec, txns, _ in requests:
        for t in txns:
            if t.event_id != rec.event_id:
                raise DataError(f"partial transaction of event {t.event_id!r} passed for {rec.event_id!r}")
        partial[rec.event_id] = list(txns)
    batch = pre.batch(records, partial)
    _, P = forward(ckpt.params, pre.grid_inputs(batch), batch.features, pre.refine_context(), config)
    out = []
    for b, (_, _, queries) in enumerate(requests):
        if len(queries) == 0:
            out.append(np.zeros(0))
            continue
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        seats = np.array([pre.seat_map.index(int(r), int(c)) for r, c, _ in q])
        bins = pre.binning.assign(q[:, 2]) - 1
        out.append(pre.price.destandardize(P.data[b, bins, seats]))
    return out


def predict(ckpt: Checkpoint, event: EventRecord, partial_transactions, queries):
    """Raw-price predictions for ``(row, col, dte)`` queries of one event."""
    return predict_events(ckpt, [(event, partial_transactions, queries)])[0]
