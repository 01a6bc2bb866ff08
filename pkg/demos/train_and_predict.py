"""
Train a model and price the seats of a future event
===================================================

The network sees the coarsened early sales of an event and forecasts the
rest of the seat map, bin by bin.
"""

import tempfile
from pathlib import Path

import numpy as np

from etpp.model import ModelConfig, load_checkpoint, predict, save_checkpoint, train
from etpp.synth import SynthConfig, generate

market = generate(SynthConfig(seed=7, n_events=60))
ids = market.event_ids
train_ids, val_ids, target = ids[:40], ids[40:50], ids[50]

config = ModelConfig(epochs=120, seed=0)
ckpt, history = train(
    [market.event(i) for i in train_ids], market.transactions_for(train_ids),
    [market.event(i) for i in val_ids], market.transactions_for(val_ids),
    market.seat_map, config,
)
print(f"trained {len(history)} epochs, kept epoch {ckpt.best_epoch} ({ckpt.stop_reason})")
for row in history[:: max(1, len(history) // 6)]:
    print(f"  epoch {row['epoch']:3d}  train {row['train_loss']:8.2f}  val {row['val_loss']:8.2f}")

# Pretend we are a week out: sales more than 7 days before the event are known.
sales = market.transactions_of(target)
known = [t for t in sales if t.dte > 7]
later = [t for t in sales if t.dte <= 7]
queries = [(t.row, t.col, t.dte) for t in later]
predicted = predict(ckpt, market.event(target), known, queries)
actual = np.array([t.price for t in later])
print(f"\n{target}: {len(known)} sales known, scoring {len(later)} later ones")
print(f"mean absolute percentage error {np.mean(np.abs(predicted - actual) / actual):.3f}")

# A checkpoint reloads to the same predictions, bit for bit.
with tempfile.TemporaryDirectory() as tmp:
    path = save_checkpoint(Path(tmp) / "model.npz", ckpt)
    again = predict(load_checkpoint(path), market.event(target), known, queries)
    print("reloaded predictions identical:", np.array_equal(again, predicted))
