"""GRU cell built from tape primitives."""
from __future__ import annotations

from .tape import ShapeError, dense, sigmoid, tanh, mul, sub, add, as_tensor

GRU_MODES = ("standard", "paper-literal")

GRU_KEYS = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")


def gru_activations(mode: str):
    """(gate activation, candidate activation) for a GRU mode.

    ``standard`` is the usual sigmoid-gated cell with a tanh candidate.
    ``paper-literal`` swaps them: tanh gates, sigmoid candidate.
    """
    if mode == "standard":
        return sigmoid, tanh
    if mode == "paper-literal":
        return tanh, sigmoid
    raise ValueError(f"unknown GRU mode {mode!r}; expected one of {GRU_MODES}")


def gru_cell(x, h_prev, weights, mode: str = "standard"):
    """One GRU update.

    z = g(W_z x + U_z h + b_z)
    r = g(W_r x + U_r h + b_r)
    h' = (1 - z) * h + z * c(W_h x + U_h (r * h) + b_h)

    ``weights`` maps the names in ``GRU_KEYS`` to arrays or tensors; x may
    carry leading batch axes, matching those of h_prev.
    """
    gate, cand = gru_activations(mode)
    missing = [k for k in GRU_KEYS if k not in weights]
    if missing:
        raise KeyError(f"gru_cell: missing weights {missing}")
    w = {k: as_tensor(weights[k]) for k in GRU_KEYS}
    x, h_prev = as_tensor(x), as_tensor(h_prev)
    hidden, d = w["W_z"].shape
    for k in ("W_z", "W_r", "W_h"):
        if w[k].shape != (hidden, d):
            raise ShapeError(f"gru_cell: {k} shape {w[k].shape} != ({hidden}, {d})")
    for k in ("U_z", "U_r", "U_h"):
        if w[k].shape != (hidden, hidden):
            raise ShapeError(f"gru_cell: {k} shape {w[k].shape} != ({hidden}, {hidden})")
    for k in ("b_z", "b_r", "b_h"):
        if w[k].shape != (hidden,):
            raise ShapeError(f"gru_cell: {k} length {w[k].shape} != ({hidden},)")
    if x.shape[-1] != d:
        raise ShapeError(f"gru_cell: input dimension {x.shape[-1]} != {d}")
    if h_prev.shape[-1] != hidden:
        raise ShapeError(f"gru_cell: hidden dimension {h_prev.shape[-1]} != {hidden}")

    z = gate(add(dense(w["W_z"], x, w["b_z"]), dense(w["U_z"], h_prev)))
    r = gate(add(dense(w["W_r"], x, w["b_r"]), dense(w["U_r"], h_prev)))
    c = cand(add(dense(w["W_h"], x, w["b_h"]), dense(w["U_h"], mul(r, h_prev))))
    return add(mul(sub(1.0, z), h_prev), mul(z, c))
