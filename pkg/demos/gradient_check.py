"""
Checking the hand-written gradients
===================================

Every operation records a backward rule on a tape. Central differences
give an independent estimate to compare against.
"""

import numpy as np

from etpp.model import ModelConfig, RefineContext, bilevel_loss, forward, init_params
from etpp.numerics import Tape, dense, grad_check, masked_sse, tanh

# A single dense layer first.
rng = np.random.default_rng(0)
x = rng.normal(size=(5, 3))
target = rng.normal(size=(5, 2))
mask = np.ones((5, 2))

with Tape() as tape:
    W = tape.watch(rng.normal(size=(2, 3)), "W")
    b = tape.watch(np.zeros(2), "b")
    loss = masked_sse(tanh(dense(W, x, b)), target, mask)
tape.backward(loss)
print("loss", float(loss.data))
print("dL/dW\n", tape.gradients()["W"])

# Then the whole network on a toy problem, in both GRU activation modes.
for mode in ("standard", "paper-literal"):
    cfg = ModelConfig(L=3, grid_rows=2, grid_cols=2, n=6, q=2, h=4, gamma=3, gru_mode=mode)
    A = np.zeros((4, 6))
    A[[0, 0, 1, 2, 3, 3], np.arange(6)] = 1
    ctx = RefineContext(A, rng.normal(size=(6, 2)), rng.normal(size=3))
    grid, feats = rng.normal(size=(2, 3, 2, 2)), rng.normal(size=(2, 2))
    Gt, Pt = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 6))
    Gm, Pm = (rng.random(Gt.shape) < 0.6) * 1.0, (rng.random(Pt.shape) < 0.5) * 1.0

    def build(p):
        G, P = forward(p, grid, feats, ctx, cfg)
        return bilevel_loss(G, Gt, Gm, P, Pt, Pm, cfg.alpha, cfg.beta)

    params = {k: v + 0.05 * rng.normal(size=v.shape) for k, v in init_params(cfg).items()}
    report = grad_check(build, params)
    print(f"\n{mode}: worst relative error {report.max_error:.2e}")
    print(report.summary())
