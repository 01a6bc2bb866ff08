"""The ETPP network: conv spatial block, GRU temporal block, seat-level refiner.

Tensors are laid out time-major inside an event: grid inputs are
(batch, L, grid_rows, grid_cols), grid outputs (batch, L, m) and seat
outputs (batch, L, n).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from ..numerics import (
    GRU_KEYS,
    GRU_MODES,
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    conv2d,
    dense,
    gru_cell,
    masked_sse,
    matmul,
    mean,
    relu,
    reshape,
    select,
    stack,
    tanh,
    total,
)

VARIANTS = ("etpp", "etpp1", "etpp2", "etpp3")
CHANNEL_MERGES = ("mean", "sum")
REFINE_WIDTH = 4  # grid price, bin DTE, seat row, seat col

# (name, kernel rows, kernel cols); three output channels each, applied in order
CONV_LAYERS = (("conv1", 1, 3), ("conv2", 2, 1), ("conv3", 2, 3))
CONV_CHANNELS = 3


@dataclass(frozen=True)
class ModelConfig:
    L: int = 20
    grid_rows: int = 4
    grid_cols: int = 4
    n: int = 0
    q: int = 0
    h: int = 30
    gamma: int = 7
    alpha: float = 0.3
    beta: float = 0.7
    gru_mode: str = "standard"
    channel_merge: str = "mean"
    variant: str = "etpp"
    lr: float = 0.01
    epochs: int = 200
    patience: int | None = 20
    batch_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValueError(f"loss weights need alpha, beta >= 0 and alpha + beta > 0, got {self.alpha}, {self.beta}")
        if self.h < 1 or self.gamma < 1 or self.L < 1:
            raise ValueError("h, gamma and L must be >= 1")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid shape must be positive")
        if self.gru_mode not in GRU_MODES:
            raise ValueError(f"gru_mode must be one of {GRU_MODES}, got {self.gru_mode!r}")
        if self.channel_merge not in CHANNEL_MERGES:
            raise ValueError(f"channel_merge must be one of {CHANNEL_MERGES}, got {self.channel_merge!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def m(self):
        return self.grid_rows * self.grid_cols

    @property
    def e(self):
        return REFINE_WIDTH

    @property
    def d(self):
        return self.m + self.q

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def etpp_1(config: ModelConfig) -> ModelConfig:
    """No temporal modelling: the GRU becomes a per-bin dense layer."""
    return replace(config, variant="etpp1")


def etpp_2(config: ModelConfig) -> ModelConfig:
    """No spatial modelling: imputed grid prices feed the temporal block directly."""
    return replace(config, variant="etpp2")


def etpp_3(config: ModelConfig) -> ModelConfig:
    """Seat-level loss only."""
    return replace(config, variant="etpp3", alpha=0.0, beta=1.0)


VARIANT_BUILDERS = {"etpp": lambda c: replace(c, variant="etpp"), "etpp1": etpp_1, "etpp2": etpp_2, "etpp3": etpp_3}


def param_shapes(config: ModelConfig) -> dict:
    m, h, d, g = config.m, config.h, config.d, config.gamma
    shapes = {}
    if config.variant != "etpp2":
        cin = 1
        for name, kh, kw in CONV_LAYERS:
            shapes[f"{name}_K"] = (kh, kw, cin, CONV_CHANNELS)
            shapes[f"{name}_b"] = (CONV_CHANNELS,)
            cin = CONV_CHANNELS
        shapes["W_D"] = (m, m)
        shapes["b_D"] = (m,)
    if config.variant == "etpp1":
        shapes["W_h"] = (h, d)
        shapes["b_h"] = (h,)
    else:
        for k in ("W_z", "W_r", "W_h"):
            shapes[k] = (h, d)
        for k in ("U_z", "U_r", "U_h"):
            shapes[k] = (h, h)
        for k in ("b_z", "b_r", "b_h"):
            shapes[k] = (h,)
    shapes["W_G"] = (m, h)
    shapes["b_G"] = (m,)
    shapes["W_in"] = (config.e, g)
    shapes["b_in"] = (g,)
    shapes["W_out"] = (g, 1)
    shapes["b_out"] = (1,)
    return shapes


def _fans(shape):
    if len(shape) == 4:
        kh, kw, cin, cout = shape
        return kh * kw * cin, kh * kw * cout
    return shape[1], shape[0]


def init_params(config: ModelConfig, seed=None) -> dict:
    """Glorot-uniform weights, zero biases, drawn in a fixed order."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            fan_in, fan_out = _fans(shape)
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def param_count(params) -> int:
    return int(sum(np.size(v) for v in params.values()))


def _check_finite(t: Tensor, where: str):
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError(f"non-finite values after {where}")
    return t


def spatial_forward(grid_input, params, config: ModelConfig) -> Tensor:
    """Conv stack, channel merge, flatten, dense + ReLU: (..., gr, gc) -> (..., m)."""
    x = as_tensor(grid_input)
    if x.shape[-2:] != (config.grid_rows, config.grid_cols):
        raise ShapeError(f"spatial_forward: grid input {x.shape[-2:]} != ({config.grid_rows}, {config.grid_cols})")
    lead = x.shape[:-2]
    x = reshape(x, x.shape + (1,))
    for name, _, _ in CONV_LAYERS:
        x = _check_finite(relu(conv2d(x, params[f"{name}_K"], params[f"{name}_b"])), name)
    x = mean(x, -1) if config.channel_merge == "mean" else total(x, -1)
    x = reshape(x, lead + (config.m,))
    return _check_finite(relu(dense(params["W_D"], x, params["b_D"])), "W_D")


def temporal_step(D, event_features, h_prev, params, config: ModelConfig):
    """One recurrence step plus the affine grid read-out. Returns (h_new, G_hat)."""
    D, feats = as_tensor(D), as_tensor(event_features)
    if D.shape[-1] != config.m:
        raise ShapeError(f"temporal_step: D length {D.shape[-1]} != m = {config.m}")
    if feats.shape[-1] != config.q:
        raise ShapeError(f"temporal_step: event features length {feats.shape[-1]} != q = {config.q}")
    x = concat([D, feats], axis=-1)
    if x.shape[-1] != params["W_h"].shape[1]:
        raise ShapeError(f"temporal_step: d = m + q = {x.shape[-1]} != weight width {params['W_h'].shape[1]}")
    if config.variant == "etpp1":
        h_new = tanh(dense(params["W_h"], x, params["b_h"]))
    else:
        h_new = gru_cell(x, h_prev, {k: params[k] for k in GRU_KEYS}, mode=config.gru_mode)
    return h_new, dense(params["W_G"], h_new, params["b_G"])


@dataclass(frozen=True)
class RefineContext:
    """Constant side inputs of the refiner."""
    assignment: np.ndarray   # (m, n)
    seat_coords: np.ndarray  # (n, 2), standardized row/col
    bin_dte: np.ndarray      # (L,), standardized representative DTE per bin

    @property
    def n(self):
        return self.seat_coords.shape[0]

    def side_features(self):
        """(L, n, 3): [bin DTE, row, col] for every bin and seat."""
        L, n = self.bin_dte.size, self.n
        out = np.empty((L, n, 3))
        out[:, :, 0] = self.bin_dte[:, None]
        out[:, :, 1:] = self.seat_coords[None, :, :]
        return out


def _refine(G_hat, side, params):
    price = matmul(G_hat, params["_assign"])  # (..., n)
    price = reshape(price, price.shape + (1,))
    side = np.broadcast_to(side, price.shape[:-1] + (3,))
    G_tilde = concat([price, side], axis=-1)  # (..., n, e)
    hidden = relu(matmul(G_tilde, params["W_in"]) + params["b_in"])
    out = matmul(hidden, params["W_out"]) + params["b_out"]
    return reshape(out, out.shape[:-1])


def refine_forward(G_hat, ctx: RefineContext, j: int, params) -> Tensor:
    """Seat prices for bin j (1-based) from grid prices G_hat (..., m)."""
    G_hat = as_tensor(G_hat)
    m = ctx.assignment.shape[0]
    if G_hat.shape[-1] != m:
        raise ShapeError(f"refine_forward: G_hat length {G_hat.shape[-1]} != m = {m}")
    side = ctx.side_features()[j - 1]
    return _refine(G_hat, side, {**params, "_assign": ctx.assignment})


def refine_all(G_hat, ctx: RefineContext, params) -> Tensor:
    """Seat prices for every bin at once: (..., L, m) -> (..., L, n)."""
    G_hat = as_tensor(G_hat)
    if G_hat.shape[-2] != ctx.bin_dte.size:
        raise ShapeError(f"refine_all: {G_hat.shape[-2]} bins != L = {ctx.bin_dte.size}")
    return _refine(G_hat, ctx.side_features(), {**params, "_assign": ctx.assignment})


def forward(params, grid_inputs, features, ctx: RefineContext, config: ModelConfig):
    """Run a batch of events through all bins, earliest bin first.

    grid_inputs: (B, L, gr, gc) imputed grid prices; features: (B, q).
    Returns tensors (G_hat (B, L, m), P_hat (B, L, n)).
    """
    grid_inputs = np.asarray(grid_inputs, dtype=np.float64)
    B, L = grid_inputs.shape[:2]
    if L != config.L:
        raise ShapeError(f"forward: {L} bins in input != L = {config.L}")
    if config.variant == "etpp2":
        D_all = Tensor(grid_inputs.reshape(B, L, config.m))
    else:
        D_all = spatial_forward(grid_inputs, params, config)
    features = np.asarray(features, dtype=np.float64).reshape(B, config.q)
    h = Tensor(np.zeros((B, config.h)))
    outputs = []
    for j in range(L):
        h, G_j = temporal_step(select(D_all, j, axis=1), features, h, params, config)
        outputs.append(G_j)
    G_hat = stack(outputs, axis=1)
    return G_hat, refine_all(G_hat, ctx, params)


def forward_event(params, grid_input, features, ctx: RefineContext, config: ModelConfig):
    """Single event. grid_input is (m, L); returns numpy (G_hat (m, L), P_hat (n, L))."""
    grid_input = np.asarray(grid_input, dtype=np.float64)
    if grid_input.shape != (config.m, config.L):
        raise ShapeError(f"forward_event: grid input {grid_input.shape} != ({config.m}, {config.L})")
    x = grid_input.T.reshape(1, config.L, config.grid_rows, config.grid_cols)
    G, P = forward(params, x, np.asarray(features).reshape(1, -1), ctx, config)
    return G.data[0].T, P.data[0].T


def bilevel_loss(G_hat, G_target, G_mask, P_hat, P_target, P_mask, alpha, beta) -> Tensor:
    """alpha * grid masked SSE + beta * seat masked SSE; zero-weight terms are skipped."""
    if alpha < 0 or beta < 0:
        raise ValueError(f"loss weights must be non-negative, got alpha={alpha}, beta={beta}")
    loss = Tensor(0.0)
    if alpha:
        loss = loss + alpha * masked_sse(G_hat, G_target, G_mask)
    if beta:
        loss = loss + beta * masked_sse(P_hat, P_target, P_mask)
    return loss
