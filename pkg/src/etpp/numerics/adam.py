from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient for parameter {name!r}; Adam step rejected")
        self.name = name


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **hyper):
        return cls(
            m={k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()},
            v={k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()},
            **hyper,
        )

    def copy(self):
        return AdamState(
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
            t=self.t, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
        )


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update.

    Returns ``(new_params, new_state)``; the inputs are left untouched. The
    whole step is rejected if any gradient is non-finite.
    """
    if set(params) != set(grads) or set(params) != set(state.m):
        raise KeyError("adam_step: params, grads and state cover different names")
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p) or state.m[name].shape != np.shape(p):
            raise ValueError(f"adam_step: shape mismatch for {name!r}: param {np.shape(p)}, grad {np.shape(g)}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        new_params[name] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        m_new[name], v_new[name] = m, v
    new_state = AdamState(m=m_new, v=v_new, t=t, lr=state.lr, beta1=b1, beta2=b2, eps=state.eps)
    return new_params, new_state
