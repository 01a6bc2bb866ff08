"""Central finite-difference check of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tape import Tape, Tensor


@dataclass
class GradCheckReport:
    # per parameter: max |analytic - numeric| over its entries, divided by
    # the larger of the two gradients' max magnitudes
    errors: dict = field(default_factory=dict)
    worst_index: dict = field(default_factory=dict)
    nonfinite: list = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tolerance: float) -> bool:
        return not self.nonfinite and self.max_error < tolerance

    def summary(self) -> str:
        lines = [f"{k:>12s}  {v:.3e}" for k, v in sorted(self.errors.items())]
        if self.nonfinite:
            lines.append("non-finite at perturbed points: " + ", ".join(self.nonfinite))
        return "\n".join(lines)


def analytic_gradients(build, params):
    with Tape() as tape:
        leaves = {k: tape.watch(v, k) for k, v in params.items()}
        out = build(leaves)
    tape.backward(out)
    return float(out.data), tape.gradients()


def grad_check(build, params, step: float = 1e-5, names=None, floor: float = 1e-10) -> GradCheckReport:
    """Compare tape gradients of ``build`` against central differences.

    ``build`` maps a dict of parameter tensors to a scalar tensor. Every
    entry of every parameter (or of ``names`` only) is perturbed by
    ``step`` in both directions.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    value, analytic = analytic_gradients(build, params)
    if not np.isfinite(value):
        raise FloatingPointError("grad_check: graph output is not finite")

    def evaluate(current):
        return float(build({k: Tensor(v) for k, v in current.items()}).data)

    report = GradCheckReport()
    for name in names or list(params):
        base = params[name]
        numeric = np.zeros_like(base)
        bad = False
        flat = base.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = evaluate(params)
            flat[i] = orig - step
            f_minus = evaluate(params)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                bad = True
                continue
            num_flat[i] = (f_plus - f_minus) / (2.0 * step)
        if bad:
            report.nonfinite.append(name)
        a = analytic[name]
        diff = np.abs(a - numeric)
        scale = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
        report.errors[name] = float(diff.max(initial=0.0) / scale)
        if diff.size:
            report.worst_index[name] = np.unravel_index(int(diff.argmax()), diff.shape)
    return report
