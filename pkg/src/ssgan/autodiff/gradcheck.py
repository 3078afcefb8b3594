"""Central-finite-difference verification of backward rules."""

from __future__ import annotations

import numpy as np

from .params import ParamSet
from .tensor import GraphError, Tape, backward

REL_ERR_FLOOR = 1e-4  # denominator floor for the elementwise relative error


def finite_diff_check(build, params: ParamSet, h: float = 1e-3) -> float:
    """Max elementwise relative error between backward and central differences.

    ``build`` is a zero-argument callable that constructs the scalar loss
    from the current parameter values; it must be deterministic. Difference
    quotients are accumulated in float64 regardless of parameter dtype.
    """
    params.zero_grads()
    with Tape() as tape:
        loss = build()
    if loss.size != 1:
        raise GraphError(f"finite_diff_check needs a scalar loss, got {loss.shape}")
    backward(loss, tape)
    analytic = {
        path: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for path, p in params.items()
    }
    params.zero_grads()

    def eval_loss() -> float:
        return float(np.asarray(build().data, dtype=np.float64).reshape(()))

    worst = 0.0
    for path, p in params.items():
        flat = p.data.reshape(-1)
        bp = analytic[path].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + p.dtype.type(h)
            xp = float(flat[i])
            fp = eval_loss()
            flat[i] = orig - p.dtype.type(h)
            xm = float(flat[i])
            fm = eval_loss()
            flat[i] = orig
            fd = (fp - fm) / (xp - xm)
            err = abs(fd - float(bp[i])) / max(abs(fd), abs(float(bp[i])), REL_ERR_FLOOR)
            if err > worst:
                worst = err
    return worst
