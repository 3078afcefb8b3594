"""Named parameter collections with per-parameter Adam state."""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..rng import stream
from .tensor import Tensor

ADAM_LR = 2e-4
ADAM_BETA1 = 0.5
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

WEIGHT_STD = 0.02  # zero-mean Gaussian weight init


class MissingGradError(RuntimeError):
    pass


class _AdamState:
    __slots__ = ("m", "v", "t")

    def __init__(self, shape, dtype):
        self.m = np.zeros(shape, dtype=dtype)
        self.v = np.zeros(shape, dtype=dtype)
        self.t = 0


class ParamSet:
    """Map from parameter path to trainable Tensor plus optimizer state.

    Iteration order is always lexicographic by path so every consumer
    (optimizer, checkpointing, gradient checks) is deterministic.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._state: dict[str, _AdamState] = {}

    def add(self, path: str, tensor: Tensor) -> Tensor:
        if path in self._params:
            raise ValueError(f"duplicate parameter path {path!r}")
        tensor.requires_grad = True
        self._params[path] = tensor
        self._state[path] = _AdamState(tensor.shape, tensor.dtype)
        return tensor

    def paths(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for path in self.paths():
            yield path, self._params[path]

    def __getitem__(self, path: str) -> Tensor:
        return self._params[path]

    def __contains__(self, path: str) -> bool:
        return path in self._params

    def __len__(self) -> int:
        return len(self._params)

    def state(self, path: str) -> _AdamState:
        return self._state[path]

    def num_values(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def clone_data(self) -> dict[str, np.ndarray]:
        return {path: p.data.copy() for path, p in self.items()}


@contextmanager
def frozen(params: ParamSet):
    """Temporarily drop requires_grad so backward skips these parameters."""
    for _, p in params.items():
        p.requires_grad = False
    try:
        yield
    finally:
        for _, p in params.items():
            p.requires_grad = True


def adam_step(params: ParamSet, lr: float = ADAM_LR, beta1: float = ADAM_BETA1,
              beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
    """Bias-corrected Adam update over every parameter in the set.

    Requires every parameter's gradient to be populated; zeroes gradients
    after applying the update.
    """
    for path, p in params.items():
        if p.grad is None:
            raise MissingGradError(f"no gradient for parameter {path!r}")
    for path, p in params.items():
        st = params.state(path)
        g = p.grad
        dt = p.dtype.type
        st.t += 1
        st.m[...] = dt(beta1) * st.m + dt(1.0 - beta1) * g
        st.v[...] = dt(beta2) * st.v + dt(1.0 - beta2) * (g * g)
        mhat = st.m / dt(1.0 - beta1 ** st.t)
        vhat = st.v / dt(1.0 - beta2 ** st.t)
        p.data -= dt(lr) * mhat / (np.sqrt(vhat) + dt(eps))
        p.grad = None


# ---------------------------------------------------------------------------
# initialization

def gaussian_param(params: ParamSet, path: str, shape, seed: int,
                   std: float = WEIGHT_STD, dtype=np.float32) -> Tensor:
    """Weight drawn from the (seed, "init/<path>") stream: N(0, std)."""
    rng = stream(seed, "init/" + path)
    data = (rng.standard_normal(shape, dtype=np.float32) * np.float32(std)).astype(dtype)
    return params.add(path, Tensor(data))


def zeros_param(params: ParamSet, path: str, shape, dtype=np.float32) -> Tensor:
    return params.add(path, Tensor(np.zeros(shape, dtype=dtype)))


def ones_param(params: ParamSet, path: str, shape, dtype=np.float32) -> Tensor:
    return params.add(path, Tensor(np.ones(shape, dtype=dtype)))
