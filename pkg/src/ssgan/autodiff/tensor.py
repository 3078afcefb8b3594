"""Dense-tensor computation graph with reverse-mode differentiation.

Tensors hold contiguous row-major float32 arrays (float64 is allowed so the
finite-difference checker can run graphs at high precision). Operations are
free functions; while a Tape is active they record a backward rule, and
``backward(loss, tape)`` replays the rules in reverse recording order,
accumulating gradients additively across fan-out.

Reductions (means, batch statistics, log-sums) accumulate in float64 and cast
back to the input dtype; model state itself stays float32.
"""

from __future__ import annotations

import numpy as np

PROB_EPS = 1e-7          # probabilities clamped to [PROB_EPS, 1 - PROB_EPS] before logs
BN_VAR_FLOOR = 1e-5      # batch-norm variance floor
BN_MOMENTUM = 0.9        # running-statistics momentum
LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class GraphError(RuntimeError):
    """Raised on invalid tape usage (non-scalar loss, reused tape, ...)."""


class Tensor:
    """n-dimensional value with an optional gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad", "_rec")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._rec = False  # True when produced by a recorded operation

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def _needs(self) -> bool:
        return self.requires_grad or self._rec

    def _acc(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of operations; context manager activates recording."""

    def __init__(self):
        self._records: list[tuple[Tensor, callable]] = []
        self._used = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPES.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._records)


def _record(out: Tensor, inputs: tuple[Tensor, ...], back) -> Tensor:
    """Attach a backward rule to the active tape if any input needs gradients."""
    if _TAPES:
        if any(t._needs() for t in inputs):
            out._rec = True
            _TAPES[-1]._records.append((out, back))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate gradients of every requires_grad tensor reachable from loss."""
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape._used:
        raise GraphError("tape already consumed by a previous backward")
    tape._used = True
    loss.grad = np.ones_like(loss.data)
    for out, back in reversed(tape._records):
        if out.grad is None:
            continue  # branch not on the path from loss
        back(out.grad)


def no_tape_active() -> bool:
    return not _TAPES


def _scalar(g) -> float:
    return float(np.asarray(g).reshape(-1)[0])


# ---------------------------------------------------------------------------
# elementwise arithmetic

def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def back(g):
        if a._needs():
            a._acc(_unbroadcast(g, a.shape))
        if b._needs():
            b._acc(_unbroadcast(g, b.shape))

    return _record(out, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def back(g):
        if a._needs():
            a._acc(_unbroadcast(g, a.shape))
        if b._needs():
            b._acc(_unbroadcast(-g, b.shape))

    return _record(out, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def back(g):
        if a._needs():
            a._acc(_unbroadcast(g * b.data, a.shape))
        if b._needs():
            b._acc(_unbroadcast(g * a.data, b.shape))

    return _record(out, (a, b), back)


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * a.dtype.type(s))

    def back(g):
        if a._needs():
            a._acc(g * a.dtype.type(s))

    return _record(out, (a,), back)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def square(a: Tensor) -> Tensor:
    out = Tensor(a.data * a.data)

    def back(g):
        if a._needs():
            a._acc(g * (2.0 * a.data))

    return _record(out, (a,), back)


# ---------------------------------------------------------------------------
# shape ops

def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def back(g):
        if a._needs():
            a._acc(g.reshape(a.shape))

    return _record(out, (a,), back)


def flatten(a: Tensor) -> Tensor:
    """Collapse all but the leading (batch) axis."""
    return reshape(a, (a.shape[0], -1))


def concat(a: Tensor, b: Tensor, axis: int) -> Tensor:
    if a.data.ndim != b.data.ndim:
        raise ShapeError(f"concat rank mismatch: {a.shape} vs {b.shape}")
    for ax in range(a.data.ndim):
        if ax != axis % a.data.ndim and a.shape[ax] != b.shape[ax]:
            raise ShapeError(f"concat extent mismatch on axis {ax}: {a.shape} vs {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=axis))
    na = a.shape[axis]

    def back(g):
        ga, gb = np.split(g, [na], axis=axis)
        if a._needs():
            a._acc(ga)
        if b._needs():
            b._acc(np.ascontiguousarray(gb))

    return _record(out, (a, b), back)


def stop_gradient(a: Tensor) -> Tensor:
    """Copy of the value with the graph cut; gradients do not flow past it."""
    return Tensor(a.data.copy())


def broadcast_channels(v: Tensor, height: int, width: int) -> Tensor:
    """[B,C] -> [B,C,H,W] constant spatial planes (one-hot image conditioning)."""
    b, c = v.shape
    out = Tensor(np.broadcast_to(v.data[:, :, None, None], (b, c, height, width)).copy())

    def back(g):
        if v._needs():
            v._acc(g.sum(axis=(2, 3)))

    return _record(out, (v,), back)


# ---------------------------------------------------------------------------
# matmul

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if b.data.ndim != 2 or a.data.ndim not in (2, 3) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def back(g):
        if a._needs():
            a._acc(g @ b.data.T)
        if b._needs():
            if a.data.ndim == 2:
                b._acc(a.data.T @ g)
            else:
                b._acc(np.tensordot(a.data, g, axes=([0, 1], [0, 1])))

    return _record(out, (a, b), back)


# ---------------------------------------------------------------------------
# activations

def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    def back(g):
        if x._needs():
            x._acc(g * (x.data > 0))

    return _record(out, (x,), back)


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    out = Tensor(np.where(x.data > 0, x.data, x.dtype.type(slope) * x.data))

    def back(g):
        if x._needs():
            x._acc(g * np.where(x.data > 0, x.dtype.type(1.0), x.dtype.type(slope)))

    return _record(out, (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    pos = d >= 0
    y = np.empty_like(d)
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    y[~pos] = e / (1.0 + e)
    out = Tensor(y)

    def back(g):
        if x._needs():
            x._acc(g * (y * (1.0 - y)))

    return _record(out, (x,), back)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y)

    def back(g):
        if x._needs():
            x._acc(g * (1.0 - y * y))

    return _record(out, (x,), back)


_ACTIVATIONS = {"relu": relu, "leaky_relu": leaky_relu, "sigmoid": sigmoid, "tanh": tanh}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation kind {kind!r}") from None


# ---------------------------------------------------------------------------
# reductions and losses

def mean_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(np.mean(x.data, dtype=np.float64), dtype=x.dtype))
    n = x.size

    def back(g):
        if x._needs():
            x._acc(np.full_like(x.data, x.dtype.type(_scalar(g) / n)))

    return _record(out, (x,), back)


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(np.sum(x.data, dtype=np.float64), dtype=x.dtype))

    def back(g):
        if x._needs():
            x._acc(np.full_like(x.data, x.dtype.type(_scalar(g))))

    return _record(out, (x,), back)


def bce_terms(p: Tensor, target: str) -> Tensor:
    """Mean of log(p) (target 'real') or log(1-p) (target 'fake').

    Probabilities are clamped to [PROB_EPS, 1-PROB_EPS] first, so the result
    is finite for any input in [0,1]. Sign convention: this is the raw
    log-likelihood term (a quantity to maximize).
    """
    if target not in ("real", "fake"):
        raise ValueError(f"target must be 'real' or 'fake', got {target!r}")
    lo = p.dtype.type(PROB_EPS)
    hi = p.dtype.type(1.0 - PROB_EPS)
    pc = np.clip(p.data, lo, hi)
    if target == "real":
        terms = np.log(pc)
    else:
        terms = np.log1p(-pc)
    out = Tensor(np.asarray(np.mean(terms, dtype=np.float64), dtype=p.dtype))
    n = p.size
    inside = (p.data > lo) & (p.data < hi)

    def back(g):
        if p._needs():
            gv = _scalar(g) / n
            if target == "real":
                p._acc(np.where(inside, p.dtype.type(gv) / pc, p.dtype.type(0.0)))
            else:
                p._acc(np.where(inside, p.dtype.type(-gv) / (1.0 - pc), p.dtype.type(0.0)))

    return _record(out, (p,), back)


def blocks_log_likelihood(logits: Tensor, labels: np.ndarray, k: int) -> Tensor:
    """Mean over the batch of the log-likelihood of the true classes.

    logits is [B, d*k] seen as d independent softmax blocks of width k;
    labels is [B, d] integers in [0, k). Per sample the block log-probs are
    summed, then averaged over the batch. Returns the value to maximize.
    """
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[:, None]
    b, dk = logits.shape
    d = dk // k
    if d * k != dk or labels.shape != (b, d):
        raise ShapeError(f"logits {logits.shape} not compatible with labels {labels.shape} and k={k}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range [0,{k}): min={labels.min()} max={labels.max()}")
    lg = logits.data.reshape(b, d, k)
    m = lg.max(axis=2, keepdims=True)
    z = np.exp(lg - m)
    denom = z.sum(axis=2, keepdims=True, dtype=np.float64)
    logp = (lg - m) - np.log(denom).astype(lg.dtype)
    rows = np.arange(b)[:, None]
    cols = np.arange(d)[None, :]
    picked = logp[rows, cols, labels]  # [B, d]
    out = Tensor(np.asarray(np.mean(picked.sum(axis=1), dtype=np.float64), dtype=logits.dtype))
    softmax = (z / denom).astype(lg.dtype)

    def back(g):
        if logits._needs():
            grad = -softmax.copy()
            np.add.at(grad, (rows, cols, labels), 1.0)
            logits._acc(grad.reshape(b, dk) * logits.dtype.type(_scalar(g) / b))

    return _record(out, (logits,), back)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean log-probability of the true class; single-block case (to maximize)."""
    return blocks_log_likelihood(logits, np.asarray(labels).reshape(-1, 1), logits.shape[1])


# ---------------------------------------------------------------------------
# batch normalization

class BatchNormState:
    """Running statistics buffer pair for one batch-norm site."""

    __slots__ = ("mean", "var")

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               train: bool) -> Tensor:
    """Normalize per channel; train mode uses batch stats and updates state.

    x is [B,C] or [B,C,H,W] with C the channel axis. The effective variance
    is floored by adding BN_VAR_FLOOR under the square root (the standard
    stabilization, smooth everywhere); running statistics blend with momentum
    BN_MOMENTUM.
    """
    if x.data.ndim == 2:
        axes = (0,)
        cshape = (1, -1)
    elif x.data.ndim == 4:
        axes = (0, 2, 3)
        cshape = (1, -1, 1, 1)
    else:
        raise ShapeError(f"batch_norm expects 2-D or 4-D input, got {x.shape}")
    dt = x.dtype

    if train:
        if x.shape[0] < 2:
            raise ValueError(f"batch_norm train mode needs batch >= 2, got {x.shape[0]}")
        mu = np.mean(x.data, axis=axes, dtype=np.float64)
        var = np.mean((x.data - mu.reshape(cshape).astype(dt)) ** 2, axis=axes, dtype=np.float64)
        mu32 = mu.astype(dt)
        var32 = var.astype(dt)
        state.mean[:] = dt.type(BN_MOMENTUM) * state.mean + dt.type(1 - BN_MOMENTUM) * mu32
        state.var[:] = dt.type(BN_MOMENTUM) * state.var + dt.type(1 - BN_MOMENTUM) * var32
    else:
        mu32 = state.mean.astype(dt)
        var32 = state.var.astype(dt)

    sigma = np.sqrt(var32 + dt.type(BN_VAR_FLOOR))
    xhat = (x.data - mu32.reshape(cshape)) / sigma.reshape(cshape)
    out = Tensor(gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape))

    def back(g):
        if gamma._needs():
            gamma._acc(np.sum(g * xhat, axis=axes, dtype=np.float64).astype(dt))
        if beta._needs():
            beta._acc(np.sum(g, axis=axes, dtype=np.float64).astype(dt))
        if x._needs():
            gx_hat = g * gamma.data.reshape(cshape)
            if train:
                mean_g = np.mean(gx_hat, axis=axes, dtype=np.float64).astype(dt)
                mean_gx = np.mean(gx_hat * xhat, axis=axes, dtype=np.float64).astype(dt)
                gx = (gx_hat - mean_g.reshape(cshape) - xhat * mean_gx.reshape(cshape)) / sigma.reshape(cshape)
            else:
                gx = gx_hat / sigma.reshape(cshape)
            x._acc(gx)

    return _record(out, (x, gamma, beta), back)


# ---------------------------------------------------------------------------
# strided 4x4 convolutions (stride 2, zero-padding 1)

_K = 4  # kernel extent
_S = 2  # stride
_P = 1  # zero padding


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (_P, _P), (_P, _P)))


def _gather_cols(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    """[B,C,h+2,w+2] padded -> [B, C*16, (h/2)*(w/2)] window columns."""
    b, c = xp.shape[:2]
    oh, ow = h // _S, w // _S
    cols = np.empty((b, c, _K, _K, oh, ow), dtype=xp.dtype)
    for i in range(_K):
        for j in range(_K):
            cols[:, :, i, j] = xp[:, :, i:i + h:_S, j:j + w:_S]
    return cols.reshape(b, c * _K * _K, oh * ow)


def _scatter_cols(cols: np.ndarray, b: int, c: int, h: int, w: int) -> np.ndarray:
    """Adjoint of _gather_cols: [B, C*16, (h/2)*(w/2)] -> [B,C,h,w] overlap-add."""
    oh, ow = h // _S, w // _S
    cols = cols.reshape(b, c, _K, _K, oh, ow)
    xp = np.zeros((b, c, h + 2 * _P, w + 2 * _P), dtype=cols.dtype)
    for i in range(_K):
        for j in range(_K):
            xp[:, :, i:i + h:_S, j:j + w:_S] += cols[:, :, i, j]
    return np.ascontiguousarray(xp[:, :, _P:h + _P, _P:w + _P])


def conv2d_down(x: Tensor, k: Tensor) -> Tensor:
    """4x4 stride-2 pad-1 convolution: [B,C,H,W] x [F,C,4,4] -> [B,F,H/2,W/2]."""
    if x.data.ndim != 4 or k.data.ndim != 4 or k.shape[2:] != (_K, _K):
        raise ShapeError(f"conv2d_down expects x[B,C,H,W], k[F,C,4,4]; got {x.shape}, {k.shape}")
    b, c, h, w = x.shape
    f, kc = k.shape[:2]
    if kc != c:
        raise ShapeError(f"conv2d_down channel mismatch: input {c} vs kernel {kc}")
    if h % 2 or w % 2 or h < _K or w < _K:
        raise ShapeError(f"conv2d_down needs even H,W >= 4, got {h}x{w}")
    oh, ow = h // _S, w // _S
    cols = _gather_cols(_pad(x.data), h, w)            # [B, C*16, OH*OW]
    km = k.data.reshape(f, c * _K * _K)
    out = Tensor((km[None] @ cols).reshape(b, f, oh, ow))

    def back(g):
        gm = g.reshape(b, f, oh * ow)
        if k._needs():
            k._acc(np.einsum("bfp,bcp->fc", gm, cols, optimize=True).reshape(k.shape))
        if x._needs():
            gcols = km.T[None] @ gm                      # [B, C*16, OH*OW]
            x._acc(_scatter_cols(gcols, b, c, h, w))

    return _record(out, (x, k), back)


def conv2d_up(x: Tensor, k: Tensor) -> Tensor:
    """Exact adjoint of conv2d_down: [B,C,H,W] x [C,F,4,4] -> [B,F,2H,2W]."""
    if x.data.ndim != 4 or k.data.ndim != 4 or k.shape[2:] != (_K, _K):
        raise ShapeError(f"conv2d_up expects x[B,C,H,W], k[C,F,4,4]; got {x.shape}, {k.shape}")
    b, c, h, w = x.shape
    kc, f = k.shape[:2]
    if kc != c:
        raise ShapeError(f"conv2d_up channel mismatch: input {c} vs kernel {kc}")
    h2, w2 = 2 * h, 2 * w
    xm = x.data.reshape(b, c, h * w)
    km = k.data.reshape(c, f * _K * _K)
    cols = np.matmul(km.T[None], xm)                    # [B, F*16, H*W]
    out = Tensor(_scatter_cols(cols, b, f, h2, w2))

    def back(g):
        gcols = _gather_cols(_pad(g), h2, w2)           # [B, F*16, H*W]
        if x._needs():
            x._acc((km[None] @ gcols).reshape(x.shape))
        if k._needs():
            k._acc(np.einsum("bcp,bkp->ck", xm, gcols, optimize=True).reshape(k.shape))

    return _record(out, (x, k), back)
