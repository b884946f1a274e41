"""Dense tensor engine with reverse-mode automatic differentiation.

Small tape-based engine over numpy buffers: every differentiable operation
records its parents and a vector-Jacobian closure on the output tensor, and
``backward`` walks the resulting acyclic graph once in reverse topological
order. The graph is freed after backward. Covers exactly the operations the
networks in this package need; no views, no fusion, no higher-order grads.

Dtype discipline: float32 by default for training, float64 for the gradient
check and geometry suites. Operations never mix dtypes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import InvalidShape, MissingGradient, NonFinite, ParamError, ShapeMismatch

FLOAT_DTYPES = {"f32": np.float32, "f64": np.float64}


def resolve_dtype(precision: str) -> np.dtype:
    if precision not in FLOAT_DTYPES:
        raise InvalidShape(f"unknown precision {precision!r}; expected f32 or f64")
    return np.dtype(FLOAT_DTYPES[precision])


class Tensor:
    """A dense array plus optional gradient and tape bookkeeping.

    ``data`` is a C-contiguous numpy array; ``grad`` (same shape) is only
    populated on leaf tensors with ``requires_grad`` after ``backward``.
    Tensors are immutable once created except through optimizer steps.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _vjp: Callable[[np.ndarray], tuple] | None = None,
    ):
        self.data = data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)


# ---------------------------------------------------------------------------
# creation
# ---------------------------------------------------------------------------


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise InvalidShape("shape must have at least one dimension")
    for s in shape:
        if s < 1:
            raise InvalidShape(f"dimension {s} is not positive")
    return shape


def zeros(shape: Sequence[int], dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(_check_shape(shape), dtype=dtype), requires_grad)


def full(shape: Sequence[int], value: float, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.full(_check_shape(shape), value, dtype=dtype), requires_grad)


def uniform(
    shape: Sequence[int],
    low: float,
    high: float,
    seed: int,
    dtype=np.float32,
    requires_grad: bool = False,
) -> Tensor:
    shape = _check_shape(shape)
    rng = np.random.default_rng(seed)
    data = rng.uniform(low, high, size=shape).astype(dtype)
    return Tensor(data, requires_grad)


def normal(
    shape: Sequence[int],
    mean: float,
    std: float,
    seed: int,
    dtype=np.float32,
    requires_grad: bool = False,
) -> Tensor:
    if std < 0:
        raise InvalidShape(f"normal std must be >= 0, got {std}")
    shape = _check_shape(shape)
    rng = np.random.default_rng(seed)
    data = (mean + std * rng.standard_normal(shape)).astype(dtype)
    return Tensor(data, requires_grad)


def glorot_uniform(shape: Sequence[int], seed: int, dtype=np.float32, requires_grad: bool = True) -> Tensor:
    """Glorot/Xavier uniform init for 2-D weights."""
    shape = _check_shape(shape)
    fan_in, fan_out = shape[0], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return uniform(shape, -limit, limit, seed, dtype=dtype, requires_grad=requires_grad)


def from_array(arr, dtype=None, requires_grad: bool = False) -> Tensor:
    data = np.asarray(arr)
    if dtype is not None:
        data = data.astype(dtype, copy=False)
    elif data.dtype not in (np.float32, np.float64):
        data = data.astype(np.float32)
    return Tensor(np.ascontiguousarray(data), requires_grad)


def parameter(arr, dtype=None) -> Tensor:
    return from_array(arr, dtype=dtype, requires_grad=True)


# ---------------------------------------------------------------------------
# op plumbing
# ---------------------------------------------------------------------------


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _vjp=vjp)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting expanded."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary_shapes(a: Tensor, b: Tensor) -> None:
    if a.data.dtype != b.data.dtype:
        raise ShapeMismatch(f"mixed dtypes {a.data.dtype} and {b.data.dtype}")
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from exc


def _require_finite(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NonFinite(f"{op} produced non-finite values")
    return data


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b)
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data + c, (a,), lambda g: (g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions disagree: {a.shape} x {b.shape}")
    if a.data.dtype != b.data.dtype:
        raise ShapeMismatch(f"mixed dtypes {a.data.dtype} and {b.data.dtype}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatch(f"transpose needs a 2-D tensor, got {a.shape}")
    return _make(np.ascontiguousarray(a.data.T), (a,), lambda g: (np.ascontiguousarray(g.T),))


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)

    def vjp(g):
        return (g * (a.data > 0),)

    return _make(out, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)

    def vjp(g):
        return (g * out * (1 - out),)

    return _make(out, (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1 - out * out),)

    return _make(out, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    out = _require_finite(np.exp(a.data), "exp")

    def vjp(g):
        return (g * out,)

    return _make(out, (a,), vjp)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only where unclamped."""
    out = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)

    def vjp(g):
        return (g * mask,)

    return _make(out, (a,), vjp)


_SERIES_CUTOFF = 1e-4


def tanhc(a: Tensor) -> Tensor:
    """Elementwise tanh(x)/x with the removable singularity at 0.

    Near zero the Taylor series 1 - x^2/3 + 2x^4/15 is used; its truncation
    error at the cutoff is far below float64 resolution.
    """
    x = a.data
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x * x / 3.0, np.tanh(safe) / safe)
    out = out.astype(x.dtype, copy=False)

    def vjp(g):
        t = np.tanh(safe)
        sech2 = 1.0 - t * t
        deriv = np.where(small, -2.0 * x / 3.0, sech2 / safe - t / (safe * safe))
        return (g * deriv.astype(x.dtype, copy=False),)

    return _make(out, (a,), vjp)


def artanhc(a: Tensor) -> Tensor:
    """Elementwise artanh(x)/x on (-1, 1), with artanhc(0) = 1."""
    x = a.data
    if np.any(np.abs(x) >= 1):
        raise NonFinite("artanhc input must lie strictly inside (-1, 1)")
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 0.5, x)
    out = np.where(small, 1.0 + x * x / 3.0, np.arctanh(safe) / safe)
    out = out.astype(x.dtype, copy=False)

    def vjp(g):
        deriv = np.where(
            small,
            2.0 * x / 3.0,
            1.0 / (safe * (1.0 - safe * safe)) - np.arctanh(safe) / (safe * safe),
        )
        return (g * deriv.astype(x.dtype, copy=False),)

    return _make(out, (a,), vjp)


# ---------------------------------------------------------------------------
# row-wise and reduction ops
# ---------------------------------------------------------------------------


def rownorm(a: Tensor) -> Tensor:
    """Euclidean norm of each row, shape (m, 1). Zero rows get zero grad."""
    if a.data.ndim != 2:
        raise ShapeMismatch(f"rownorm needs a 2-D tensor, got {a.shape}")
    out = np.sqrt(np.sum(a.data * a.data, axis=1, keepdims=True))

    def vjp(g):
        denom = np.where(out > 0, out, 1.0)
        return (g * a.data / denom,)

    return _make(out, (a,), vjp)


def clamp_rows(a: Tensor, max_norm: float) -> Tensor:
    """Rescale rows whose norm exceeds max_norm back onto that radius."""
    if a.data.ndim != 2:
        raise ShapeMismatch(f"clamp_rows needs a 2-D tensor, got {a.shape}")
    norms = np.sqrt(np.sum(a.data * a.data, axis=1, keepdims=True))
    over = norms > max_norm
    factor = np.where(over, max_norm / np.where(norms > 0, norms, 1.0), 1.0)
    out = (a.data * factor).astype(a.data.dtype, copy=False)

    def vjp(g):
        # unclamped rows: identity; clamped rows: Jacobian of m*x/|x|
        dot = np.sum(g * a.data, axis=1, keepdims=True)
        denom = np.where(norms > 0, norms, 1.0)
        proj = g * factor - np.where(over, factor * dot / (denom * denom), 0.0) * a.data
        return (proj.astype(a.data.dtype, copy=False),)

    return _make(out, (a,), vjp)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction for stability."""
    if a.data.ndim != 2:
        raise ShapeMismatch(f"softmax_rows needs a 2-D tensor, got {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = np.sum(g * out, axis=1, keepdims=True)
        return (out * (g - inner),)

    return _make(out, (a,), vjp)


def tsum(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype).reshape(1)

    def vjp(g):
        return (np.full_like(a.data, g.reshape(())),)

    return _make(out, (a,), vjp)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.mean(), dtype=a.data.dtype).reshape(1)

    def vjp(g):
        return (np.full_like(a.data, g.reshape(()) / n),)

    return _make(out, (a,), vjp)


# ---------------------------------------------------------------------------
# fused losses
# ---------------------------------------------------------------------------


def weighted_bce_mean(probs: Tensor, targets: np.ndarray, pos_weight: float) -> Tensor:
    """Mean binary cross-entropy of probabilities against 0/1 targets.

    Positive terms are scaled by ``pos_weight``; probabilities are clamped
    away from 0 and 1 at a dtype-dependent epsilon before the logs, and the
    gradient is zero in the clamped region.
    """
    p = probs.data
    t = np.asarray(targets, dtype=p.dtype)
    if p.shape != t.shape:
        raise ShapeMismatch(f"targets shape {t.shape} != probs shape {p.shape}")
    eps = 1e-7 if p.dtype == np.float32 else 1e-12
    w = float(pos_weight)
    ps = np.clip(p, eps, 1.0 - eps)
    loss = -(w * t * np.log(ps) + (1.0 - t) * np.log(1.0 - ps)).mean()
    out = np.asarray(loss, dtype=p.dtype).reshape(1)
    size = p.size

    def vjp(g):
        mask = (p >= eps) & (p <= 1.0 - eps)
        dp = (-w * t / ps + (1.0 - t) / (1.0 - ps)) / size
        return ((g.reshape(()) * dp * mask).astype(p.dtype, copy=False),)

    return _make(out, (probs,), vjp)


def softmax_cross_entropy(logits: Tensor, onehot: np.ndarray) -> Tensor:
    """Mean cross-entropy of row-wise softmax against one-hot targets."""
    x = logits.data
    t = np.asarray(onehot, dtype=x.dtype)
    if x.shape != t.shape:
        raise ShapeMismatch(f"onehot shape {t.shape} != logits shape {x.shape}")
    shifted = x - x.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    m = x.shape[0]
    out = np.asarray(-(t * logp).sum() / m, dtype=x.dtype).reshape(1)
    soft = np.exp(logp)

    def vjp(g):
        return ((g.reshape(()) * (soft - t) / m).astype(x.dtype, copy=False),)

    return _make(out, (logits,), vjp)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Accumulates d(loss)/d(leaf) into ``grad`` of every reachable leaf with
    ``requires_grad``; repeated calls keep accumulating until grads are
    cleared. The tape is freed as it is consumed.
    """
    if loss.data.size != 1:
        raise InvalidShape(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise MissingGradient("loss is not connected to any tensor with requires_grad")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g if node.grad is None else node.grad + g
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg
        node._parents = ()
        node._vjp = None


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Bias-corrected Adam state; one moment pair per parameter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ParamError(f"learning rate must be positive, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ParamError("betas must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ParamError("epsilon must be positive")


def adam_init(params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)
    state.m = [np.zeros_like(p.data) for p in params]
    state.v = [np.zeros_like(p.data) for p in params]
    return state


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """In-place bias-corrected Adam update; clears gradients afterwards."""
    for p in params:
        if p.grad is None:
            raise MissingGradient("parameter has no gradient; run backward first")
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / b1c
        vhat = v / b2c
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.epsilon)
        p.grad = None
