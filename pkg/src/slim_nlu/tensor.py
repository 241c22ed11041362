"""Tape-based reverse-mode autodiff over numpy arrays.

Operations executed while a :class:`Tape` is active are recorded in execution
order; :meth:`Tape.backward` walks that record in reverse.  Outside a tape the
same functions only compute values, which is what inference uses.

    >>> w = Tensor([[1.0, 2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (w * w).sum()
    ...     tape.backward(loss)
    >>> w.grad.tolist()
    [[2.0, 4.0]]
"""

from __future__ import annotations

import contextlib
import contextvars
import math

import numpy as np

from .errors import ContractError, DimensionError, OutOfRangeError, StateError

PROB_EPS = 1e-7

_default_dtype = np.float32
_active_tape: contextvars.ContextVar[Tape | None] = contextvars.ContextVar("slim_active_tape", default=None)


def set_default_dtype(dtype) -> None:
    """Set the float dtype used for new tensors built from Python data (float32 or float64)."""
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _default_dtype = dtype.type


def get_default_dtype():
    return _default_dtype


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode gradients."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_node")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            dtype = arr.dtype if arr.dtype.kind == "f" else _default_dtype
        self.data = np.array(data, dtype=dtype, copy=True) if not isinstance(data, np.ndarray) else data.astype(dtype, copy=False)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: _Node | None = None

    # -- array-ish surface -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # -- operators -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return swap_last(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sigmoid(self):
        return sigmoid(self)

    def backward(self) -> None:
        if self._node is None:
            raise ContractError("backward() needs a tensor produced by tape-recorded operations")
        self._node.tape.backward(self)


class _Node:
    __slots__ = ("op", "inputs", "backward_fn", "out", "tape")

    def __init__(self, op, inputs, backward_fn, out, tape):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.out = out
        self.tape = tape


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; operations run inside the ``with`` block are
    recorded.  A tape supports a single :meth:`backward`; call :meth:`reset`
    before recording a new pass on the same object.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False
        self._token = None

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def reset(self) -> None:
        for node in self.nodes:
            node.out._node = None
        self.nodes = []
        self.consumed = False

    def record(self, op, inputs, backward_fn, out: Tensor) -> None:
        node = _Node(op, inputs, backward_fn, out, self)
        out._node = node
        out.requires_grad = True
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(param) into ``.grad`` of every reachable leaf."""
        if loss.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if loss._node is None or loss._node.tape is not self:
            raise ContractError("loss was not recorded on this tape")
        if self.consumed:
            raise StateError("backward() already ran on this tape; call reset() first")
        self.consumed = True
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward_fn(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp._node is not None and inp._node.tape is self:
                    key = id(inp)
                    grads[key] = grads[key] + gi if key in grads else gi
                else:
                    inp.grad = gi.astype(inp.dtype, copy=True) if inp.grad is None else inp.grad + gi


@contextlib.contextmanager
def no_tape():
    """Run the enclosed block without recording, even inside an active tape."""
    token = _active_tape.set(None)
    try:
        yield
    finally:
        _active_tape.reset(token)


def current_tape() -> Tape | None:
    return _active_tape.get()


def _lift(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or _default_dtype))


def _emit(op, data, inputs, backward_fn) -> Tensor:
    out = Tensor(data)
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op, inputs, backward_fn, out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a = _lift(a, getattr(b, "dtype", None))
    b = _lift(b, a.dtype)
    sa, sb = a.shape, b.shape
    return _emit("add", a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a = _lift(a, getattr(b, "dtype", None))
    b = _lift(b, a.dtype)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a = _lift(a, getattr(b, "dtype", None))
    b = _lift(b, a.dtype)
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a = _lift(a, getattr(b, "dtype", None))
    b = _lift(b, a.dtype)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _emit("div", out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two tensors with identical shapes."""
    if a.shape != b.shape:
        raise DimensionError(f"hadamard needs identical shapes, got {a.shape} and {b.shape}")
    return mul(a, b)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    x = a.data
    return _emit("log", np.log(x), (a,), lambda g: (g / x,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.exp(-np.logaddexp(0.0, -x)).astype(x.dtype, copy=False)
    return _emit("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    x = a.data
    return _emit("relu", np.maximum(x, 0), (a,), lambda g: (g * (x > 0),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _emit("gelu", out, (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _emit("clip", np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = a.shape
    axes = _norm_axes(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return _emit("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), backward)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / max(count, 1))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _emit("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _emit("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def swap_last(a: Tensor) -> Tensor:
    if a.ndim < 2:
        return a
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def expand(a: Tensor, shape) -> Tensor:
    """Broadcast ``a`` to ``shape``; the gradient is summed back."""
    old = a.shape
    return _emit("expand", np.broadcast_to(a.data, shape), (a,), lambda g: (_unbroadcast(g, old),))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def getitem(a: Tensor, index) -> Tensor:
    shape, dtype = a.shape, a.dtype
    basic = _is_basic_index(index)

    def backward(g):
        out = np.zeros(shape, dtype=dtype)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _emit("getitem", a.data[index], (a,), backward)


def concat(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    """Join two tensors along ``axis`` (vectors: ``a`` followed by ``b``)."""
    if a.ndim == 0 or b.ndim == 0:
        raise DimensionError(f"concat needs at least 1-d operands, got {a.shape} and {b.shape}")
    ax = axis % a.ndim
    if a.ndim != b.ndim or a.shape[:ax] + a.shape[ax + 1:] != b.shape[:ax] + b.shape[ax + 1:]:
        raise DimensionError(f"concat shape mismatch along axis {axis}: {a.shape} and {b.shape}")
    split = a.shape[ax]

    def backward(g):
        return np.split(g, [split], axis=ax)

    return _emit("concat", np.concatenate([a.data, b.data], axis=ax), (a, b), backward)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add gradient."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise OutOfRangeError(f"ids must lie in [0, {table.shape[0]}), got range [{ids.min()}, {ids.max()}]")
    shape, dtype = table.shape, table.dtype

    def backward(g):
        out = np.zeros(shape, dtype=dtype)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[-1]))
        return (out,)

    return _emit("embedding", table.data[ids], (table,), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy broadcasting over leading dimensions."""
    if a.ndim == 0 or b.ndim == 0:
        raise DimensionError(f"matmul needs at least 1-d operands, got {a.shape} and {b.shape}")
    k_a = a.shape[-1]
    k_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if k_a != k_b:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    out = np.matmul(ad, bd)

    def backward(g):
        A = ad[None, :] if ad.ndim == 1 else ad
        B = bd[:, None] if bd.ndim == 1 else bd
        G = g
        if bd.ndim == 1:
            G = G[..., None]
        if ad.ndim == 1:
            G = np.expand_dims(G, -2)
        ga = np.matmul(G, np.swapaxes(B, -1, -2))
        gb = np.matmul(np.swapaxes(A, -1, -2), G)
        ga = _unbroadcast(ga, A.shape).reshape(ad.shape)
        gb = _unbroadcast(gb, B.shape).reshape(bd.shape)
        return ga, gb

    return _emit("matmul", out, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


# ---------------------------------------------------------------------------
# normalisation and probabilities


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    out = z / z.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", out, (a,), backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of an m x c matrix (max-subtracted)."""
    if a.ndim != 2:
        raise DimensionError(f"softmax_rows needs a 2-d tensor, got shape {a.shape}")
    return softmax(a, axis=-1)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    d = xd.shape[-1]
    gshape = gamma.shape

    def backward(g):
        gx_hat = g * gamma.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True) / d)
        return gx, _unbroadcast(g * xhat, gshape), _unbroadcast(g, gshape)

    return _emit("layer_norm", out, (x, gamma, beta), backward)


def masked_mean(h: Tensor, mask) -> Tensor:
    """Mean of the rows of ``h`` selected by a 0/1 ``mask``.

    ``h`` is (..., n, d).  ``mask`` is either (n,) giving a (d,) result, or
    (..., S, n) giving one pooled row per mask, (..., S, d).  An all-zero mask
    pools to the zero vector.
    """
    mask = np.asarray(mask, dtype=h.dtype)
    if mask.shape[-1] != h.shape[-2]:
        raise DimensionError(f"mask length {mask.shape[-1]} does not match {h.shape[-2]} rows of h {h.shape}")
    single = mask.ndim == 1
    m = mask[None, :] if single else mask
    weights = m / np.maximum(m.sum(axis=-1, keepdims=True), 1.0)
    out = np.matmul(weights, h.data)
    hshape = h.shape

    def backward(g):
        G = g[None, :] if single else g
        return (_unbroadcast(np.matmul(np.swapaxes(weights, -1, -2), G), hshape),)

    return _emit("masked_mean", out[0] if single else out, (h,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))


# ---------------------------------------------------------------------------
# losses


def bce_loss(probs: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy with probabilities clamped to [eps, 1-eps]."""
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=probs.dtype)
    if t.shape != probs.shape:
        raise DimensionError(f"bce_loss shape mismatch: probs {probs.shape} vs targets {t.shape}")
    p_raw = probs.data
    p = np.clip(p_raw, PROB_EPS, 1.0 - PROB_EPS)
    n = max(p.size, 1)
    value = -(t * np.log(p) + (1.0 - t) * np.log1p(-p)).sum() / n
    inside = (p_raw >= PROB_EPS) & (p_raw <= 1.0 - PROB_EPS)

    def backward(g):
        return (g * inside * (-t / p + (1.0 - t) / (1.0 - p)) / n,)

    return _emit("bce_loss", np.asarray(value, dtype=probs.dtype), (probs,), backward)


def nll_loss(probs: Tensor, gold, weights=None) -> Tensor:
    """Mean of ``-log(p[gold] + eps)`` over rows with weight 1.

    ``probs`` is (..., m, c).  Rows are averaged within each leading group
    (a group with no active rows contributes 0), then groups are averaged.
    Rows need not be normalised.
    """
    if probs.ndim < 2:
        raise DimensionError(f"nll_loss needs (..., m, c) probabilities, got {probs.shape}")
    gold = np.asarray(gold, dtype=np.int64)
    if gold.shape != probs.shape[:-1]:
        raise DimensionError(f"gold shape {gold.shape} does not match probs rows {probs.shape[:-1]}")
    c = probs.shape[-1]
    if gold.size and (gold.min() < 0 or gold.max() >= c):
        raise OutOfRangeError(f"gold class index outside [0, {c})")
    w = np.ones(gold.shape, dtype=probs.dtype) if weights is None else np.asarray(weights, dtype=probs.dtype)
    if w.shape != gold.shape:
        raise DimensionError(f"weights shape {w.shape} does not match gold {gold.shape}")
    picked = np.take_along_axis(probs.data, gold[..., None], axis=-1)[..., 0]
    counts = w.sum(axis=-1, keepdims=True)
    scale = w / np.maximum(counts, 1.0)
    groups = max(int(np.prod(gold.shape[:-1])), 1)
    value = (-np.log(picked + PROB_EPS) * scale).sum() / groups
    shape, dtype = probs.shape, probs.dtype

    def backward(g):
        out = np.zeros(shape, dtype=dtype)
        np.put_along_axis(out, gold[..., None], (-g * scale / (picked + PROB_EPS) / groups)[..., None], axis=-1)
        return (out,)

    return _emit("nll_loss", np.asarray(value, dtype=probs.dtype), (probs,), backward)


def ce_loss(probs: Tensor, gold, weights=None) -> Tensor:
    """Cross-entropy of normalised rows against gold indices (see :func:`nll_loss`).

    Non-finite rows skip the normalisation check so that a diverging model
    yields a non-finite loss rather than a contract error.
    """
    if probs.ndim >= 2 and probs.size:
        sums = probs.data.sum(axis=-1)
        finite = np.isfinite(sums)
        if not np.all(np.abs(sums[finite] - 1.0) <= 1e-5):
            raise ContractError("ce_loss expects rows that sum to 1 (within 1e-5)")
    return nll_loss(probs, gold, weights)


# ---------------------------------------------------------------------------
# optimisation and verification


class Adam:
    """Adam with bias correction; clears gradients after each step."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        missing = [p.name or f"#{i}" for i, p in enumerate(self.params) if p.grad is None]
        if missing:
            raise StateError(f"no gradient for parameter(s): {', '.join(missing)}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)
            p.grad = None


def adam_step(params, state: Adam) -> None:
    """Apply one update of ``state`` (which must own ``params``)."""
    if [id(p) for p in params] != [id(p) for p in state.params]:
        raise StateError("optimizer state was built for a different parameter list")
    state.step()


def grad_check(f, params, h: float = 1e-4, return_details: bool = False, floor: float = 1e-6):
    """Worst relative error between backward() and central finite differences.

    ``f`` takes no arguments and returns a scalar tensor computed from
    ``params``; it must be deterministic.  The error of each parameter array
    is ``|g_bp - g_fd| / max(|g_bp|, |g_fd|)`` using L2 norms, which keeps
    near-zero coordinates from dominating.  The denominator is at least
    ``floor`` so that a gradient that is zero by construction (for example a
    key bias under softmax) is not judged on round-off alone.
    """
    params = list(params)
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None

    details = {}
    worst = 0.0
    with no_tape():
        for idx, p in enumerate(params):
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            nflat = numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = f().item()
                flat[i] = orig - h
                down = f().item()
                flat[i] = orig
                nflat[i] = (up - down) / (2 * h)
            a = analytic[idx]
            denom = max(np.linalg.norm(a), np.linalg.norm(numeric), floor)
            err = float(np.linalg.norm(a - numeric) / denom)
            details[p.name or f"param{idx}"] = err
            worst = max(worst, err)
    return (worst, details) if return_details else worst
