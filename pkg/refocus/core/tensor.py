# refocus/core/tensor.py
"""Dense float64 tensors with a reverse-mode tape.

Ops record onto the tape that is active in the current context (``with Tape()
as tape:``). Outside a tape every op is a plain numpy computation, so a Tensor
that was never recorded is immutable and safe to share across threads.
Shapes never broadcast implicitly: scalars go through ``scale``/``shift`` and
row or axis broadcasts through ``add_bias``/``expand``.
"""
from __future__ import annotations

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from refocus.utils import ContractError, NumericalError, ShapeError

Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("refocus_active_tape", default=None)

GELU_C = float(np.sqrt(2.0 / np.pi))


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericalError(f"{where} produced non-finite values")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, name or "tensor construction")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        obj = cls.__new__(cls)
        obj.data = arr
        obj.requires_grad = requires_grad
        obj.grad = None
        obj.name = None
        return obj

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else shift(self, -float(other))

    def __rsub__(self, other):
        return shift(scale(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        return div(self, other) if isinstance(other, Tensor) else scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


@dataclass
class TapeEntry:
    op: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward: Backward


class Tape:
    """Execution-ordered record of differentiable ops."""

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> bool:
        _active_tape.reset(self._token)
        self._token = None
        return False

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry) -> None:
        self.entries.append(entry)

    def backward(self, root: Tensor) -> None:
        """Populate ``grad`` on every requires_grad ancestor of a scalar root."""
        if root.size != 1:
            raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
        grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        holders: Dict[int, Tensor] = {id(root): root}
        for entry in reversed(self.entries):
            g = grads.get(id(entry.output))
            if g is None:
                continue
            for t, ig in zip(entry.inputs, entry.backward(g)):
                if ig is None or not t.requires_grad:
                    continue
                if ig.shape != t.shape:
                    raise ShapeError(f"{entry.op} backward returned {ig.shape} for input {t.shape}")
                key = id(t)
                grads[key] = ig if key not in grads else grads[key] + ig
                holders[key] = t
        for key, t in holders.items():
            if not t.requires_grad:
                continue
            g = grads[key]
            _check_finite(g, f"gradient of {t.name or 'tensor'}")
            t.grad = np.array(g, copy=True) if t.grad is None else t.grad + g


def apply_op(op: str, out: np.ndarray, inputs: Sequence[Tensor], backward: Backward) -> Tensor:
    """Wrap an op result and record it when any input takes part in the tape."""
    _check_finite(out, op)
    requires = any(t.requires_grad for t in inputs)
    result = Tensor._wrap(out, requires)
    if requires:
        tape = _active_tape.get()
        if tape is not None:
            tape.record(TapeEntry(op, result, tuple(inputs), backward))
    return result


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return apply_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return apply_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    return apply_op("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("div", a, b)
    out = a.data / b.data
    return apply_op("div", out, (a, b), lambda g: (g / b.data, -g * out / b.data))


def scale(x, c: float) -> Tensor:
    x, c = as_tensor(x), float(c)
    return apply_op("scale", x.data * c, (x,), lambda g: (g * c,))


def shift(x, c: float) -> Tensor:
    x, c = as_tensor(x), float(c)
    return apply_op("shift", x.data + c, (x,), lambda g: (g,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return apply_op("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def gelu(x) -> Tensor:
    """GELU, tanh approximation."""
    x = as_tensor(x)
    v = x.data
    th = np.tanh(GELU_C * (v + 0.044715 * v ** 3))
    out = 0.5 * v * (1.0 + th)

    def _backward(g):
        d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th ** 2) * GELU_C * (1.0 + 3 * 0.044715 * v ** 2)
        return (g * d,)

    return apply_op("gelu", out, (x,), _backward)


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if (x.data < 0).any():
        raise ContractError("sqrt of a negative value")
    out = np.sqrt(x.data)

    def _backward(g):
        # zero where the input is zero (subgradient of a floored std)
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return apply_op("sqrt", out, (x,), _backward)


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: add, sub, mul, scale, relu, gelu."""
    table = {"add": add, "sub": sub, "mul": mul, "scale": scale, "relu": relu, "gelu": gelu}
    if op not in table:
        raise ContractError(f"unknown elementwise op {op!r}")
    return table[op](*args)


# linear algebra and layout

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return apply_op("matmul", a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def add_bias(x, bias) -> Tensor:
    """Add a length-n vector to every row of ``x[..., n]``."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeError(f"add_bias: bias {bias.shape} does not match rows of {x.shape}")
    n = bias.shape[0]
    return apply_op("add_bias", x.data + bias.data, (x, bias),
                    lambda g: (g, g.reshape(-1, n).sum(axis=0)))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {e}")
    return apply_op("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def swapaxes(x, axis1: int, axis2: int) -> Tensor:
    x = as_tensor(x)
    out = np.ascontiguousarray(np.swapaxes(x.data, axis1, axis2))
    return apply_op("swapaxes", out, (x,), lambda g: (np.ascontiguousarray(np.swapaxes(g, axis1, axis2)),))


def expand(x, axis: int, count: int) -> Tensor:
    """Insert ``axis`` and repeat ``x`` ``count`` times along it."""
    x = as_tensor(x)
    out = np.repeat(np.expand_dims(x.data, axis), count, axis=axis)
    return apply_op("expand", out, (x,), lambda g: (g.sum(axis=axis),))


def gather(x, index, axis: int) -> Tensor:
    """``np.take_along_axis`` with a scatter-add backward."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    if index.ndim != x.ndim:
        raise ShapeError(f"gather: index rank {index.ndim} differs from tensor rank {x.ndim}")
    out = np.take_along_axis(x.data, index, axis=axis)

    def _backward(g):
        full = np.zeros_like(x.data)
        where = list(np.indices(index.shape, sparse=True))
        where[axis] = index
        np.add.at(full, tuple(where), g)
        return (full,)

    return apply_op("gather", out, (x,), _backward)


# reductions and normalisation

def reduce(op: str, x, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    if op not in ("mean", "sum"):
        raise ContractError(f"unknown reduction {op!r}")
    out = np.sum(x.data, axis=axis)
    n = x.size if axis is None else x.shape[axis]
    if op == "mean":
        out = out / n

    def _backward(g):
        g = g if axis is None else np.expand_dims(g, axis)
        full = np.array(np.broadcast_to(g, x.shape), dtype=np.float64)
        return (full / n if op == "mean" else full,)

    return apply_op(op, np.asarray(out, dtype=np.float64), (x,), _backward)


def reduce_mean(x, axis: Optional[int] = None) -> Tensor:
    return reduce("mean", x, axis)


def reduce_sum(x, axis: Optional[int] = None) -> Tensor:
    return reduce("sum", x, axis)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return apply_op("softmax", out, (x,), _backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last extent {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    def _backward(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        flat_g = g.reshape(-1, d)
        return dx, (flat_g * xhat.reshape(-1, d)).sum(axis=0), flat_g.sum(axis=0)

    return apply_op("layer_norm", out, (x, gain, bias), _backward)


def conv1d_same(x, kernel, pad_left: int) -> Tensor:
    """Stride-1 cross-correlation of every row of ``x[..., T]`` with a length-K kernel.

    Rows are zero-padded with ``pad_left`` zeros in front and ``K - 1 - pad_left``
    behind, so the output keeps length T.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 1:
        raise ShapeError(f"conv1d_same: kernel must be 1-D, got {kernel.shape}")
    k = kernel.shape[0]
    t = x.shape[-1]
    pad_right = k - 1 - pad_left
    if pad_right < 0 or pad_left < 0:
        raise ContractError(f"conv1d_same: pad_left {pad_left} invalid for kernel size {k}")
    flat = x.data.reshape(-1, t)
    padded = np.pad(flat, ((0, 0), (pad_left, pad_right)))
    windows = sliding_window_view(padded, k, axis=-1)
    out = (windows @ kernel.data).reshape(x.shape)

    def _backward(g):
        g2 = g.reshape(-1, t)
        dk = np.einsum("ntk,nt->k", windows, g2)
        dpad = np.zeros_like(padded)
        for j in range(k):
            dpad[:, j:j + t] += g2 * kernel.data[j]
        return dpad[:, pad_left:pad_left + t].reshape(x.shape), dk

    return apply_op("conv1d_same", out, (x, kernel), _backward)


def mse_loss(pred, target) -> Tensor:
    diff = sub(pred, target)
    return reduce_mean(mul(diff, diff))


# gradient checking

def _relative_error(a, b) -> float:
    return float(abs(a - b) / max(1.0, abs(a), abs(b)))


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences."""
    base = as_tensor(x).data.copy()
    leaf = Tensor(base, requires_grad=True)
    with Tape() as tape:
        out = f(leaf)
        if out.size != 1:
            raise ContractError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
        tape.backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(base)
    worst = 0.0
    for i in np.ndindex(base.shape):
        plus, minus = base.copy(), base.copy()
        plus[i] += h
        minus[i] -= h
        numeric = (f(Tensor(plus)).item() - f(Tensor(minus)).item()) / (2 * h)
        worst = max(worst, _relative_error(analytic[i], numeric))
    return worst


def grad_check_params(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """grad_check over parameters mutated in place; ``max_coords`` samples coordinates per tensor."""
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        out = f()
        if out.size != 1:
            raise ContractError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
        tape.backward(out)
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        coords = list(np.ndindex(p.shape))
        if max_coords is not None and len(coords) > max_coords:
            picks = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in sorted(picks)]
        for i in coords:
            orig = p.data[i]
            p.data[i] = orig + h
            fp = f().item()
            p.data[i] = orig - h
            fm = f().item()
            p.data[i] = orig
            worst = max(worst, _relative_error(analytic[i], (fp - fm) / (2 * h)))
    for p in params:
        p.zero_grad()
    return worst
