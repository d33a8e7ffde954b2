"""Small dense float64 tensor with reverse-mode gradient rules.

Only the operations needed by the balanced feature pyramid and the loss
gradient checks are provided. Each op records its parents and a closure that
maps the upstream gradient to per-parent gradients; ``Tensor.backward`` walks
that graph in reverse topological order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NumericFailure",
    "Tensor",
    "add",
    "mul",
    "sum_all",
    "reshape",
    "transpose",
    "matmul",
    "softmax_rows",
    "conv1x1",
    "resize_nearest",
    "maxpool_to",
    "mean_stack",
    "elementwise",
    "finite_diff_check",
    "dump",
    "load",
]


class NumericFailure(ArithmeticError):
    """Raised when a computation produces a non-finite value."""


class Tensor:
    """Row-major float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, order="C")
        if any(n < 1 for n in arr.shape):
            raise ValueError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        return mul(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of this tensor into every reachable leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ValueError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            if not node._parents:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    arr = np.asarray(data, dtype=np.float64)
    out.data = arr if arr.flags.c_contiguous else arr.copy(order="C")
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def sum_all(t: Tensor) -> Tensor:
    shape = t.shape
    return _make(np.array(t.data.sum()), (t,), lambda g: (np.broadcast_to(g, shape).copy(),))


def reshape(t: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != t.data.size:
        raise ValueError(f"reshape: cannot view {t.shape} as {shape}")
    src = t.shape
    return _make(t.data.reshape(shape), (t,), lambda g: (g.reshape(src),))


def transpose(t: Tensor) -> Tensor:
    if t.data.ndim != 2:
        raise ValueError(f"transpose expects a matrix, got shape {t.shape}")
    return _make(t.data.T, (t,), lambda g: (g.T,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def softmax_rows(t: Tensor) -> Tensor:
    """Softmax over the last axis."""
    x = t.data
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _make(s, (t,), backward)


def conv1x1(x: Tensor, weight: Tensor) -> Tensor:
    """1x1 convolution without bias: ``weight`` is ``[C_out, C_in]``, ``x`` is ``[C_in, H, W]``."""
    if x.data.ndim != 3 or weight.data.ndim != 2 or weight.shape[1] != x.shape[0]:
        raise ValueError(f"conv1x1: weight {weight.shape} does not map input {x.shape}")
    c, h, w = x.shape
    flat = x.data.reshape(c, h * w)
    wd = weight.data
    out = (wd @ flat).reshape(wd.shape[0], h, w)

    def backward(g):
        g2 = g.reshape(wd.shape[0], h * w)
        return (wd.T @ g2).reshape(c, h, w), g2 @ flat.T

    return _make(out, (x, weight), backward)


def _target_hw(target) -> tuple[int, int]:
    if target is None or len(target) != 2:
        raise ValueError(f"target size must be (H, W), got {target!r}")
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise ValueError(f"target size must be positive, got {(th, tw)}")
    return th, tw


def resize_nearest(t: Tensor, target) -> Tensor:
    """Nearest-neighbour resize of ``[C, H, W]``: ``out[c,i,j] = in[c, i*H//H', j*W//W']``."""
    if t.data.ndim != 3:
        raise ValueError(f"resize_nearest expects [C, H, W], got {t.shape}")
    th, tw = _target_hw(target)
    c, h, w = t.shape
    rows = (np.arange(th) * h) // th
    cols = (np.arange(tw) * w) // tw
    out = t.data[:, rows[:, None], cols[None, :]]

    def backward(g):
        gin = np.zeros((c, h, w))
        np.add.at(gin, (slice(None), rows[:, None], cols[None, :]), g)
        return (gin,)

    return _make(out, (t,), backward)


def maxpool_to(t: Tensor, target) -> Tensor:
    """Max-pool ``[C, H, W]`` down to ``target`` with non-overlapping integer windows.

    Ties route the gradient to the first maximum in row-major window order.
    """
    if t.data.ndim != 3:
        raise ValueError(f"maxpool_to expects [C, H, W], got {t.shape}")
    th, tw = _target_hw(target)
    c, h, w = t.shape
    if h % th or w % tw:
        raise ValueError(f"maxpool_to: {(h, w)} is not divisible into {(th, tw)} windows")
    kh, kw = h // th, w // tw
    win = t.data.reshape(c, th, kh, tw, kw).transpose(0, 1, 3, 2, 4).reshape(c, th, tw, kh * kw)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gwin = np.zeros((c, th, tw, kh * kw))
        np.put_along_axis(gwin, arg[..., None], g[..., None], axis=-1)
        gin = gwin.reshape(c, th, tw, kh, kw).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
        return (gin,)

    return _make(out, (t,), backward)


def mean_stack(ts: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of equally shaped tensors.

    Computed as ``ts[0] + sum(t - ts[0]) / L`` so the mean of identical
    tensors reproduces them bit for bit.
    """
    ts = list(ts)
    if not ts:
        raise ValueError("mean_stack needs at least one tensor")
    for t in ts[1:]:
        _check_same_shape(ts[0], t, "mean_stack")
    n = len(ts)
    ref = ts[0].data
    acc = np.zeros_like(ref)
    for t in ts[1:]:
        acc += t.data - ref
    out = ref + acc / n
    return _make(out, ts, lambda g: [g / n] * n)


def elementwise(t: Tensor, fn: Callable[[np.ndarray], np.ndarray], dfn: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    """Apply a scalar function ``fn`` with derivative ``dfn`` elementwise."""
    x = t.data
    return _make(fn(x), (t,), lambda g: (g * dfn(x),))


def finite_diff_check(f: Callable[..., Tensor], t, h: float = 1e-6) -> float:
    """Max relative error between backprop and central differences.

    ``t`` is a Tensor or a sequence of Tensors; in the latter case ``f`` is
    called with them as positional arguments. The error per element is
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    inputs = [t] if isinstance(t, Tensor) else list(t)
    values = [np.array(x.data, dtype=np.float64) for x in inputs]

    def evaluate(arrays, track):
        leaves = [Tensor(a, requires_grad=track) for a in arrays]
        out = f(*leaves)
        if out.data.size != 1:
            raise ValueError(f"checked function must return a scalar, got shape {out.shape}")
        val = float(out.data.reshape(-1)[0])
        if not np.isfinite(val):
            raise NumericFailure(f"function value is not finite: {val}")
        return leaves, out, val

    leaves, out, _ = evaluate(values, True)
    out.backward()
    worst = 0.0
    for i, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(values[i])
        flat = values[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            _, _, fp = evaluate(values, False)
            flat[j] = orig - h
            _, _, fm = evaluate(values, False)
            flat[j] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic.reshape(-1)[j]
            if not np.isfinite(a):
                raise NumericFailure(f"analytic gradient is not finite at input {i}, element {j}")
            worst = max(worst, abs(a - numeric) / max(1.0, abs(numeric)))
    return worst


def dump(t: Tensor, path) -> None:
    """Write ``t`` as: u64 extent count, u64 extents, raw float64 values (all little-endian)."""
    shape = t.shape
    payload = struct.pack(f"<Q{len(shape)}Q", len(shape), *shape)
    payload += t.data.astype("<f8").tobytes(order="C")
    Path(path).write_bytes(payload)


def load(path) -> Tensor:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated tensor header")
    (ndim,) = struct.unpack_from("<Q", raw, 0)
    header = 8 + 8 * ndim
    shape = struct.unpack_from(f"<{ndim}Q", raw, 8)
    count = int(np.prod(shape)) if ndim else 1
    if len(raw) != header + 8 * count:
        raise ValueError(f"{path}: expected {count} values for shape {shape}")
    data = np.frombuffer(raw, dtype="<f8", offset=header).astype(np.float64).reshape(shape)
    return Tensor(data)
