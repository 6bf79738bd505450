# -*- coding: utf-8 -*-
"""
Dense tensors with reverse-mode differentiation.

Arrays live in numpy (row-major, batch on the leading axis). Every op is an
`Op` subclass with a forward on raw arrays and a backward returning one
gradient per input. `ComputationTape` orders the recorded graph so each node
comes after its inputs; `Tensor.backward` walks it in reverse exactly once.

Any op whose output (or gradient) is not finite raises `NonFiniteError`
naming the op.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from grok_lab.errors import NonFiniteError, ShapeError


_DEFAULT_DTYPE = np.dtype(np.float32)
_GRAD_ENABLED = True

# finite stand-in for -inf so masked scores keep every value finite
MASK_VALUE = -1e9
NORM_EPS = 1e-5


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported dtype {dt}; use float32 or float64")
    _DEFAULT_DTYPE = dt


@contextmanager
def default_dtype(dtype) -> Iterator[None]:
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


@contextmanager
def no_grad() -> Iterator[None]:
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.isfinite(arr).all():
        bad = int(arr.size - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(where, f"{bad} of {arr.size} values")


class Tensor:
    def __init__(self, data, requires_grad: bool = False, dtype=None, _op: Optional["Op"] = None):
        arr = np.asarray(data, dtype=_DEFAULT_DTYPE if dtype is None else dtype)
        # 0-d arrays stay 0-d; ascontiguousarray would promote them to shape (1,)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._op = _op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item() if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> "ComputationTape":
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {self.shape}")
        tape = ComputationTape.from_output(self)
        tape.backward(self)
        return tape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


class Op:
    name = "op"

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs) -> Tensor:
        op = cls(*inputs)
        out = op.forward(*(t.data for t in inputs), **kwargs)
        _check_finite(out, cls.name)
        requires = _GRAD_ENABLED and any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires, dtype=out.dtype, _op=op if requires else None)


class ComputationTape:
    """Recorded ops in topological order: inputs always precede their consumers."""

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "ComputationTape":
        order: List[Tensor] = []
        visited = set()
        stack = [(out, False)]
        while stack:
            node, children_done = stack.pop()
            if id(node) in visited:
                continue
            if children_done:
                visited.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            if node._op is not None:
                for parent in node._op.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def backward(self, out: Tensor) -> None:
        out._accumulate(np.ones_like(out.data))
        for node in reversed(self.nodes):
            op = node._op
            if op is None or node.grad is None:
                continue
            grads = op.backward(node.grad)
            for parent, g in zip(op.inputs, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent._op is None:
                    # leaf gradients only
                    _check_finite(g, f"{op.name} backward")
                parent._accumulate(g)
            # intermediate nodes are not reused after one backward
            node._op = None
            if node is not out:
                node.grad = None


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


class MatMul(Op):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
        if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f"batched matmul needs equal batch axes, got {a.shape} and {b.shape}")
        if b.ndim == 2 and a.ndim > 2:
            # flatten leading axes into one gemm
            out = a.reshape(-1, a.shape[-1]) @ b
            return out.reshape(a.shape[:-1] + (b.shape[-1],))
        return np.matmul(a, b)

    def backward(self, grad):
        a, b = (t.data for t in self.inputs)
        if b.ndim == 2 and a.ndim > 2:
            g2 = grad.reshape(-1, grad.shape[-1])
            ga = (g2 @ b.T).reshape(a.shape)
            gb = a.reshape(-1, a.shape[-1]).T @ g2
        else:
            ga = np.matmul(grad, _swap(b))
            gb = np.matmul(_swap(a), grad)
        return ga, gb


class Add(Op):
    name = "add"

    def forward(self, a, b):
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError as exc:
            raise ShapeError(f"add shapes {a.shape} and {b.shape} do not broadcast") from exc
        return a + b

    def backward(self, grad):
        a, b = self.inputs
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


class Mul(Op):
    name = "mul"

    def forward(self, a, b):
        if a.shape != b.shape:
            raise ShapeError(f"mul needs equal shapes, got {a.shape} and {b.shape}")
        return a * b

    def backward(self, grad):
        a, b = (t.data for t in self.inputs)
        return grad * b, grad * a


class Scale(Op):
    name = "scale"

    def forward(self, x, c: float = 1.0):
        self.c = c
        return x * x.dtype.type(c)

    def backward(self, grad):
        return (grad * grad.dtype.type(self.c),)


class Relu(Op):
    name = "relu"

    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, x.dtype.type(0))

    def backward(self, grad):
        return (grad * self.mask,)


class Total(Op):
    name = "sum"

    def forward(self, x):
        return np.asarray(x.sum(), dtype=x.dtype)

    def backward(self, grad):
        x = self.inputs[0].data
        return (np.full(x.shape, grad.reshape(()), dtype=x.dtype),)


class Transpose(Op):
    name = "transpose"

    def forward(self, x):
        return np.ascontiguousarray(_swap(x))

    def backward(self, grad):
        return (_swap(grad),)


class Concat(Op):
    name = "concat"

    def forward(self, *arrays, axis: int = -1):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


class SplitHeads(Op):
    """(batch, seq, heads * d_head) -> (batch, heads, seq, d_head)."""

    name = "split_heads"

    def forward(self, x, n_heads: int = 1):
        if x.ndim != 3 or x.shape[-1] % n_heads:
            raise ShapeError(f"split_heads cannot split shape {x.shape} into {n_heads} heads")
        b, s, f = x.shape
        return np.ascontiguousarray(x.reshape(b, s, n_heads, f // n_heads).transpose(0, 2, 1, 3))

    def backward(self, grad):
        b, h, s, d = grad.shape
        return (grad.transpose(0, 2, 1, 3).reshape(b, s, h * d),)


class MergeHeads(Op):
    """(batch, heads, seq, d_head) -> (batch, seq, heads * d_head), heads in order."""

    name = "merge_heads"

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"merge_heads expects (batch, heads, seq, d_head), got {x.shape}")
        b, h, s, d = x.shape
        return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, s, h * d)

    def backward(self, grad):
        b, h, s, d = self.inputs[0].data.shape
        return (np.ascontiguousarray(grad.reshape(b, s, h, d).transpose(0, 2, 1, 3)),)


class TakePosition(Op):
    name = "take_position"

    def forward(self, x, index: int = -1):
        self.index = index
        return np.ascontiguousarray(x[:, index, :])

    def backward(self, grad):
        x = self.inputs[0].data
        out = np.zeros_like(x)
        out[:, self.index, :] = grad
        return (out,)


class GatherRows(Op):
    name = "gather_rows"

    def forward(self, table, indices=None):
        idx = np.asarray(indices)
        if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
            raise IndexError(f"gather_rows index out of range for table with {table.shape[0]} rows")
        self.indices = idx
        return table[idx]

    def backward(self, grad):
        table = self.inputs[0].data
        out = np.zeros_like(table)
        np.add.at(out, self.indices, grad)
        return (out,)


class CausalMask(Op):
    name = "causal_mask"

    def forward(self, scores):
        t = scores.shape[-1]
        self.keep = np.tril(np.ones((t, t), dtype=bool))
        return np.where(self.keep, scores, scores.dtype.type(MASK_VALUE))

    def backward(self, grad):
        return (grad * self.keep,)


class Softmax(Op):
    name = "softmax"

    def forward(self, x, axis: int = -1):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class L2Normalize(Op):
    name = "l2_normalize"

    def forward(self, x, axis: int = -1, eps: float = 1e-12):
        self.axis = axis
        self.eps = eps
        norm = np.sqrt((x * x).sum(axis=axis, keepdims=True))
        self.small = norm <= eps
        self.denom = np.maximum(norm, x.dtype.type(eps))
        self.out = x / self.denom
        return self.out

    def backward(self, grad):
        y = self.out
        full = (grad - y * (grad * y).sum(axis=self.axis, keepdims=True)) / self.denom
        # below eps the denominator is the constant eps
        passthrough = grad / grad.dtype.type(self.eps)
        return (np.where(self.small, passthrough, full),)


class LayerNorm(Op):
    name = "layer_norm"

    def forward(self, x, gamma, beta):
        if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
            raise ShapeError(f"layer_norm affine params must have shape ({x.shape[-1]},)")
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + x.dtype.type(NORM_EPS))
        self.xhat = (x - mu) * self.inv_std
        return self.xhat * gamma + beta

    def backward(self, grad):
        gamma = self.inputs[1].data
        lead = tuple(range(grad.ndim - 1))
        dxhat = grad * gamma
        dx = self.inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - self.xhat * (dxhat * self.xhat).mean(axis=-1, keepdims=True)
        )
        return dx, (grad * self.xhat).sum(axis=lead), grad.sum(axis=lead)


class RMSNorm(Op):
    name = "rms_norm"

    def forward(self, x, gamma):
        if gamma.shape != (x.shape[-1],):
            raise ShapeError(f"rms_norm gain must have shape ({x.shape[-1]},)")
        self.rms = np.sqrt((x * x).mean(axis=-1, keepdims=True) + x.dtype.type(NORM_EPS))
        self.xn = x / self.rms
        return self.xn * gamma

    def backward(self, grad):
        x, gamma = (t.data for t in self.inputs)
        lead = tuple(range(grad.ndim - 1))
        dxn = grad * gamma
        dx = dxn / self.rms - x * (dxn * x).mean(axis=-1, keepdims=True) / self.rms ** 3
        return dx, (grad * self.xn).sum(axis=lead)


class CrossEntropy(Op):
    """Mean cross-entropy of (batch, classes) logits against integer labels."""

    name = "cross_entropy"

    def forward(self, logits, labels=None):
        y = np.asarray(labels)
        if logits.ndim != 2 or y.shape != (logits.shape[0],):
            raise ShapeError(f"cross_entropy expects (batch, classes) logits and (batch,) labels")
        if y.size and (y.min() < 0 or y.max() >= logits.shape[1]):
            raise IndexError(f"label out of range for {logits.shape[1]} classes")
        self.labels = y
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        self.log_probs = shifted - lse
        rows = np.arange(y.shape[0])
        return np.asarray(-self.log_probs[rows, y].mean(), dtype=logits.dtype)

    def backward(self, grad):
        n = self.labels.shape[0]
        probs = np.exp(self.log_probs)
        probs[np.arange(n), self.labels] -= 1
        return (probs * (grad.reshape(()) / n),)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def scale(x: Tensor, c: float) -> Tensor:
    return Scale.apply(x, c=c)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def total(x: Tensor) -> Tensor:
    return Total.apply(x)


def transpose(x: Tensor) -> Tensor:
    return Transpose.apply(x)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    return SplitHeads.apply(x, n_heads=n_heads)


def merge_heads(x: Tensor) -> Tensor:
    return MergeHeads.apply(x)


def take_position(x: Tensor, index: int = -1) -> Tensor:
    return TakePosition.apply(x, index=index)


def gather_rows(table: Tensor, indices) -> Tensor:
    return GatherRows.apply(table, indices=indices)


def causal_mask(scores: Tensor) -> Tensor:
    return CausalMask.apply(scores)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    return L2Normalize.apply(x, axis=axis, eps=eps)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    return LayerNorm.apply(x, gamma, beta)


def rms_norm(x: Tensor, gamma: Tensor) -> Tensor:
    return RMSNorm.apply(x, gamma)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    return CrossEntropy.apply(logits, labels=labels)


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], step: float = 1e-5) -> float:
    """
    Compare the analytic gradient of scalar f(*inputs) against central
    differences. Returns max |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
    over every coordinate of every input that requires grad.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise ValueError("grad_check needs float64 inputs")
        t.zero_grad()

    f(*inputs).backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]
    for g in analytic:
        _check_finite(g, "grad_check analytic gradient")

    worst = 0.0
    with no_grad():
        for t, ga in zip(inputs, analytic):
            if not t.requires_grad:
                continue
            flat = t.data.reshape(-1)
            gflat = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                fp = f(*inputs).item()
                flat[i] = orig - step
                fm = f(*inputs).item()
                flat[i] = orig
                numeric = (fp - fm) / (2 * step)
                err = abs(gflat[i] - numeric) / max(1e-8, abs(gflat[i]) + abs(numeric))
                worst = max(worst, float(err))
    return worst
