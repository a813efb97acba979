"""Reverse-mode automatic differentiation over dense float64 tensors.

The graph is a tape: every differentiable operation appends one node with a
monotonically increasing id, and ``backward`` walks the nodes reachable from
the loss in decreasing id order, so each node is visited exactly once and
always after all of its consumers. Gradients from multiple uses of a tensor
accumulate by summation.

Multi-output operations (the spectral transforms) are supported by letting a
node own several output tensors; its backward rule receives one cotangent
per output.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from ._kernels import col2im, im2col
from .errors import ConfigurationError, DimensionError, InputError, UsageError

_NODE_IDS = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation forwards)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A float64 array plus its place in the gradient tape."""

    __slots__ = ("values", "requires_grad", "grad", "node", "name")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: _Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad}{tag})"


class _Node:
    __slots__ = ("nid", "inputs", "outputs", "backward_fn")

    def __init__(self, inputs, outputs, backward_fn):
        self.nid = next(_NODE_IDS)
        self.inputs = inputs
        self.outputs = outputs
        self.backward_fn = backward_fn


def apply_op(
    inputs: Sequence[Tensor],
    out_values: Sequence[np.ndarray],
    backward_fn: Callable[..., Sequence[np.ndarray | None]],
) -> tuple[Tensor, ...]:
    """Create output tensors and record a tape node when gradients are live.

    ``backward_fn`` receives one cotangent array per output (zeros where an
    output is unused) and returns one gradient array (or None) per input.
    """
    track = _grad_enabled and any(t.requires_grad for t in inputs)
    outs = tuple(Tensor(v, requires_grad=track) for v in out_values)
    if track:
        node = _Node(tuple(inputs), outs, backward_fn)
        for o in outs:
            o.node = node
    return outs


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from loss.

    Cotangents live in a per-pass buffer and are merged into ``grad`` only at
    the end, so repeated backward calls accumulate into leaves without ever
    re-propagating a previous pass's intermediates.
    """
    if loss.values.size != 1:
        raise UsageError(f"backward requires a scalar loss, got shape {loss.values.shape}")
    if not loss.requires_grad:
        return

    nodes: dict[int, _Node] = {}
    stack = [loss.node] if loss.node is not None else []
    while stack:
        node = stack.pop()
        if node.nid in nodes:
            continue
        nodes[node.nid] = node
        for t in node.inputs:
            if t.node is not None and t.node.nid not in nodes:
                stack.append(t.node)

    cotangents: dict[int, list] = {id(loss): [loss, np.ones_like(loss.values)]}
    for nid in sorted(nodes, reverse=True):
        node = nodes[nid]
        out_grads = tuple(
            cotangents[id(o)][1] if id(o) in cotangents else np.zeros_like(o.values)
            for o in node.outputs
        )
        in_grads = node.backward_fn(*out_grads)
        for t, g in zip(node.inputs, in_grads):
            if g is None or not t.requires_grad:
                continue
            entry = cotangents.get(id(t))
            if entry is None:
                cotangents[id(t)] = [t, np.array(g, dtype=np.float64, copy=True)]
            else:
                np.add(entry[1], g, out=entry[1])

    for tensor, cot in cotangents.values():
        if tensor.grad is None:
            tensor.grad = cot
        else:
            np.add(tensor.grad, cot, out=tensor.grad)


def _sum_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.values + b.values

    def bwd(g):
        return _sum_to_shape(g, a.values.shape), _sum_to_shape(g, b.values.shape)

    return apply_op((a, b), (out,), bwd)[0]


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.values - b.values

    def bwd(g):
        return _sum_to_shape(g, a.values.shape), _sum_to_shape(-g, b.values.shape)

    return apply_op((a, b), (out,), bwd)[0]


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.values * b.values

    def bwd(g):
        return (
            _sum_to_shape(g * b.values, a.values.shape),
            _sum_to_shape(g * a.values, b.values.shape),
        )

    return apply_op((a, b), (out,), bwd)[0]


def scale(a: Tensor, c: float) -> Tensor:
    out = a.values * c

    def bwd(g):
        return (g * c,)

    return apply_op((a,), (out,), bwd)[0]


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {a.values.shape} and {b.values.shape}"
        )
    if a.values.shape[1] != b.values.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.values.shape} x {b.values.shape}"
        )
    out = a.values @ b.values

    def bwd(g):
        return g @ b.values.T, a.values.T @ g

    return apply_op((a, b), (out,), bwd)[0]


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0.0
    out = np.where(mask, a.values, 0.0)

    def bwd(g):
        return (g * mask,)

    return apply_op((a,), (out,), bwd)[0]


def reshape(a: Tensor, shape) -> Tensor:
    out = a.values.reshape(shape)

    def bwd(g):
        return (g.reshape(a.values.shape),)

    return apply_op((a,), (out,), bwd)[0]


def tensor_sum(a: Tensor) -> Tensor:
    out = np.asarray(a.values.sum())

    def bwd(g):
        return (np.broadcast_to(g, a.values.shape),)

    return apply_op((a,), (out,), bwd)[0]


def stop_gradient(a: Tensor) -> Tensor:
    """Forward-identical copy that is a graph leaf: no gradient flows to ``a``."""
    return Tensor(a.values.copy())


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation convolution on NCHW input with FCkhkw weights."""
    if x.values.ndim != 4 or w.values.ndim != 4:
        raise DimensionError(
            f"conv2d expects 4-D input and weight, got {x.values.shape} and {w.values.shape}"
        )
    n, c, h, wd = x.values.shape
    f, cw, kh, kw = w.values.shape
    if c != cw:
        raise DimensionError(f"conv2d channel mismatch: input {c}, weight {cw}")
    hp, wp = h + 2 * pad, wd + 2 * pad
    if kh > hp or kw > wp:
        raise DimensionError(f"kernel {kh}x{kw} exceeds padded input {hp}x{wp}")
    if (hp - kh) % stride or (wp - kw) % stride:
        raise ConfigurationError(
            f"conv2d output extent is not integral: input {h}x{wd}, kernel {kh}x{kw}, "
            f"stride {stride}, pad {pad}"
        )
    h_out = (hp - kh) // stride + 1
    w_out = (wp - kw) // stride + 1

    xp = x.values
    if pad:
        xp = np.pad(xp, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    xp = np.ascontiguousarray(xp)
    cols = np.ascontiguousarray(im2col(xp, kh, kw, stride, h_out, w_out))
    w2 = w.values.reshape(f, c * kh * kw)
    out = np.matmul(w2, cols).reshape(n, f, h_out, w_out)
    if b is not None:
        out = out + b.values[None, :, None, None]

    def bwd(g):
        g2 = g.reshape(n, f, h_out * w_out)
        gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(w.values.shape)
        dcols = np.ascontiguousarray(np.matmul(w2.T, g2))
        gxp = col2im(dcols, n, c, hp, wp, kh, kw, stride, h_out, w_out)
        gx = gxp[:, :, pad : pad + h, pad : pad + wd] if pad else gxp
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    inputs = (x, w) if b is None else (x, w, b)
    return apply_op(inputs, (out,), bwd)[0]


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    n, c, h, w = x.values.shape
    if h % size or w % size:
        raise ConfigurationError(f"avg_pool2d: spatial extent {h}x{w} not divisible by {size}")
    ho, wo = h // size, w // size
    out = x.values.reshape(n, c, ho, size, wo, size).mean(axis=(3, 5))

    def bwd(g):
        gx = np.repeat(np.repeat(g, size, axis=2), size, axis=3) / (size * size)
        return (gx,)

    return apply_op((x,), (out,), bwd)[0]


def cross_entropy(
    logits: Tensor, labels: np.ndarray, weights: np.ndarray | None = None
) -> Tensor:
    """Mean over the batch of w[y_i] * (-log softmax(logits_i)[y_i]).

    Softmax uses max-subtraction for stability. ``weights``, when given, is a
    length-K array of per-class positive (or zero) factors.
    """
    if logits.values.ndim != 2:
        raise DimensionError(f"cross_entropy expects [N, K] logits, got {logits.values.shape}")
    n, k = logits.values.shape
    labels = np.asarray(labels)
    bad = (labels < 0) | (labels >= k)
    if bad.any():
        idx = int(np.argmax(bad))
        raise InputError(f"label {labels[idx]} at index {idx} outside [0, {k})")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    lognll = logsum - z[np.arange(n), labels]
    w_per = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)[labels]
    out = np.asarray((w_per * lognll).sum() / n)

    def bwd(g):
        probs = np.exp(z - logsum[:, None])
        grad = probs * w_per[:, None]
        grad[np.arange(n), labels] -= w_per
        return (grad * (float(g) / n),)

    return apply_op((logits,), (out,), bwd)[0]


def softmax_values(logits: np.ndarray) -> np.ndarray:
    """Plain softmax on raw values (no graph), for evaluation paths."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# parameter initialization and optimizers
# ---------------------------------------------------------------------------


def kaiming_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class SGD:
    """SGD with momentum and L2 weight decay folded into the velocity.

    v <- mu*v + g + wd*theta ; theta <- theta - lr*v. Gradients are zeroed
    after each step.
    """

    def __init__(self, params: Sequence[Tensor], lr: float, momentum: float = 0.0,
                 weight_decay: float = 0.0):
        if lr < 0:
            raise InputError(f"learning rate must be non-negative, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.values) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                raise UsageError(f"parameter {p.name or '<unnamed>'} has no gradient")
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.values
            v *= self.momentum
            v += g
            p.values -= self.lr * v
            p.zero_grad()


class Adam:
    """Adam with bias-corrected moments; gradients zeroed after each step."""

    def __init__(self, params: Sequence[Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        if lr < 0:
            raise InputError(f"learning rate must be non-negative, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                raise UsageError(f"parameter {p.name or '<unnamed>'} has no gradient")
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.values
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            p.zero_grad()


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.zero_grad()
