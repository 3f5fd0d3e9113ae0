"""A small reverse-mode autograd over numpy arrays.

Only what the restoration network needs is implemented. Spatial ops work on
channels-last ``(N, H, W, C)`` arrays, which turns every convolution into a
tall-skinny matmul that BLAS handles well. Every op keeps the dtype of its
inputs, so the same graph runs in float32 for training and in float64 for
finite-difference checks.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


# When a list is installed here, piecewise-linear ops append their branch
# pattern so a finite-difference checker can tell when a step crossed a kink.
_kink_trace: list | None = None


class record_kinks:
    """Context manager collecting branch patterns of relu, leaky_relu and L1."""

    def __enter__(self):
        global _kink_trace
        self.patterns = []
        self._prev = _kink_trace
        _kink_trace = self.patterns
        return self.patterns

    def __exit__(self, *exc):
        global _kink_trace
        _kink_trace = self._prev
        return False


def note_kink(pattern: np.ndarray) -> None:
    if _kink_trace is not None:
        _kink_trace.append(pattern.copy())


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=""):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.value.dtype}, name={self.name!r})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf's ``grad``."""
        if grad is None:
            if self.value.size != 1:
                raise ShapeMismatch("backward() without a gradient needs a scalar")
            grad = np.ones_like(self.value)
        order = _topo_order(self)
        grads = {id(self): np.asarray(grad, dtype=self.value.dtype)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topo_order(root: Tensor) -> list[Tensor]:
    # Iterative DFS; returns nodes with every consumer before its inputs.
    seen, order = set(), []
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order[::-1]


def parameter(value, name="") -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def constant(value) -> Tensor:
    return Tensor(value)


def _check_rank(x: Tensor, op: str, rank: int = 4):
    if x.value.ndim != rank:
        raise ShapeMismatch(f"{op}: expected rank {rank}, got shape {x.shape}")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           pad: int | None = None) -> Tensor:
    """2-D cross-correlation of an NHWC input with a ``(k, k, Cin, Cout)`` kernel.

    ``pad`` defaults to ``k // 2`` (same padding for odd kernels). The k*k
    shifted views of the zero-padded input are stacked into one
    ``(N*Ho*Wo, k*k*Cin)`` matrix, so the layer is a single matmul.
    """
    _check_rank(x, "conv2d")
    _check_rank(w, "conv2d weight")
    n, h, wd, cin = x.shape
    k, k2, cin_w, cout = w.shape
    if cin_w != cin or k != k2:
        raise ShapeMismatch(f"conv2d: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.shape != (cout,):
        raise ShapeMismatch(f"conv2d: bias shape {b.shape}, expected ({cout},)")
    if pad is None:
        pad = k // 2
    xp = np.pad(x.value, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x.value
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeMismatch(f"conv2d: input {x.shape} too small for kernel {k}")

    cols = np.empty((n, ho, wo, k * k, cin), dtype=x.value.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i * k + j] = xp[:, i : i + stride * ho : stride, j : j + stride * wo : stride]
    cols = cols.reshape(n * ho * wo, k * k * cin)
    w2 = w.value.reshape(k * k * cin, cout)
    out = cols @ w2
    if b is not None:
        out += b.value
    out = out.reshape(n, ho, wo, cout)

    def backward(g):
        g2 = g.reshape(n * ho * wo, cout)
        gw = (cols.T @ g2).reshape(w.shape) if w.requires_grad else None
        gb = g2.sum(axis=0) if b is not None and b.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ w2.T).reshape(n, ho, wo, k * k, cin)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, :, :, i * k + j]
            gx = gxp[:, pad : pad + h, pad : pad + wd] if pad else gxp
        return gx, gw, gb

    if b is None:
        return Tensor(out, (x, w), lambda g: backward(g)[:2])
    return Tensor(out, (x, w, b), backward)


def relu(x: Tensor) -> Tensor:
    # Subgradient at exactly 0 is taken as 0.
    pos = x.value > 0
    note_kink(pos)
    return Tensor(np.where(pos, x.value, 0).astype(x.value.dtype), (x,), lambda g: (g * pos,))


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    pos = x.value > 0
    note_kink(pos)
    scale = np.where(pos, 1.0, slope).astype(x.value.dtype)
    return Tensor(x.value * scale, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.value)
    return Tensor(s, (x,), lambda g: (g * s * (1 - s),))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1 / (1 + e), e / (1 + e)).astype(v.dtype)


def avgpool2(x: Tensor) -> Tensor:
    _check_rank(x, "avgpool2")
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"avgpool2: spatial extents {h}x{w} must be even")
    out = x.value.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def backward(g):
        gx = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * x.value.dtype.type(0.25)
        return (gx,)

    return Tensor(out, (x,), backward)


def upsample_nearest2(x: Tensor) -> Tensor:
    _check_rank(x, "upsample_nearest2")
    n, h, w, c = x.shape
    out = np.repeat(np.repeat(x.value, 2, axis=1), 2, axis=2)
    return Tensor(out, (x,), lambda g: (g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)),))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _check_rank(a, "concat_channels")
    _check_rank(b, "concat_channels")
    if a.shape[:3] != b.shape[:3]:
        raise ShapeMismatch(f"concat_channels: {a.shape} vs {b.shape}")
    ca = a.shape[3]
    out = np.concatenate([a.value, b.value], axis=3)
    return Tensor(out, (a, b), lambda g: (g[..., :ca], g[..., ca:]))


def to_channels_last(x: Tensor) -> Tensor:
    """NCHW -> NHWC."""
    _check_rank(x, "to_channels_last")
    return Tensor(np.ascontiguousarray(x.value.transpose(0, 2, 3, 1)), (x,),
                  lambda g: (g.transpose(0, 3, 1, 2),))


def to_channels_first(x: Tensor) -> Tensor:
    """NHWC -> NCHW."""
    _check_rank(x, "to_channels_first")
    return Tensor(np.ascontiguousarray(x.value.transpose(0, 3, 1, 2)), (x,),
                  lambda g: (g.transpose(0, 2, 3, 1),))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")
    return Tensor(a.value + b.value, (a, b), lambda g: (g, g))


def mul_scalar(x: Tensor, s: float) -> Tensor:
    s = x.value.dtype.type(s)
    return Tensor(x.value * s, (x,), lambda g: (g * s,))
