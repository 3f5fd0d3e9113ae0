"""Per-task training losses on the shared three-channel head.

Channel use differs by task: image tasks regress all three channels, dewarping
regresses the normalised backward map in channels 0-1, and binarisation reads
channel 0 as an ink logit. Sums are accumulated in float64.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from ..tasks import TaskKind
from .autograd import Tensor, add, constant, mul_scalar, note_kink


def l1_loss(out: Tensor, target, channels: slice = slice(None)) -> Tensor:
    sel = out.value[:, channels]
    target = np.asarray(target)
    if sel.shape != target.shape:
        raise ShapeMismatch(f"l1_loss: output {sel.shape} vs target {target.shape}")
    diff = sel.astype(np.float64) - target
    count = diff.size
    note_kink(np.sign(diff))
    loss = np.abs(diff).sum() / count

    def backward(g):
        gx = np.zeros_like(out.value)
        gx[:, channels] = (np.sign(diff) * (float(g) / count)).astype(out.value.dtype)
        return (gx,)

    return Tensor(np.float64(loss), (out,), backward)


def bce_logit_loss(out: Tensor, target, channel: int = 0) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(out[:, channel])`` against {0, 1}."""
    z = out.value[:, channel].astype(np.float64)
    y = np.asarray(target, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeMismatch(f"bce_logit_loss: logits {z.shape} vs target {y.shape}")
    count = z.size
    loss = (np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))).sum() / count
    sig = np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))

    def backward(g):
        gx = np.zeros_like(out.value)
        gx[:, channel] = ((sig - y) * (float(g) / count)).astype(out.value.dtype)
        return (gx,)

    return Tensor(np.float64(loss), (out,), backward)


def normalize_bm(bm: np.ndarray) -> np.ndarray:
    """``(H, W, 2)`` absolute (row, col) map -> ``(2, H, W)`` in [0, 1] units."""
    bm = np.asarray(bm, dtype=np.float64)
    h, w = bm.shape[:2]
    out = np.empty((2, h, w))
    out[0] = bm[..., 0] / max(h - 1, 1)
    out[1] = bm[..., 1] / max(w - 1, 1)
    return out


def denormalize_bm(planes: np.ndarray, h: int | None = None, w: int | None = None) -> np.ndarray:
    """Inverse of :func:`normalize_bm`; ``h, w`` give the source image extents."""
    planes = np.asarray(planes, dtype=np.float64)
    if h is None:
        h, w = planes.shape[1:]
    return np.stack([planes[0] * (h - 1), planes[1] * (w - 1)], axis=-1)


def output_base(task, fused: np.ndarray) -> np.ndarray:
    """What the head's raw output is added to, for a ``(B,6,h,w)`` fused input.

    Image tasks predict a correction to the input RGB and dewarping predicts
    an offset from the normalised identity map, so an untrained head starts
    near "leave the page as it is". The binarisation logit has no base.
    """
    task = TaskKind.parse(task)
    fused = np.asarray(fused)
    b, _, h, w = fused.shape
    base = np.zeros((b, 3, h, w), dtype=fused.dtype)
    if task is TaskKind.DEWARP:
        rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        base[:, 0] = rows / max(h - 1, 1)
        base[:, 1] = cols / max(w - 1, 1)
    elif task is not TaskKind.BINARIZE:
        base[:] = fused[:, 3:6]
    return base


# Backward-map displacements are a few percent of the page while the other
# tasks need corrections near unit scale; scaling keeps the shared head's
# output magnitudes comparable across tasks.
OUTPUT_SCALE = {TaskKind.DEWARP: 0.1}


def compose_output(task, head: Tensor, fused: np.ndarray) -> Tensor:
    """Task output = per-task scale * raw head output + :func:`output_base`."""
    task = TaskKind.parse(task)
    scale = OUTPUT_SCALE.get(task, 1.0)
    if scale != 1.0:
        head = mul_scalar(head, scale)
    return add(head, constant(output_base(task, fused).astype(head.value.dtype)))


def task_loss(task, out: Tensor, target) -> Tensor:
    """``target`` is batched: ``(B,3,h,w)`` images, ``(B,2,h,w)`` normalised
    backward maps for dewarping, or ``(B,h,w)`` ink maps for binarisation."""
    task = TaskKind.parse(task)
    if out.value.ndim != 4 or out.shape[1] != 3:
        raise ShapeMismatch(f"task_loss: expected output (B,3,h,w), got {out.shape}")
    if task is TaskKind.DEWARP:
        return l1_loss(out, target, slice(0, 2))
    if task is TaskKind.BINARIZE:
        return bce_logit_loss(out, target, 0)
    return l1_loss(out, target)
