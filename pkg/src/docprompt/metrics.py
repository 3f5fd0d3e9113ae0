"""Evaluation metrics for the five restoration tasks.

=============  =====================
task           reported metrics
=============  =====================
dewarp         MSSSIM, LD, AD
deshadow       SSIM, PSNR
appearance     SSIM, PSNR
deblur         SSIM, PSNR
binarize       FM, pFM, PSNR
=============  =====================

LD and AD are computed from a dense flow estimated by pyramidal block
matching, so their absolute values are only comparable with each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import imgproc
from .errors import DegenerateInput, EmptyList, ShapeMismatch
from .tasks import TaskKind

PSNR_CAP = 99.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
EVAL_LONG_SIDE = 512
FLOW_BORDER = 8

TASK_METRICS = {
    TaskKind.DEWARP: ("MSSSIM", "LD", "AD"),
    TaskKind.DESHADOW: ("SSIM", "PSNR"),
    TaskKind.APPEARANCE: ("SSIM", "PSNR"),
    TaskKind.DEBLUR: ("SSIM", "PSNR"),
    TaskKind.BINARIZE: ("FM", "pFM", "PSNR"),
}


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    a, b = _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


# -- structural similarity ------------------------------------------------------

def _ssim_kernel(n: int) -> np.ndarray:
    x = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    k = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _filter_valid(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    r = len(k) // 2
    y = ndimage.correlate1d(x, k, axis=0, mode="reflect")
    y = ndimage.correlate1d(y, k, axis=1, mode="reflect")
    return y[r : x.shape[0] - r, r : x.shape[1] - r]


def _ssim_terms(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Mean SSIM map and mean contrast-structure map of two gray images."""
    n = min(SSIM_WINDOW, x.shape[0], x.shape[1])
    if n % 2 == 0:
        n -= 1
    k = _ssim_kernel(n)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    mx, my = _filter_valid(x, k), _filter_valid(y, k)
    sxx = _filter_valid(x * x, k) - mx * mx
    syy = _filter_valid(y * y, k) - my * my
    sxy = _filter_valid(x * y, k) - mx * my
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ssim(a, b) -> float:
    """Gaussian-window SSIM on the luma of both images, averaged over valid pixels."""
    a, b = _same_shape(a, b)
    return _ssim_terms(imgproc.to_grayscale(a), imgproc.to_grayscale(b))[0]


def ms_ssim_scales(h: int, w: int) -> int:
    """Number of usable scales: the coarsest level must still hold an 11x11 window."""
    m = min(h, w)
    scales = 1
    while scales < len(MS_SSIM_WEIGHTS) and m // (2 ** scales) >= SSIM_WINDOW:
        scales += 1
    return scales


def _pool2(x: np.ndarray) -> np.ndarray:
    """Gaussian prefilter then 2x2 average pooling."""
    x = imgproc.gaussian_blur(x, 1.0)
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(a, b, return_scales: bool = False):
    """Multi-scale SSIM with the five standard exponents.

    Images whose short side is below 176 px use fewer scales with the leading
    exponents renormalised to sum to one; ``return_scales=True`` also returns
    the number of scales used.
    """
    a, b = _same_shape(a, b)
    x, y = imgproc.to_grayscale(a), imgproc.to_grayscale(b)
    scales = ms_ssim_scales(*x.shape)
    weights = np.array(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    value = 1.0
    for i in range(scales):
        full, cs = _ssim_terms(x, y)
        term = full if i == scales - 1 else cs
        value *= max(term, 0.0) ** weights[i]
        if i < scales - 1:
            x, y = _pool2(x), _pool2(y)
    value = float(value)
    return (value, scales) if return_scales else value


# -- binarization -------------------------------------------------------------------

def _confusion(pred, gt):
    p = np.asarray(pred) != 0
    g = np.asarray(gt) != 0
    if p.shape != g.shape:
        raise ShapeMismatch(f"shapes differ: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return tp, fp, fn


def _f(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def f_measure(pred, gt) -> tuple[float, float, float]:
    """Return ``(FM, precision, recall)``; empty denominators count as perfect."""
    tp, fp, fn = _confusion(pred, gt)
    precision = 1.0 if fp == 0 else tp / (tp + fp)
    recall = 1.0 if fn == 0 else tp / (tp + fn)
    return _f(precision, recall), precision, recall


def pseudo_f_measure(pred, gt) -> float:
    """F-measure with recall measured against the skeleton of the ground truth."""
    _, precision, _ = f_measure(pred, gt)
    skel = imgproc.skeletonize(gt)
    n_skel = int(np.count_nonzero(skel))
    if n_skel == 0:
        raise DegenerateInput("ground truth has an empty skeleton")
    hit = int(np.count_nonzero((np.asarray(pred) != 0) & (skel != 0)))
    return _f(precision, hit / n_skel)


# -- dense flow, LD and AD ------------------------------------------------------------

def _candidates(search: int) -> np.ndarray:
    d = np.arange(-search, search + 1)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    cand = np.stack([dy.ravel(), dx.ravel()], axis=1)
    order = np.lexsort((cand[:, 1], cand[:, 0], np.abs(cand).sum(1)))
    return cand[order]


def _block_match(a: np.ndarray, b: np.ndarray, init: np.ndarray, block: int, search: int) -> np.ndarray:
    """Integer displacement per block minimising SAD within ``init +- search``.

    ``a`` is tiled into ``block x block`` tiles (``init`` has one entry per
    tile); ties go to the candidate nearest ``init``.
    """
    nby, nbx = init.shape[:2]
    pad = search + int(np.abs(init).max(initial=0)) + 1
    bp = np.pad(b, pad, mode="edge")
    tiles = a[: nby * block, : nbx * block].reshape(nby, block, nbx, block).transpose(0, 2, 1, 3)
    ys = (np.arange(nby) * block)[:, None] + init[:, :, 0] + pad - search
    xs = (np.arange(nbx) * block)[None, :] + init[:, :, 1] + pad - search
    span = np.arange(block + 2 * search)
    regions = bp[(ys[:, :, None, None] + span[None, None, :, None]),
                 (xs[:, :, None, None] + span[None, None, None, :])]
    best = np.full((nby, nbx), np.inf)
    out = init.copy()
    for dy, dx in _candidates(search):
        r, c = dy + search, dx + search
        sad = np.abs(regions[:, :, r : r + block, c : c + block] - tiles).sum(axis=(2, 3))
        better = sad < best
        best = np.where(better, sad, best)
        out[better] = init[better] + (dy, dx)
    return out


def _blocks_to_dense(bflow: np.ndarray, h: int, w: int, block: int) -> np.ndarray:
    """Bilinear interpolation of per-block flow placed at block centres."""
    nby, nbx = bflow.shape[:2]
    rows = (np.arange(h) - (block - 1) / 2.0) / block
    cols = (np.arange(w) - (block - 1) / 2.0) / block
    rr, cc = np.meshgrid(np.clip(rows, 0, nby - 1), np.clip(cols, 0, nbx - 1), indexing="ij")
    return imgproc.bilinear_sample(bflow.astype(np.float64), rr, cc)


def dense_flow(a, b, block: int = 8, search: int = 10, pyramid: int = 3) -> np.ndarray:
    """Per-pixel (dy, dx) such that ``b[p + flow(p)]`` matches ``a[p]``."""
    a, b = _same_shape(a, b)
    a, b = imgproc.to_grayscale(a), imgproc.to_grayscale(b)
    pa, pb = [a], [b]
    for _ in range(pyramid - 1):
        if min(pa[-1].shape) < 4 * block:
            break
        pa.append(_pool2(pa[-1]))
        pb.append(_pool2(pb[-1]))
    dense = None
    for la, lb in zip(reversed(pa), reversed(pb)):
        h, w = la.shape
        nby, nbx = max(1, h // block), max(1, w // block)
        if dense is None:
            init = np.zeros((nby, nbx, 2), dtype=np.int64)
        else:
            cy = (np.arange(nby) * block + (block - 1) / 2.0) / 2.0
            cx = (np.arange(nbx) * block + (block - 1) / 2.0) / 2.0
            ry, rx = np.meshgrid(np.clip(cy, 0, dense.shape[0] - 1), np.clip(cx, 0, dense.shape[1] - 1), indexing="ij")
            init = np.rint(2.0 * imgproc.bilinear_sample(dense, ry, rx)).astype(np.int64)
        if h < block or w < block:
            bflow = init
        else:
            bflow = _block_match(la, lb, init, block, search)
        dense = _blocks_to_dense(bflow, h, w, block)
    return dense


def _eval_size(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    f = EVAL_LONG_SIDE / max(h, w)
    h2, w2 = max(1, int(round(h * f))), max(1, int(round(w * f)))
    return imgproc.resize_bilinear(img, h2, w2)


def _interior(x: np.ndarray) -> np.ndarray:
    b = FLOW_BORDER
    if x.shape[0] > 2 * b and x.shape[1] > 2 * b:
        return x[b:-b, b:-b]
    return x


def local_distortion(dewarped, gt, flow: np.ndarray | None = None) -> float:
    """Mean flow magnitude (pixels at the 512-px evaluation scale), border excluded."""
    if flow is None:
        a, b = _same_shape(dewarped, gt)
        flow = dense_flow(_eval_size(a), _eval_size(b))
    return float(np.mean(np.hypot(*np.moveaxis(_interior(flow), 2, 0))))


def align_distortion_from_flow(flow: np.ndarray, gt_gray: np.ndarray, remove_affine: bool = True) -> float:
    """Texture-weighted residual flow magnitude over the image diagonal."""
    h, w = flow.shape[:2]
    g = _interior(imgproc.sobel_gradient(gt_gray))
    f = _interior(flow)
    total = g.sum()
    if total <= 0:
        return 0.0
    wts = g / total
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    rows, cols = _interior(rows), _interior(cols)
    resid = f.reshape(-1, 2)
    if remove_affine:
        design = np.stack([rows.ravel(), cols.ravel(), np.ones(rows.size)], axis=1)
        sw = np.sqrt(wts.ravel())[:, None]
        coef, *_ = np.linalg.lstsq(design * sw, resid * sw, rcond=None)
        resid = resid - design @ coef
    mag = np.hypot(resid[:, 0], resid[:, 1])
    return float(np.sum(wts.ravel() * mag) / math.hypot(h, w))


def align_distortion(dewarped, gt, flow: np.ndarray | None = None) -> float:
    a, b = _same_shape(dewarped, gt)
    gt_e = _eval_size(b)
    if flow is None:
        flow = dense_flow(_eval_size(a), gt_e)
    return align_distortion_from_flow(flow, imgproc.to_grayscale(gt_e))


def dewarp_metrics(dewarped, gt) -> dict[str, float]:
    """MS-SSIM, LD and AD sharing one flow estimate."""
    a, b = _same_shape(dewarped, gt)
    ae, be = _eval_size(a), _eval_size(b)
    flow = dense_flow(ae, be)
    return {
        "MSSSIM": ms_ssim(a, b),
        "LD": local_distortion(ae, be, flow=flow),
        "AD": align_distortion_from_flow(flow, imgproc.to_grayscale(be)),
    }


# -- reports ---------------------------------------------------------------------

@dataclass
class MetricReport:
    task: TaskKind
    metrics: dict[str, float]
    count: int
    flags: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        return "".join(f"{k}\t{v:.6f}\n" for k, v in self.metrics.items())

    @staticmethod
    def parse(text: str) -> dict[str, float]:
        out = {}
        for line in text.splitlines():
            if line.strip() and not line.startswith("#"):
                k, v = line.split("\t")
                out[k] = float(v)
        return out


def evaluate(task, outputs, targets, inputs=None) -> MetricReport:
    """Average the task's metric set over matched (output, target) pairs.

    For dewarping ``outputs`` are backward maps, ``inputs`` the distorted
    images they index, and ``targets`` the flat ground-truth pages. For
    binarization outputs and targets are ink maps; PSNR is taken on the 0/1
    maps. Other tasks compare restored images with clean images.
    """
    task = TaskKind.parse(task)
    outputs, targets = list(outputs), list(targets)
    if not outputs:
        raise EmptyList("evaluate needs at least one sample")
    if len(outputs) != len(targets):
        raise ShapeMismatch(f"{len(outputs)} outputs vs {len(targets)} targets")
    if task is TaskKind.DEWARP and (inputs is None or len(inputs) != len(outputs)):
        raise ShapeMismatch("dewarp evaluation needs one input image per backward map")
    rows = []
    flags = []
    for i, (out, tgt) in enumerate(zip(outputs, targets)):
        if task is TaskKind.DEWARP:
            dewarped = imgproc.remap_bilinear(inputs[i], out)
            m = dewarp_metrics(dewarped, tgt)
            if ms_ssim_scales(*np.shape(tgt)[:2]) < len(MS_SSIM_WEIGHTS):
                flags.append(f"sample {i}: MS-SSIM computed with reduced scales")
        elif task is TaskKind.BINARIZE:
            fm, _, _ = f_measure(out, tgt)
            m = {"FM": fm, "pFM": pseudo_f_measure(out, tgt),
                 "PSNR": psnr((np.asarray(out) != 0).astype(float), (np.asarray(tgt) != 0).astype(float))}
        else:
            m = {"SSIM": ssim(out, tgt), "PSNR": psnr(out, tgt)}
        rows.append(m)
    names = TASK_METRICS[task]
    means = {k: float(sum(r[k] for r in rows) / len(rows)) for k in names}
    return MetricReport(task, means, len(rows), flags)
